use std::path::Path;

use rayon::prelude::*;
use rust_decimal::prelude::ToPrimitive;
use serde::Serialize;
use serde_json::json;

use macdlab_core::analysis::{detect_oscillation, find_divergences, DivergenceEvent};
use macdlab_core::backtest::{
    daily_actions, execute, prepare_signals, run_backtest_with_capital, StrategyMode, TradeLog,
};
use macdlab_core::indicators::{compute_indicators, MacdParams};
use macdlab_core::ingest::{clean, load_csv, write_csv, PriceSeries};
use macdlab_core::metrics::{compute_metrics, MetricsReport, RiskConfig, REPORT_COLUMNS};
use macdlab_core::optimizer::{optimize_with, GaConfig, OptimizeResult};
use macdlab_core::wavelet::denoise_dif;

use crate::output::{opt, strip_out, OutputDir, RunManifest};
use crate::{BacktestArgs, CliError, Command, CommonArgs, CompareArgs, MoneyArgs, OptimizeArgs, SeriesArgs};

pub(crate) fn dispatch(command: Command, argv: &[String]) -> Result<(), CliError> {
    match command {
        Command::Ingest(a) => ingest(a, argv),
        Command::Analyze(a) => analyze(a, argv),
        Command::Denoise(a) => denoise(a, argv),
        Command::Backtest(a) => backtest(a, argv),
        Command::Compare(a) => compare(a, argv),
        Command::Optimize(a) => optimize(a, argv),
    }
}

fn manifest(
    command: &str,
    argv: &[String],
    common: &CommonArgs,
    config: serde_json::Value,
    seed: Option<u64>,
) -> RunManifest {
    RunManifest {
        tool: "macdlab",
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        argv: strip_out(argv),
        input: common.data.display().to_string(),
        config,
        seed,
        artifacts: Vec::new(),
    }
}

fn load(path: &Path) -> Result<Vec<PriceSeries>, CliError> {
    load_csv(path).map_err(CliError::data)
}

/// Cleaned series for `code`, or for the first instrument in the file.
fn load_one(path: &Path, code: Option<&str>) -> Result<PriceSeries, CliError> {
    let all = load(path)?;
    let raw = match code {
        Some(c) => all
            .into_iter()
            .find(|s| s.code == c)
            .ok_or_else(|| CliError::Data(format!("instrument `{c}` not found in {}", path.display())))?,
        None => all
            .into_iter()
            .next()
            .ok_or_else(|| CliError::Data(format!("{} contains no rows", path.display())))?,
    };
    clean(&raw).map_err(CliError::data)
}

fn risk(money: &MoneyArgs) -> Result<RiskConfig, CliError> {
    if !money.risk_free.is_finite() {
        return Err(CliError::Usage("--risk-free must be a finite percentage".into()));
    }
    if !(money.capital.is_finite() && money.capital > 0.0) {
        return Err(CliError::Usage("--capital must be positive".into()));
    }
    Ok(RiskConfig {
        risk_free_rate: money.risk_free,
        ..RiskConfig::default()
    })
}

fn date(series: &PriceSeries, i: usize) -> String {
    series.dates[i].to_string()
}

fn ingest(args: CommonArgs, argv: &[String]) -> Result<(), CliError> {
    let all = load(&args.data)?;
    #[derive(Serialize)]
    struct Summary {
        code: String,
        rows: usize,
        kept: usize,
        usable: bool,
        first_date: Option<String>,
        last_date: Option<String>,
    }
    let mut cleaned = Vec::new();
    let mut summary = Vec::new();
    for s in &all {
        let result = clean(s);
        let kept = result.as_ref().map(PriceSeries::len).unwrap_or(0);
        let (first_date, last_date) = match &result {
            Ok(c) if !c.is_empty() => (Some(date(c, 0)), Some(date(c, c.len() - 1))),
            _ => (None, None),
        };
        if let Err(e) = &result {
            eprintln!("warning: {e}");
        }
        summary.push(Summary {
            code: s.code.clone(),
            rows: s.len(),
            kept,
            usable: result.is_ok(),
            first_date,
            last_date,
        });
        if let Ok(c) = result {
            cleaned.push(c);
        }
    }
    let mut out = OutputDir::create(&args.out)?;
    let mut buf = Vec::new();
    write_csv(&mut buf, &cleaned).map_err(CliError::data)?;
    out.bytes("cleaned.csv", &buf)?;
    out.json("ingest_summary.json", &summary)?;
    out.finish(manifest("ingest", argv, &args, json!({}), None))?;
    Ok(())
}

#[derive(Serialize)]
struct DatedEvent<'a> {
    #[serde(flatten)]
    event: &'a DivergenceEvent,
    current_date: String,
    previous_date: String,
    confirmation_date: Option<String>,
}

fn dated_events<'a>(series: &PriceSeries, events: &'a [DivergenceEvent]) -> Vec<DatedEvent<'a>> {
    events
        .iter()
        .map(|e| DatedEvent {
            event: e,
            current_date: date(series, e.current_extreme_index),
            previous_date: date(series, e.previous_extreme_index),
            confirmation_date: series.dates.get(e.confirmation_index()).map(|d| d.to_string()),
        })
        .collect()
}

fn analyze(args: SeriesArgs, argv: &[String]) -> Result<(), CliError> {
    let series = load_one(&args.common.data, args.code.as_deref())?;
    let mask = detect_oscillation(&series).map_err(CliError::data)?;
    let ind = compute_indicators(&series, args.params).map_err(CliError::data)?;
    let events = find_divergences(&series.closes, ind.macd()).map_err(CliError::data)?;

    let mut out = OutputDir::create(&args.common.out)?;
    out.csv(
        "oscillation.csv",
        &["date", "close", "mean10", "inband", "pairflag", "oscillation", "macd"],
        (0..series.len()).map(|i| {
            let mean = mask.mean10[i];
            vec![
                date(&series, i),
                series.closes[i].to_string(),
                if mean.is_nan() { String::new() } else { mean.to_string() },
                u8::from(mask.inband[i]).to_string(),
                u8::from(mask.pairflag[i]).to_string(),
                u8::from(mask.mask[i]).to_string(),
                ind.macd()[i].to_string(),
            ]
        }),
    )?;
    out.json("divergences.json", &dated_events(&series, &events))?;
    let config = json!({ "code": series.code, "params": args.params.to_string() });
    out.finish(manifest("analyze", argv, &args.common, config, None))?;
    Ok(())
}

fn denoise(args: SeriesArgs, argv: &[String]) -> Result<(), CliError> {
    let series = load_one(&args.common.data, args.code.as_deref())?;
    let ind = compute_indicators(&series, args.params).map_err(CliError::data)?;
    let smooth = denoise_dif(ind.dif()).map_err(CliError::data)?;
    let mut out = OutputDir::create(&args.common.out)?;
    out.csv(
        "denoise.csv",
        &["date", "dif", "denoised_dif"],
        (0..series.len()).map(|i| vec![date(&series, i), ind.dif()[i].to_string(), smooth[i].to_string()]),
    )?;
    let config = json!({ "code": series.code, "params": args.params.to_string() });
    out.finish(manifest("denoise", argv, &args.common, config, None))?;
    Ok(())
}

fn metrics_json(name: &str, report: &MetricsReport) -> serde_json::Value {
    let mut v = serde_json::to_value(report).expect("metrics serialize");
    v["name"] = json!(name);
    v
}

fn backtest(args: BacktestArgs, argv: &[String]) -> Result<(), CliError> {
    let cfg = risk(&args.money)?;
    let series = load_one(&args.series.common.data, args.series.code.as_deref())?;
    let prepared = prepare_signals(&series, args.series.params, args.mode).map_err(CliError::data)?;
    let actions = daily_actions(&prepared);
    let log = execute(&series.closes, &actions, args.money.capital).map_err(CliError::data)?;
    let report = compute_metrics(&log, series.len(), &cfg).map_err(CliError::data)?;

    let denoised = match &prepared.denoised_dif {
        Some(d) => Some(d.clone()),
        None => denoise_dif(prepared.raw.dif()).ok(),
    };
    let equity = log.equity_f64();

    let mut out = OutputDir::create(&args.series.common.out)?;
    out.json("metrics.json", &metrics_json(&series.code, &report))?;
    out.csv("metrics.csv", &REPORT_COLUMNS, [report.csv_row(&series.code)])?;
    out.json("trades.json", &log)?;
    out.csv(
        "equity.csv",
        &["date", "close", "equity"],
        (0..series.len()).map(|i| vec![date(&series, i), series.closes[i].to_string(), equity[i].to_string()]),
    )?;
    out.csv(
        "chart.csv",
        &["date", "close", "dif", "denoised_dif", "dea", "macd", "signal"],
        (0..series.len()).map(|i| {
            vec![
                date(&series, i),
                series.closes[i].to_string(),
                prepared.raw.dif()[i].to_string(),
                opt(denoised.as_ref().map(|d| d[i])),
                prepared.trading.dea()[i].to_string(),
                prepared.trading.macd()[i].to_string(),
                actions[i].0.as_str().to_string(),
            ]
        }),
    )?;
    if !prepared.divergences.is_empty() {
        out.json("divergences.json", &dated_events(&series, &prepared.divergences))?;
    }
    let config = json!({
        "code": series.code,
        "mode": args.mode.as_str(),
        "params": args.series.params.to_string(),
        "capital": args.money.capital,
        "risk_free": args.money.risk_free,
    });
    out.finish(manifest("backtest", argv, &args.series.common, config, None))?;
    Ok(())
}

fn compare(args: CompareArgs, argv: &[String]) -> Result<(), CliError> {
    let cfg = risk(&args.money)?;
    let all = load(&args.common.data)?;
    let params = args.params;
    let capital = args.money.capital;

    let rows: Vec<Vec<String>> = all
        .par_iter()
        .map(|raw| {
            let cleaned = clean(raw);
            StrategyMode::ALL
                .iter()
                .map(|&mode| {
                    let outcome = cleaned.as_ref().map_err(|e| ("unusable", e.to_string())).and_then(|s| {
                        run_backtest_with_capital(s, params, mode, capital)
                            .map_err(|e| e.to_string())
                            .and_then(|log| compute_metrics(&log, s.len(), &cfg).map_err(|e| e.to_string()))
                            .map_err(|e| ("error", e))
                    });
                    let mut row = vec![raw.code.clone(), mode.as_str().to_string()];
                    match outcome {
                        Ok(report) => {
                            row.push("ok".into());
                            row.extend(report.csv_row("").into_iter().skip(1));
                        }
                        Err((status, reason)) => {
                            eprintln!("warning: {} ({}): {reason}", raw.code, mode);
                            row.push(status.into());
                            row.extend(std::iter::repeat_n(String::new(), REPORT_COLUMNS.len() - 1));
                        }
                    }
                    row
                })
                .collect::<Vec<_>>()
        })
        .flatten_iter()
        .collect();

    let mut header = vec!["name", "mode", "status"];
    header.extend(&REPORT_COLUMNS[1..]);
    let mut out = OutputDir::create(&args.common.out)?;
    out.csv("comparison.csv", &header, rows)?;
    let config = json!({
        "params": params.to_string(),
        "capital": capital,
        "risk_free": args.money.risk_free,
    });
    out.finish(manifest("compare", argv, &args.common, config, None))?;
    Ok(())
}

fn optimize(args: OptimizeArgs, argv: &[String]) -> Result<(), CliError> {
    let risk_cfg = risk(&args.money)?;
    let ga = GaConfig {
        population_size: args.pop,
        crossover_rate: args.pc,
        mutation_rate: args.pm,
        convergence_patience: args.patience,
        max_generations: args.max_gen,
        seed: args.seed,
        ..GaConfig::default()
    };
    ga.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let series = load_one(&args.common.data, args.code.as_deref())?;
    let mode = args.mode;
    let capital = args.money.capital;
    let longest = MacdParams {
        fast: ga.bounds[0].min,
        slow: ga.bounds[1].max,
        signal: ga.bounds[2].max,
    };
    let required = macdlab_core::backtest::required_length(longest, mode);
    if series.len() < required {
        return Err(CliError::Data(format!(
            "series too short: {} closes, need at least {required}",
            series.len()
        )));
    }

    let result: OptimizeResult = optimize_with(&ga, |genes| {
        let params = MacdParams::new(genes[0], genes[1], genes[2])?;
        let log = run_backtest_with_capital(&series, params, mode, capital)?;
        Ok(log.net.to_f64().unwrap_or(f64::NAN))
    })
    .map_err(CliError::data)?;

    let [fast, slow, signal] = result.best_genes;
    let best = MacdParams::new(fast, slow, signal).map_err(CliError::data)?;
    let default = MacdParams::default();
    let evaluate = |p: MacdParams| -> Result<(TradeLog, MetricsReport), CliError> {
        let log = run_backtest_with_capital(&series, p, mode, capital).map_err(CliError::data)?;
        let report = compute_metrics(&log, series.len(), &risk_cfg).map_err(CliError::data)?;
        Ok((log, report))
    };
    let (_, before) = evaluate(default)?;
    let (_, after) = evaluate(best)?;

    let mut out = OutputDir::create(&args.common.out)?;
    out.json(
        "best.json",
        &json!({
            "code": series.code,
            "mode": mode.as_str(),
            "params": [fast, slow, signal],
            "fitness": result.best_fitness,
            "generations": result.generations,
            "converged": result.converged,
        }),
    )?;
    out.csv(
        "history.csv",
        &[
            "generation",
            "best_fitness",
            "mean_fitness",
            "elites",
            "best_fast",
            "best_slow",
            "best_signal",
        ],
        result.history.iter().map(|h| {
            vec![
                h.generation.to_string(),
                h.best_fitness.to_string(),
                h.mean_fitness.to_string(),
                h.elites.to_string(),
                h.best_genes[0].to_string(),
                h.best_genes[1].to_string(),
                h.best_genes[2].to_string(),
            ]
        }),
    )?;
    let b = before.csv_row("");
    let a = after.csv_row("");
    out.csv(
        "params_comparison.csv",
        &["metric", "default", "optimized"],
        std::iter::once(vec!["params".to_string(), format!("[{default}]"), format!("[{best}]")]).chain(
            REPORT_COLUMNS[1..]
                .iter()
                .enumerate()
                .map(|(i, name)| vec![name.to_string(), b[i + 1].clone(), a[i + 1].clone()]),
        ),
    )?;
    let config = json!({
        "code": series.code,
        "mode": mode.as_str(),
        "population_size": ga.population_size,
        "crossover_rate": ga.crossover_rate,
        "mutation_rate": ga.mutation_rate,
        "convergence_patience": ga.convergence_patience,
        "max_generations": ga.max_generations,
        "bounds": ga.bounds,
        "capital": capital,
        "risk_free": args.money.risk_free,
    });
    out.finish(manifest("optimize", argv, &args.common, config, Some(args.seed)))?;
    Ok(())
}
