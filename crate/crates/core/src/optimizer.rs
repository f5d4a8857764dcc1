//! Genetic search over integer MACD period triples.
//!
//! Each generation applies softmax selection with elitism, single-point
//! crossover, uniform-reset mutation and a repair step that restores
//! `fast < slow`. Fitness evaluation consumes no randomness and may run in
//! parallel; every random draw comes from a ChaCha stream keyed by
//! `(seed, generation, operator)`, so results do not depend on thread count.

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::backtest::{run_backtest, BacktestError, StrategyMode};
use crate::indicators::MacdParams;
use crate::ingest::PriceSeries;

pub type Genes = [usize; 3];

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("invalid GA configuration: {0}")]
    InvalidConfig(String),
    #[error("fitness evaluation failed: {0}")]
    Fitness(#[from] BacktestError),
}

/// Inclusive integer range of one gene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GeneBounds {
    pub min: usize,
    pub max: usize,
}

impl GeneBounds {
    pub const fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, v: usize) -> bool {
        (self.min..=self.max).contains(&v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaConfig {
    pub population_size: usize,
    /// Fast, slow and signal period ranges.
    pub bounds: [GeneBounds; 3],
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub convergence_patience: usize,
    pub max_generations: usize,
    pub seed: u64,
    /// Evaluate fitness on the rayon pool.
    pub parallel: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 510,
            bounds: [GeneBounds::new(5, 20), GeneBounds::new(20, 50), GeneBounds::new(5, 25)],
            crossover_rate: 0.8,
            mutation_rate: 0.1,
            convergence_patience: 8,
            max_generations: 200,
            seed: 0,
            parallel: true,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let fail = |msg: &str| Err(OptimizeError::InvalidConfig(msg.to_string()));
        if self.population_size < 2 {
            return fail("population_size must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return fail("crossover_rate must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return fail("mutation_rate must lie in [0, 1]");
        }
        if self.bounds.iter().any(|b| b.min > b.max || b.min < 1) {
            return fail("every gene range needs 1 <= min <= max");
        }
        if self.bounds[0].min >= self.bounds[1].max {
            return fail("fast and slow ranges admit no triple with fast < slow");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Individual {
    pub genes: Genes,
    pub fitness: Option<f64>,
}

impl Individual {
    pub fn new(genes: Genes) -> Self {
        Self { genes, fitness: None }
    }

    fn score(&self) -> f64 {
        self.fitness.expect("individual evaluated before use")
    }
}

#[derive(Debug, Clone)]
pub struct GaState {
    pub population: Vec<Individual>,
    pub fitness: Vec<f64>,
    pub prob: Vec<f64>,
    pub generation: usize,
    pub best: Individual,
    pub stale_generations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best_genes: Genes,
    /// Individuals carried over unchanged from the previous generation.
    pub elites: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeResult {
    pub best_genes: Genes,
    pub best_fitness: f64,
    pub generations: usize,
    pub converged: bool,
    pub history: Vec<GenerationStats>,
}

pub fn elite_count(population_size: usize) -> usize {
    (population_size / 10).max(1)
}

/// Softmax of fitness, shifted by the maximum.
pub fn selection_probabilities(fitness: &[f64]) -> Vec<f64> {
    let max = fitness.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = fitness.iter().map(|f| (f - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// Indices of the `count` fittest individuals, fittest first.
fn elite_indices(fitness: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
    order.truncate(count);
    order
}

/// Softmax roulette with replacement over the whole population followed by
/// the elites.
///
/// The last `elite_count` members of the result are the elites.
pub fn select<R: Rng>(state: &GaState, rng: &mut R) -> Vec<Individual> {
    let n = state.population.len();
    assert!(n > 0, "cannot select from an empty population");
    let elite = elite_count(n).min(n);
    let sampler = WeightedIndex::new(&state.prob).expect("softmax weights are positive");
    let mut next: Vec<Individual> = (0..n - elite).map(|_| state.population[sampler.sample(rng)]).collect();
    next.extend(
        elite_indices(&state.fitness, elite)
            .into_iter()
            .map(|i| state.population[i]),
    );
    next
}

/// Single-point crossover of consecutive pairs.
pub fn crossover<R: Rng>(population: &mut [Individual], pc: f64, rng: &mut R) {
    for pair in population.chunks_exact_mut(2) {
        if rng.gen::<f64>() < pc {
            let point = rng.gen_range(1..=2);
            let (left, right) = pair.split_at_mut(1);
            let (a, b) = (&mut left[0], &mut right[0]);
            for j in point..3 {
                std::mem::swap(&mut a.genes[j], &mut b.genes[j]);
            }
            a.fitness = None;
            b.fitness = None;
        }
    }
}

/// Redraws each gene uniformly within its range with probability `pm`.
pub fn mutate<R: Rng>(population: &mut [Individual], pm: f64, bounds: &[GeneBounds; 3], rng: &mut R) {
    for ind in population.iter_mut() {
        for (gene, b) in ind.genes.iter_mut().zip(bounds) {
            if rng.gen::<f64>() < pm {
                *gene = rng.gen_range(b.min..=b.max);
                ind.fitness = None;
            }
        }
    }
}

/// Restores `fast < slow` by raising the slow period, lowering the fast one
/// only when the slow range is exhausted.
pub fn repair(mut ind: Individual, bounds: &[GeneBounds; 3]) -> Individual {
    let [fast, slow, _] = &mut ind.genes;
    if *fast >= *slow {
        *fast = (*fast).min(bounds[0].max);
        *slow = (*slow).max(*fast + 1).min(bounds[1].max);
        if *fast >= *slow {
            *fast = *slow - 1;
        }
        ind.fitness = None;
    }
    ind
}

#[derive(Clone, Copy)]
enum Stream {
    Init = 0,
    Select = 1,
    Crossover = 2,
    Mutate = 3,
}

fn stream_rng(seed: u64, generation: usize, op: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(generation as u64 * 4 + op as u64);
    rng
}

fn evaluate<F>(population: &mut [Individual], fitness: &F, parallel: bool) -> Result<(), BacktestError>
where
    F: Fn(&Genes) -> Result<f64, BacktestError> + Sync,
{
    let eval = |ind: &mut Individual| -> Result<(), BacktestError> {
        if ind.fitness.is_none() {
            ind.fitness = Some(fitness(&ind.genes)?);
        }
        Ok(())
    };
    if parallel {
        population.par_iter_mut().try_for_each(eval)
    } else {
        population.iter_mut().try_for_each(eval)
    }
}

impl GaState {
    fn from_population(population: Vec<Individual>, generation: usize, previous: Option<&GaState>) -> Self {
        let fitness: Vec<f64> = population.iter().map(Individual::score).collect();
        let prob = selection_probabilities(&fitness);
        let leader = population[elite_indices(&fitness, 1)[0]];
        let (best, stale_generations) = match previous {
            Some(prev) if leader.score() <= prev.best.score() => (prev.best, prev.stale_generations + 1),
            _ => (leader, 0),
        };
        Self {
            population,
            fitness,
            prob,
            generation,
            best,
            stale_generations,
        }
    }

    fn stats(&self, elites: usize) -> GenerationStats {
        GenerationStats {
            generation: self.generation,
            best_fitness: self.best.score(),
            mean_fitness: self.fitness.iter().sum::<f64>() / self.fitness.len() as f64,
            best_genes: self.best.genes,
            elites,
        }
    }
}

/// Runs the GA against an arbitrary fitness function.
pub fn optimize_with<F>(cfg: &GaConfig, fitness: F) -> Result<OptimizeResult, OptimizeError>
where
    F: Fn(&Genes) -> Result<f64, BacktestError> + Sync,
{
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, 0, Stream::Init);
    let mut population: Vec<Individual> = (0..cfg.population_size)
        .map(|_| {
            let genes = [0, 1, 2].map(|i| rng.gen_range(cfg.bounds[i].min..=cfg.bounds[i].max));
            repair(Individual::new(genes), &cfg.bounds)
        })
        .collect();
    evaluate(&mut population, &fitness, cfg.parallel)?;
    let mut state = GaState::from_population(population, 0, None);
    let mut history = vec![state.stats(0)];
    let elites = elite_count(cfg.population_size);

    while state.generation < cfg.max_generations && state.stale_generations < cfg.convergence_patience {
        let generation = state.generation + 1;
        let mut next = select(&state, &mut stream_rng(cfg.seed, generation, Stream::Select));
        let offspring = cfg.population_size - elites;
        crossover(
            &mut next[..offspring],
            cfg.crossover_rate,
            &mut stream_rng(cfg.seed, generation, Stream::Crossover),
        );
        mutate(
            &mut next[..offspring],
            cfg.mutation_rate,
            &cfg.bounds,
            &mut stream_rng(cfg.seed, generation, Stream::Mutate),
        );
        for ind in &mut next[..offspring] {
            *ind = repair(*ind, &cfg.bounds);
        }
        evaluate(&mut next, &fitness, cfg.parallel)?;
        state = GaState::from_population(next, generation, Some(&state));
        history.push(state.stats(elites));
    }

    Ok(OptimizeResult {
        best_genes: state.best.genes,
        best_fitness: state.best.score(),
        generations: state.generation,
        converged: state.stale_generations >= cfg.convergence_patience,
        history,
    })
}

/// Net profit of a backtest with the given periods.
pub fn evaluate_fitness(genes: &Genes, prices: &PriceSeries, mode: StrategyMode) -> Result<f64, BacktestError> {
    let params = MacdParams::new(genes[0], genes[1], genes[2])?;
    let log = run_backtest(prices, params, mode)?;
    Ok(rust_decimal::prelude::ToPrimitive::to_f64(&log.net).unwrap_or(f64::NAN))
}

/// Searches MACD periods that maximize backtest profit on `prices`.
pub fn optimize(prices: &PriceSeries, mode: StrategyMode, cfg: &GaConfig) -> Result<OptimizeResult, OptimizeError> {
    cfg.validate()?;
    // fail once up front rather than on the first long slow period
    let longest = MacdParams {
        fast: cfg.bounds[0].min,
        slow: cfg.bounds[1].max,
        signal: cfg.bounds[2].max,
    };
    let required = crate::backtest::required_length(longest, mode);
    if prices.len() < required {
        return Err(BacktestError::TooShort {
            len: prices.len(),
            required,
        }
        .into());
    }
    optimize_with(cfg, |genes| evaluate_fitness(genes, prices, mode))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds() -> [GeneBounds; 3] {
        GaConfig::default().bounds
    }

    fn surrogate(g: &Genes) -> Result<f64, BacktestError> {
        let d = |a: usize, b: f64| a as f64 - b;
        Ok(-(d(g[0], 9.0).powi(2)) - d(g[1], 22.0).powi(2) - d(g[2], 25.0).powi(2))
    }

    fn state_with(fitness: Vec<f64>) -> GaState {
        let population = (0..fitness.len())
            .map(|i| Individual {
                genes: [5 + i % 10, 30, 9],
                fitness: Some(fitness[i]),
            })
            .collect();
        GaState::from_population(population, 0, None)
    }

    #[test]
    fn elite_sizing() {
        assert_eq!(elite_count(510), 51);
        assert_eq!(elite_count(5), 1);
        assert_eq!(elite_count(10), 1);
        assert_eq!(elite_count(2), 1);
    }

    #[test]
    fn uniform_probabilities_for_equal_fitness() {
        let p = selection_probabilities(&[3.0; 4]);
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn softmax_does_not_overflow() {
        let p = selection_probabilities(&[1_000_000.0, 0.0]);
        assert_eq!(p[0], 1.0);
        assert_eq!(p[1], 0.0);
    }

    #[test]
    fn selection_keeps_size_and_elite() {
        let mut fitness = vec![0.0; 20];
        fitness[7] = 50.0;
        let state = state_with(fitness);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let next = select(&state, &mut rng);
            assert_eq!(next.len(), 20);
            // elites sit at the tail, fittest first
            assert_eq!(next[20 - elite_count(20)], state.population[7]);
        }
    }

    #[test]
    fn crossover_point_one_and_two() {
        let a = Individual::new([1, 2, 3]);
        let b = Individual::new([4, 5, 6]);
        // find seeds that draw each point; the operator must produce one of the two layouts
        let mut seen = [false; 2];
        for seed in 0..64 {
            let mut pop = [a, b];
            crossover(&mut pop, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
            match (pop[0].genes, pop[1].genes) {
                ([1, 5, 6], [4, 2, 3]) => seen[0] = true,
                ([1, 2, 6], [4, 5, 3]) => seen[1] = true,
                other => panic!("unexpected offspring {other:?}"),
            }
        }
        assert_eq!(seen, [true, true]);
    }

    #[test]
    fn no_crossover_or_mutation_at_zero_rate() {
        let pop: Vec<_> = (0..9).map(|i| Individual::new([5 + i, 30 + i, 6 + i])).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut copy = pop.clone();
        crossover(&mut copy, 0.0, &mut rng);
        mutate(&mut copy, 0.0, &bounds(), &mut rng);
        assert_eq!(copy, pop);
    }

    #[test]
    fn odd_trailing_individual_untouched() {
        let pop: Vec<_> = (0..3).map(|i| Individual::new([5 + i, 30 + i, 6 + i])).collect();
        let mut copy = pop.clone();
        crossover(&mut copy, 1.0, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(copy[2], pop[2]);
    }

    #[test]
    fn full_mutation_stays_in_bounds() {
        let b = bounds();
        let mut pop = vec![Individual::new([5, 20, 5]); 200];
        mutate(&mut pop, 1.0, &b, &mut ChaCha8Rng::seed_from_u64(4));
        assert!(pop.iter().all(|i| i.genes.iter().zip(&b).all(|(g, r)| r.contains(*g))));
        assert!(pop.iter().any(|i| i.genes != [5, 20, 5]));
    }

    #[test]
    fn repair_cases() {
        let b = bounds();
        assert_eq!(repair(Individual::new([20, 20, 9]), &b).genes, [20, 21, 9]);
        assert_eq!(repair(Individual::new([12, 26, 9]), &b).genes, [12, 26, 9]);
        assert_eq!(repair(Individual::new([20, 50, 25]), &b).genes, [20, 50, 25]);
        let tight = [GeneBounds::new(5, 30), GeneBounds::new(20, 25), GeneBounds::new(5, 25)];
        assert_eq!(repair(Individual::new([28, 22, 9]), &tight).genes, [24, 25, 9]);
    }

    #[test]
    fn config_validation() {
        let ok = GaConfig::default();
        assert!(ok.validate().is_ok());
        assert!(GaConfig {
            population_size: 1,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(GaConfig {
            crossover_rate: 1.5,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(GaConfig {
            mutation_rate: -0.1,
            ..ok.clone()
        }
        .validate()
        .is_err());
        let mut bad = ok.clone();
        bad.bounds[1] = GeneBounds::new(30, 20);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_generation_budget_returns_initial_best() {
        let cfg = GaConfig {
            population_size: 40,
            max_generations: 0,
            seed: 5,
            ..GaConfig::default()
        };
        let res = optimize_with(&cfg, surrogate).unwrap();
        assert_eq!(res.generations, 0);
        assert_eq!(res.history.len(), 1);
        assert_eq!(res.best_fitness, res.history[0].best_fitness);
        assert!(!res.converged);
    }

    #[test]
    fn surrogate_converges_to_known_optimum() {
        let cfg = GaConfig {
            seed: 11,
            ..GaConfig::default()
        };
        let res = optimize_with(&cfg, surrogate).unwrap();
        assert_eq!(res.best_genes, [9, 22, 25]);
        assert_eq!(res.best_fitness, 0.0);
        assert!(res.converged);
    }

    #[test]
    fn fitness_is_deterministic_and_zero_without_trades() {
        let prices = PriceSeries::from_closes("C", vec![100.0; 80]);
        let f = evaluate_fitness(&[12, 26, 9], &prices, StrategyMode::Raw).unwrap();
        assert_eq!(f, 0.0);
        let ramp = PriceSeries::from_closes(
            "R",
            (0..80).map(|i| 100.0 + (i as f64 * 0.4).sin() + i as f64).collect(),
        );
        let a = evaluate_fitness(&[9, 22, 25], &ramp, StrategyMode::Denoised).unwrap();
        let b = evaluate_fitness(&[9, 22, 25], &ramp, StrategyMode::Denoised).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn short_series_fails_up_front() {
        let prices = PriceSeries::from_closes("S", vec![100.0; 30]);
        assert!(matches!(
            optimize(&prices, StrategyMode::Raw, &GaConfig::default()),
            Err(OptimizeError::Fitness(BacktestError::TooShort { required: 50, .. }))
        ));
    }
}
