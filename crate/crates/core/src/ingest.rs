//! Close-price CSV ingestion and cleaning.
//!
//! Input files carry one row per `(code, date)` with at least the columns
//! `code`, `date` and `close` (header names matched case-insensitively,
//! dates in ISO-8601 `YYYY-MM-DD`). An empty close field is read as a
//! missing value and kept as `NaN` until [`clean`] drops it.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fraction of dropped rows above which a series is considered unusable.
pub const MAX_DROPPED_FRACTION: f64 = 0.5;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("row {row}: invalid date `{value}`")]
    InvalidDate { row: usize, value: String },
    #[error("row {row}: invalid close price `{value}`")]
    InvalidPrice { row: usize, value: String },
    #[error("row {row}: duplicate date {date} for `{code}`")]
    DuplicateDate { row: usize, code: String, date: NaiveDate },
    #[error("series `{code}` is unusable: {dropped} of {total} rows had missing or non-positive closes")]
    Unusable { code: String, dropped: usize, total: usize },
}

/// Ordered daily closes of one instrument.
///
/// Series coming straight out of [`load_csv`] may still contain missing
/// (`NaN`) or non-positive closes; [`clean`] removes them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub code: String,
    pub dates: Vec<NaiveDate>,
    pub closes: Vec<f64>,
}

impl PriceSeries {
    pub fn new(code: impl Into<String>, dates: Vec<NaiveDate>, closes: Vec<f64>) -> Self {
        assert_eq!(dates.len(), closes.len(), "dates and closes must align");
        Self {
            code: code.into(),
            dates,
            closes,
        }
    }

    /// Series with consecutive calendar dates starting at 2014-01-01.
    ///
    /// Handy for synthetic data where only the close sequence matters.
    pub fn from_closes(code: impl Into<String>, closes: Vec<f64>) -> Self {
        let start = NaiveDate::from_ymd_opt(2014, 1, 1).unwrap();
        let dates = start.iter_days().take(closes.len()).collect();
        Self::new(code, dates, closes)
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }
}

fn is_valid_close(c: f64) -> bool {
    c.is_finite() && c > 0.0
}

/// Drops rows whose close is missing or not strictly positive.
///
/// Fails with [`IngestError::Unusable`] when more than half of the rows
/// had to go.
pub fn clean(series: &PriceSeries) -> Result<PriceSeries, IngestError> {
    let total = series.len();
    let (dates, closes): (Vec<_>, Vec<_>) = series
        .dates
        .iter()
        .zip(&series.closes)
        .filter(|(_, &c)| is_valid_close(c))
        .map(|(&d, &c)| (d, c))
        .unzip();
    let dropped = total - closes.len();
    if total > 0 && dropped as f64 / total as f64 > MAX_DROPPED_FRACTION {
        return Err(IngestError::Unusable {
            code: series.code.clone(),
            dropped,
            total,
        });
    }
    Ok(PriceSeries {
        code: series.code.clone(),
        dates,
        closes,
    })
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<PriceSeries>, IngestError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file)
}

/// Parses price rows from any reader; see [`load_csv`].
///
/// Series are returned ordered by code, each sorted by date.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<PriceSeries>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &'static str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or(IngestError::MissingColumn(name))
    };
    let code_idx = column("code")?;
    let date_idx = column("date")?;
    let close_idx = column("close")?;

    // code -> date -> (close, row)
    let mut grouped: BTreeMap<String, BTreeMap<NaiveDate, (f64, usize)>> = BTreeMap::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        // header is row 1
        let row = i + 2;
        let field = |idx: usize| record.get(idx).unwrap_or("");
        let code = field(code_idx).to_string();
        let raw_date = field(date_idx);
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|_| IngestError::InvalidDate {
            row,
            value: raw_date.to_string(),
        })?;
        let raw_close = field(close_idx);
        let close = if raw_close.is_empty() {
            f64::NAN
        } else {
            raw_close
                .parse::<f64>()
                .ok()
                .filter(|c| !c.is_infinite())
                .ok_or_else(|| IngestError::InvalidPrice {
                    row,
                    value: raw_close.to_string(),
                })?
        };
        let rows = grouped.entry(code.clone()).or_default();
        if rows.insert(date, (close, row)).is_some() {
            return Err(IngestError::DuplicateDate { row, code, date });
        }
    }

    Ok(grouped
        .into_iter()
        .map(|(code, rows)| {
            let (dates, closes) = rows.into_iter().map(|(d, (c, _))| (d, c)).unzip();
            PriceSeries { code, dates, closes }
        })
        .collect())
}

/// Writes series in the layout [`read_csv`] accepts. Missing closes are
/// written as empty fields.
pub fn write_csv<W: Write>(writer: W, series: &[PriceSeries]) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["code", "date", "close"])?;
    for s in series {
        for (d, c) in s.dates.iter().zip(&s.closes) {
            let close = if c.is_nan() { String::new() } else { c.to_string() };
            wtr.write_record([s.code.as_str(), &d.format("%Y-%m-%d").to_string(), &close])?;
        }
    }
    wtr.flush().map_err(|source| IngestError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}
