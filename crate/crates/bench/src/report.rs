//! Samples, per-group summaries, and their CSV and table renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operation {
    Authorized,
    Unauthorized,
}

impl Operation {
    pub fn as_str(self) -> &'static str {
        match self {
            Operation::Authorized => "authorized",
            Operation::Unauthorized => "unauthorized",
        }
    }
}

/// One timed gateway call. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub population: usize,
    pub round: usize,
    pub operation: Operation,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub population: usize,
    pub operation: Operation,
    pub count: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Table,
}

/// Mean, median and nearest-rank p95 per (population, operation), in
/// ascending order of both.
pub fn summarize(samples: &[Sample]) -> Result<Vec<SummaryRow>, BenchError> {
    if samples.is_empty() {
        return Err(BenchError::EmptyData);
    }
    let mut groups: BTreeMap<(usize, Operation), Vec<f64>> = BTreeMap::new();
    for s in samples {
        groups.entry((s.population, s.operation)).or_default().push(s.elapsed_ms);
    }
    Ok(groups
        .into_iter()
        .map(|((population, operation), mut v)| {
            v.sort_by(f64::total_cmp);
            let n = v.len();
            let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
            let rank = ((0.95 * n as f64).ceil() as usize).max(1);
            SummaryRow {
                population,
                operation,
                count: n,
                mean_ms: v.iter().sum::<f64>() / n as f64,
                median_ms: median,
                p95_ms: v[rank - 1],
            }
        })
        .collect())
}

/// Mean at population `large` over mean at `small`.
pub fn growth(rows: &[SummaryRow], op: Operation, small: usize, large: usize) -> Option<f64> {
    let mean = |p| rows.iter().find(|r| r.operation == op && r.population == p).map(|r| r.mean_ms);
    Some(mean(large)? / mean(small)?)
}

/// Writes `samples` in `format`. CSV gets one row per sample; the table gets
/// one row per group.
pub fn emit_report(samples: &[Sample], format: Format, out: &mut dyn Write) -> Result<(), BenchError> {
    if samples.is_empty() {
        return Err(BenchError::EmptyData);
    }
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for s in samples {
                w.serialize(s)?;
            }
            w.flush()?;
        }
        Format::Table => out.write_all(table(&summarize(samples)?).as_bytes())?,
    }
    Ok(())
}

pub fn table(rows: &[SummaryRow]) -> String {
    let mut s = format!(
        "{:>10}  {:<12}  {:>5}  {:>10}  {:>10}  {:>10}\n",
        "population", "operation", "n", "mean_ms", "median_ms", "p95_ms"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>10}  {:<12}  {:>5}  {:>10.3}  {:>10.3}  {:>10.3}",
            r.population,
            r.operation.as_str(),
            r.count,
            r.mean_ms,
            r.median_ms,
            r.p95_ms
        );
    }
    s
}
