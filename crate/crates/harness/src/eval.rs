//! Accuracy evaluation against retained raw data.

use std::io::Read;
use std::time::{Duration, Instant};

use moments_sketch::accuracy::quantile_error;
use moments_sketch::{merge_all, MomentsSketch, SolverConfig};
use serde::Serialize;

use crate::cube::IngestReport;
use crate::error::{HarnessError, Result};
use crate::query::answer_quantiles;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub phis: Vec<f64>,
    pub estimates: Vec<f64>,
    pub errors: Vec<f64>,
    pub eps_avg: f64,
    /// Mean time per merge.
    pub t_merge: Duration,
    pub n_merge: usize,
    pub t_est: Duration,
    pub n_groups: usize,
    /// Some estimate came from the bounds fallback.
    pub low_confidence: bool,
}

/// Per-`φ` errors of `estimates` and their mean.
pub fn score(sorted: &[f64], phis: &[f64], estimates: &[f64]) -> (Vec<f64>, f64) {
    let errors: Vec<f64> = phis
        .iter()
        .zip(estimates)
        .map(|(&p, &q)| quantile_error(sorted, q, p))
        .collect();
    let avg = errors.iter().sum::<f64>() / errors.len().max(1) as f64;
    (errors, avg)
}

/// Reads the `metric` column of a CSV file with a header row, keeping the
/// raw values. Malformed rows are skipped and counted as in ingestion.
pub fn read_values<R: Read>(input: R, metric: &str) -> Result<(Vec<f64>, IngestReport)> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers = reader.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h.trim() == metric)
        .ok_or_else(|| HarnessError::Invalid(format!("no column named {metric:?}")))?;
    let mut report = IngestReport::default();
    let mut values = Vec::new();
    for record in reader.records() {
        let v = record
            .ok()
            .filter(|r| r.len() == headers.len())
            .and_then(|r| r[col].trim().parse::<f64>().ok())
            .filter(|v| v.is_finite());
        match v {
            Some(v) => {
                values.push(v);
                report.rows += 1;
            }
            None => report.skipped += 1,
        }
    }
    if values.is_empty() {
        return Err(HarnessError::NoRows { skipped: report.skipped });
    }
    Ok((values, report))
}

/// Splits `values` into consecutive cells of `cell_size` values.
pub fn cells(values: &[f64], cell_size: usize, order: usize) -> Result<Vec<MomentsSketch>> {
    if cell_size == 0 {
        return Err(HarnessError::Invalid("cell size must be positive".into()));
    }
    values
        .chunks(cell_size)
        .map(|c| MomentsSketch::from_values(order, c).map_err(Into::into))
        .collect()
}

/// Merges `cells`, estimates every `φ` and scores the estimates against
/// `sorted`, the raw values in ascending order.
pub fn evaluate_cells(
    sorted: &[f64],
    cells: &[MomentsSketch],
    phis: &[f64],
    config: &SolverConfig,
) -> Result<EvalReport> {
    let first = cells.first().ok_or(HarnessError::EmptySelection)?;
    let start = Instant::now();
    let merged = merge_all(first.order(), cells)?;
    let merge_time = start.elapsed();
    if merged.count() != sorted.len() as u64 {
        return Err(HarnessError::Invalid(format!(
            "cells hold {} values but {} raw values were given",
            merged.count(),
            sorted.len()
        )));
    }
    let start = Instant::now();
    let answers = answer_quantiles(&merged, phis, config, false)?;
    let t_est = start.elapsed();
    let estimates: Vec<f64> = answers.iter().map(|a| a.estimate).collect();
    let (errors, eps_avg) = score(sorted, phis, &estimates);
    Ok(EvalReport {
        phis: phis.to_vec(),
        estimates,
        errors,
        eps_avg,
        t_merge: merge_time / cells.len() as u32,
        n_merge: cells.len(),
        t_est,
        n_groups: 1,
        low_confidence: answers.iter().any(|a| a.low_confidence),
    })
}

/// Pre-aggregates `values` into cells of `cell_size`, then evaluates.
pub fn evaluate(
    values: &[f64],
    cell_size: usize,
    order: usize,
    phis: &[f64],
    config: &SolverConfig,
) -> Result<EvalReport> {
    let cells = cells(values, cell_size, order)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    evaluate_cells(&sorted, &cells, phis, config)
}
