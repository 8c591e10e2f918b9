//! Micro-benchmarks for merge, estimation and end-to-end query time.
//!
//! Every timing is the median of five runs after warm-up runs.

use std::hint::black_box;
use std::time::{Duration, Instant};

use moments_sketch::{fit, merge_all, merge_all_parallel, MomentsSketch, SolverConfig};
use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::generate::Dataset;

pub const REPEATS: usize = 5;
pub const WARMUP: usize = 2;

/// Median wall-clock time of `f` over `repeats` runs after `warmup` runs.
pub fn median_time<T>(warmup: usize, repeats: usize, mut f: impl FnMut() -> T) -> Duration {
    for _ in 0..warmup {
        black_box(f());
    }
    let mut times: Vec<Duration> = (0..repeats.max(1))
        .map(|_| {
            let start = Instant::now();
            black_box(f());
            start.elapsed()
        })
        .collect();
    times.sort();
    times[times.len() / 2]
}

/// Cells of `cell_size` exponential values.
pub fn exponential_cells(count: usize, cell_size: usize, order: usize, seed: u64) -> Result<Vec<MomentsSketch>> {
    let values = Dataset::Exponential { lambda: 1.0 }.sample(count * cell_size, seed)?;
    crate::eval::cells(&values, cell_size, order)
}

/// References to `n` cells taken cyclically from `pool`.
fn cycled(pool: &[MomentsSketch], n: usize) -> Vec<&MomentsSketch> {
    pool.iter().cycle().take(n).collect()
}

/// Merges `n` cells, cycling through `pool`, into a copy of `base`.
pub fn merge_into(base: &MomentsSketch, pool: &[MomentsSketch], n: usize) -> Result<MomentsSketch> {
    let mut acc = base.clone();
    for s in pool.iter().cycle().take(n) {
        acc.merge(s)?;
    }
    Ok(acc)
}

/// Median time per merge over `n` merges.
pub fn merge_latency(pool: &[MomentsSketch], n: usize) -> Result<Duration> {
    let base = MomentsSketch::new(pool[0].order())?;
    merge_into(&base, pool, n)?;
    Ok(median_time(WARMUP, REPEATS, || merge_into(&base, pool, n)) / n.max(1) as u32)
}

/// Median time to fit `sketch` and estimate one quantile.
pub fn solve_latency(sketch: &MomentsSketch, config: &SolverConfig) -> Result<Duration> {
    fit(sketch, config)?;
    Ok(median_time(WARMUP, REPEATS, || {
        fit(sketch, config).and_then(|f| f.estimate_quantile(0.99))
    }))
}

/// Median time of a query that merges `n` cells into `base` and estimates.
pub fn query_time(base: &MomentsSketch, pool: &[MomentsSketch], n: usize, config: &SolverConfig) -> Result<Duration> {
    let run = || -> Result<f64> { Ok(fit(&merge_into(base, pool, n)?, config)?.estimate_quantile(0.99)?) };
    run()?;
    Ok(median_time(WARMUP, REPEATS, run))
}

/// Query times for every `n` in `ns`. Runs are interleaved round-robin
/// across the sweep so slow stretches of machine time hit every point alike;
/// each point is still the median of its own runs.
pub fn query_sweep(
    base: &MomentsSketch,
    pool: &[MomentsSketch],
    ns: &[usize],
    config: &SolverConfig,
) -> Result<Vec<Duration>> {
    let run = |n: usize| -> Result<Duration> {
        let start = Instant::now();
        black_box(fit(&merge_into(base, pool, n)?, config)?.estimate_quantile(0.99)?);
        Ok(start.elapsed())
    };
    let mut times = vec![Vec::with_capacity(REPEATS); ns.len()];
    for round in 0..WARMUP + REPEATS {
        for (i, &n) in ns.iter().enumerate() {
            let t = run(n)?;
            if round >= WARMUP {
                times[i].push(t);
            }
        }
    }
    Ok(times
        .into_iter()
        .map(|mut t| {
            t.sort();
            t[t.len() / 2]
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares line through `(x, y)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    LinearFit { slope, intercept, r2 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub n_merge: usize,
    pub t_query: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParallelPoint {
    pub threads: usize,
    pub elapsed: Duration,
    pub merges_per_sec: f64,
    /// Largest relative difference of any sum from the sequential merge.
    pub max_rel_diff: f64,
}

/// Largest relative difference between corresponding sums.
pub fn max_relative_difference(a: &MomentsSketch, b: &MomentsSketch) -> f64 {
    let pairs = a.power_sums().iter().zip(b.power_sums()).chain(a.log_sums().iter().zip(b.log_sums()));
    pairs
        .map(|(x, y)| {
            let scale = x.abs().max(y.abs());
            if scale == 0.0 { 0.0 } else { (x - y).abs() / scale }
        })
        .fold(0.0, f64::max)
}

/// Merges `n` cycled cells on each thread count in `threads`.
pub fn parallel_merge(pool: &[MomentsSketch], n: usize, threads: &[usize]) -> Result<Vec<ParallelPoint>> {
    let cells = cycled(pool, n);
    let order = pool[0].order();
    let sequential = merge_all(order, &cells)?;
    threads
        .iter()
        .map(|&t| {
            let merged = merge_all_parallel(order, &cells, t)?;
            if merged.count() != sequential.count() {
                return Err(HarnessError::Invalid(format!("parallel merge on {t} threads lost values")));
            }
            let elapsed = median_time(WARMUP, REPEATS, || merge_all_parallel(order, &cells, t));
            Ok(ParallelPoint {
                threads: t,
                elapsed,
                merges_per_sec: n as f64 / elapsed.as_secs_f64(),
                max_rel_diff: max_relative_difference(&merged, &sequential),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    pub order: usize,
    pub pool_cells: usize,
    pub cell_size: usize,
    pub sweep: Vec<usize>,
    pub threads: Vec<usize>,
    pub parallel_merges: usize,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            order: 10,
            pool_cells: 10_000,
            cell_size: 200,
            sweep: vec![1_000, 3_000, 10_000, 30_000, 100_000, 300_000, 1_000_000],
            threads: vec![1, 2, 4, 8],
            parallel_merges: 1_000_000,
            seed: 0,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub merge_latency: Duration,
    pub solve_latency: Duration,
    /// Query time with no merges: estimation alone.
    pub t_est: Duration,
    pub sweep: Vec<SweepPoint>,
    pub fit: LinearFit,
    pub parallel: Vec<ParallelPoint>,
}

pub fn run(spec: &BenchSpec) -> Result<BenchReport> {
    if spec.pool_cells == 0 || spec.sweep.len() < 2 {
        return Err(HarnessError::Invalid("bench needs a nonempty pool and two sweep points".into()));
    }
    let pool = exponential_cells(spec.pool_cells, spec.cell_size, spec.order, spec.seed)?;
    let base = merge_all(spec.order, &pool)?;
    let merge_latency = merge_latency(&pool, spec.sweep.iter().copied().max().unwrap_or(1).min(100_000))?;
    let solve_latency = solve_latency(&base, &spec.solver)?;
    let t_est = query_time(&base, &pool, 0, &spec.solver)?;
    let sweep: Vec<SweepPoint> = query_sweep(&base, &pool, &spec.sweep, &spec.solver)?
        .into_iter()
        .zip(&spec.sweep)
        .map(|(t_query, &n_merge)| SweepPoint { n_merge, t_query })
        .collect();
    let xs: Vec<f64> = sweep.iter().map(|p| p.n_merge as f64).collect();
    let ys: Vec<f64> = sweep.iter().map(|p| p.t_query.as_secs_f64()).collect();
    let parallel = parallel_merge(&pool, spec.parallel_merges, &spec.threads)?;
    Ok(BenchReport {
        merge_latency,
        solve_latency,
        t_est,
        sweep,
        fit: linear_fit(&xs, &ys),
        parallel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_has_unit_r2() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 0.5).collect();
        let f = linear_fit(&xs, &ys);
        assert!((f.slope - 3.0).abs() < 1e-12 && (f.intercept - 0.5).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_run() {
        let spec = BenchSpec {
            pool_cells: 50,
            cell_size: 20,
            sweep: vec![100, 1000],
            threads: vec![1, 3],
            parallel_merges: 1000,
            ..Default::default()
        };
        let r = run(&spec).unwrap();
        assert_eq!(r.sweep.len(), 2);
        assert_eq!(r.parallel[0].max_rel_diff, 0.0);
        assert!(r.parallel[1].max_rel_diff < 1e-12);
    }
}
