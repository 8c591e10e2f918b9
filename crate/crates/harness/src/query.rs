//! Roll-up quantile queries and group-by threshold queries over a cube.

use std::time::{Duration, Instant};

use moments_sketch::{fit, merge_all, BoundsContext, CascadeStats, MomentsSketch, RankBounds, SolverConfig, ThresholdOutcome};

use crate::cube::{CubeStore, Filter};
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileAnswer {
    pub phi: f64,
    pub estimate: f64,
    /// Rank interval of `estimate` implied by the sketch.
    pub bounds: RankBounds,
    /// Worst-case normalized rank error of `estimate`.
    pub error_bound: f64,
    /// The solver failed and `estimate` is the midpoint of the values the
    /// bounds allow.
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileReport {
    pub count: u64,
    pub cells: usize,
    pub answers: Vec<QuantileAnswer>,
    pub merge_time: Duration,
    pub estimate_time: Duration,
}

fn check_phi(phi: f64) -> Result<()> {
    if (0.0..=1.0).contains(&phi) {
        Ok(())
    } else {
        Err(HarnessError::Invalid(format!("phi must be in [0, 1], got {phi}")))
    }
}

/// Estimates every quantile in `phis` from one fit of `sketch`.
pub fn answer_quantiles(
    sketch: &MomentsSketch,
    phis: &[f64],
    config: &SolverConfig,
    round_integers: bool,
) -> Result<Vec<QuantileAnswer>> {
    for &phi in phis {
        check_phi(phi)?;
    }
    if sketch.is_empty() {
        return Err(HarnessError::EmptySelection);
    }
    let ctx = BoundsContext::new(sketch)?;
    let fitted = fit(sketch, config)?;
    phis.iter()
        .map(|&phi| {
            let (mut estimate, low_confidence) = match fitted.converged() {
                true => (fitted.estimate_quantile(phi)?, false),
                false => (midpoint_of_bounds(&ctx, sketch.min(), sketch.max(), phi), true),
            };
            if round_integers {
                estimate = estimate.round();
            }
            Ok(QuantileAnswer {
                phi,
                estimate,
                bounds: ctx.rtt(estimate),
                error_bound: ctx.quantile_error_bound(estimate, phi),
                low_confidence,
            })
        })
        .collect()
}

/// Midpoint of the values whose rank interval admits `⌊φn⌋`.
pub fn midpoint_of_bounds(ctx: &BoundsContext, lo: f64, hi: f64, phi: f64) -> f64 {
    let target = (phi * ctx.count()).floor();
    let left = first_true(lo, hi, |x| ctx.rtt(x).upper >= target);
    let right = first_true(lo, hi, |x| ctx.rtt(x).lower > target);
    0.5 * (left + right.max(left))
}

/// Smallest `x` in `[lo, hi]` with `pred(x)` for a monotone predicate.
fn first_true(mut lo: f64, mut hi: f64, pred: impl Fn(f64) -> bool) -> f64 {
    if pred(lo) {
        return lo;
    }
    if !pred(hi) {
        return hi;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Merges the cells matching `filter` and answers every `φ`.
pub fn query_quantile(
    store: &CubeStore,
    filter: &Filter,
    phis: &[f64],
    config: &SolverConfig,
    round_integers: bool,
    threads: usize,
) -> Result<QuantileReport> {
    let start = Instant::now();
    let (merged, cells) = store.merge_selection(filter, threads)?;
    let merge_time = start.elapsed();
    let start = Instant::now();
    let answers = answer_quantiles(&merged, phis, config, round_integers)?;
    Ok(QuantileReport {
        count: merged.count(),
        cells,
        answers,
        merge_time,
        estimate_time: start.elapsed(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdMode {
    Value(f64),
    /// The threshold is this quantile of the whole cube, estimated from the
    /// merge of every cell.
    GlobalQuantile(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupOutcome {
    pub key: Vec<String>,
    pub count: u64,
    pub outcome: ThresholdOutcome,
}

#[derive(Debug, Clone)]
pub struct ThresholdReport {
    pub phi: f64,
    pub threshold: f64,
    /// The global threshold came from the bounds fallback.
    pub threshold_low_confidence: bool,
    pub groups: Vec<GroupOutcome>,
    pub stats: CascadeStats,
}

impl ThresholdReport {
    /// Groups with `q̂_φ > t`.
    pub fn qualifying(&self) -> impl Iterator<Item = &GroupOutcome> {
        self.groups.iter().filter(|g| g.outcome.decision == Some(true))
    }

    /// Groups the cascade could not decide. Exploratory callers include
    /// these with a flag.
    pub fn indeterminate(&self) -> impl Iterator<Item = &GroupOutcome> {
        self.groups.iter().filter(|g| g.outcome.is_indeterminate())
    }
}

/// Runs the threshold cascade on every group of `group_by`.
pub fn query_threshold_groups(
    store: &CubeStore,
    group_by: &[String],
    phi: f64,
    mode: ThresholdMode,
    config: &SolverConfig,
    threads: usize,
) -> Result<ThresholdReport> {
    let groups = store.group_by(group_by)?;
    if groups.is_empty() {
        return Err(HarnessError::EmptySelection);
    }
    let (threshold, threshold_low_confidence) = match mode {
        ThresholdMode::Value(t) if t.is_finite() => (t, false),
        ThresholdMode::Value(t) => return Err(HarnessError::Invalid(format!("threshold must be finite, got {t}"))),
        ThresholdMode::GlobalQuantile(p) => {
            let (all, _) = store.merge_selection(&Filter::all(), threads)?;
            let a = &answer_quantiles(&all, &[p], config, false)?[0];
            (a.estimate, a.low_confidence)
        }
    };
    let mut stats = CascadeStats::new();
    let mut out = Vec::with_capacity(groups.len());
    for (key, cells) in groups {
        let merged = merge_all(store.order(), &cells)?;
        let outcome = stats.threshold(&merged, threshold, phi, config)?;
        out.push(GroupOutcome {
            key,
            count: merged.count(),
            outcome,
        });
    }
    Ok(ThresholdReport {
        phi,
        threshold,
        threshold_low_confidence,
        groups: out,
        stats,
    })
}
