//! Threshold predicates `q̂_φ > t` answered by increasingly expensive checks.
//!
//! The stages are: the support range, Markov rank bounds, RTT rank bounds
//! and finally the maximum-entropy estimate. A bound stage decides only when
//! its interval for `rank(t)` lies entirely on one side of `nφ`:
//!
//! * `lower > nφ` means `q_φ <= t` for every consistent dataset, so `false`;
//! * `upper < nφ` means `q_φ > t`, so `true`.
//!
//! Bounds are computed from the same moment subset the solver selects and
//! with the solver tolerance folded into the slack, so a decision taken by a
//! bound stage agrees with the one the fitted density would give.

use std::fmt;
use std::time::{Duration, Instant};

use crate::bounds::{BoundsContext, RankBounds};
use crate::error::{Result, SketchError};
use crate::maxent::{select_moment_counts, solve_maxent, SolverConfig};
use crate::moments::to_chebyshev_moments;
use crate::sketch::MomentsSketch;

/// Decision margin relative to `n`.
const MARGIN: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Range,
    Markov,
    Rtt,
    MaxEnt,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Range, Stage::Markov, Stage::Rtt, Stage::MaxEnt];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Range => "range",
            Stage::Markov => "markov",
            Stage::Rtt => "rtt",
            Stage::MaxEnt => "maxent",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdOutcome {
    /// Whether `q̂_φ > t`; `None` when the solver failed and no bound decided.
    pub decision: Option<bool>,
    pub resolved_by: Stage,
    /// `q̂_φ`, present when the final stage ran and succeeded.
    pub estimate: Option<f64>,
    /// The last rank interval computed, if any.
    pub bounds: Option<RankBounds>,
}

impl ThresholdOutcome {
    pub fn is_indeterminate(&self) -> bool {
        self.decision.is_none()
    }

    fn decided(decision: bool, stage: Stage, bounds: Option<RankBounds>) -> Self {
        Self {
            decision: Some(decision),
            resolved_by: stage,
            estimate: None,
            bounds,
        }
    }
}

fn check_phi(phi: f64) -> Result<()> {
    if phi > 0.0 && phi < 1.0 {
        Ok(())
    } else {
        Err(SketchError::InvalidParameter(format!(
            "phi must be in (0, 1), got {phi}"
        )))
    }
}

fn compare(b: &RankBounds, target: f64, margin: f64) -> Option<bool> {
    if b.lower > target + margin {
        Some(false)
    } else if b.upper < target - margin {
        Some(true)
    } else {
        None
    }
}

/// Runs the cascade for `q̂_φ > t`.
pub fn threshold(
    sketch: &MomentsSketch,
    t: f64,
    phi: f64,
    config: &SolverConfig,
) -> Result<ThresholdOutcome> {
    check_phi(phi)?;
    if sketch.is_empty() {
        return Err(SketchError::EmptySketch);
    }
    if sketch.extrema_stale() {
        return Err(SketchError::StaleExtrema);
    }
    if t > sketch.max() {
        return Ok(ThresholdOutcome::decided(false, Stage::Range, None));
    }
    if t < sketch.min() {
        return Ok(ThresholdOutcome::decided(true, Stage::Range, None));
    }
    let m = match to_chebyshev_moments(sketch) {
        Ok(m) => m,
        // every value equals t
        Err(SketchError::DegenerateSupport(x)) => {
            return Ok(ThresholdOutcome {
                decision: Some(x > t),
                resolved_by: Stage::MaxEnt,
                estimate: Some(x),
                bounds: None,
            })
        }
        Err(e) => return Err(e),
    };
    config.validate()?;
    let spec = select_moment_counts(&m, config);
    let ctx = BoundsContext::continuous(&m, spec.k1, spec.k2, 10.0 * config.tol);
    let n = m.count() as f64;
    let target = n * phi;
    let margin = MARGIN * n;

    let markov = ctx.markov(t);
    if let Some(d) = compare(&markov, target, margin) {
        return Ok(ThresholdOutcome::decided(d, Stage::Markov, Some(markov)));
    }
    let rtt = ctx.rtt(t);
    if let Some(d) = compare(&rtt, target, margin) {
        return Ok(ThresholdOutcome::decided(d, Stage::Rtt, Some(rtt)));
    }
    let dist = solve_maxent(&m, config)?;
    let outcome = match dist.estimate_quantile(phi) {
        Ok(q) => ThresholdOutcome {
            decision: Some(q > t),
            resolved_by: Stage::MaxEnt,
            estimate: Some(q),
            bounds: Some(rtt),
        },
        Err(SketchError::Unavailable(_)) => ThresholdOutcome {
            decision: None,
            resolved_by: Stage::MaxEnt,
            estimate: None,
            bounds: Some(rtt),
        },
        Err(e) => return Err(e),
    };
    Ok(outcome)
}

/// The answer the cascade must reproduce: fit, estimate, compare.
/// `None` when the solver does not converge.
pub fn baseline_threshold(
    sketch: &MomentsSketch,
    t: f64,
    phi: f64,
    config: &SolverConfig,
) -> Result<Option<bool>> {
    check_phi(phi)?;
    let fit = crate::maxent::fit(sketch, config)?;
    if !fit.converged() {
        return Ok(None);
    }
    Ok(Some(fit.estimate_quantile(phi)? > t))
}

/// Per-stage counts and latencies over a batch of threshold calls.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CascadeStats {
    counts: [u64; 4],
    time: [Duration; 4],
    indeterminate: u64,
}

impl CascadeStats {
    pub fn new() -> Self {
        Self::default()
    }

    /// Runs [`threshold`] and records the outcome and its latency.
    pub fn threshold(
        &mut self,
        sketch: &MomentsSketch,
        t: f64,
        phi: f64,
        config: &SolverConfig,
    ) -> Result<ThresholdOutcome> {
        let start = Instant::now();
        let out = threshold(sketch, t, phi, config)?;
        self.record(&out, start.elapsed());
        Ok(out)
    }

    pub fn record(&mut self, outcome: &ThresholdOutcome, elapsed: Duration) {
        let i = outcome.resolved_by.index();
        self.counts[i] += 1;
        self.time[i] += elapsed;
        if outcome.is_indeterminate() {
            self.indeterminate += 1;
        }
    }

    pub fn merge(&mut self, other: &CascadeStats) {
        for i in 0..4 {
            self.counts[i] += other.counts[i];
            self.time[i] += other.time[i];
        }
        self.indeterminate += other.indeterminate;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn count(&self, stage: Stage) -> u64 {
        self.counts[stage.index()]
    }

    pub fn indeterminate(&self) -> u64 {
        self.indeterminate
    }

    /// Fraction of calls resolved by `stage`; zero for an empty batch.
    pub fn fraction(&self, stage: Stage) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.count(stage) as f64 / total as f64
        }
    }

    /// Fraction resolved before the maximum-entropy stage.
    pub fn early_fraction(&self) -> f64 {
        1.0 - self.fraction(Stage::MaxEnt)
    }

    pub fn total_time(&self, stage: Stage) -> Duration {
        self.time[stage.index()]
    }

    /// Mean latency of calls resolved by `stage`.
    pub fn mean_time(&self, stage: Stage) -> Option<Duration> {
        let c = self.count(stage);
        (c > 0).then(|| self.time[stage.index()] / c as u32)
    }
}
