//! Moments sketch: a mergeable quantile summary that stores power sums and
//! log-power sums and answers quantile queries by fitting a maximum-entropy
//! density to the stored moments.

pub mod accuracy;
pub mod bounds;
pub mod cascade;
pub mod chebyshev;
pub mod compress;
pub mod error;
pub mod maxent;
pub mod moments;
pub mod sketch;

pub use bounds::{markov_bound, quantile_error_bound, rtt_bound, BoundsContext, RankBounds};
pub use cascade::{threshold, CascadeStats, Stage, ThresholdOutcome};
pub use compress::{encode_low_precision, CompressedSketch};
pub use error::{Result, SketchError};
pub use maxent::{fit, solve_maxent, Fit, MaxEntDistribution, SolverConfig};
pub use moments::{max_stable_order, to_chebyshev_moments, AffineMap, ChebyshevMoments};
pub use sketch::{merge_all, merge_all_parallel, MomentsSketch, MAX_ORDER};
