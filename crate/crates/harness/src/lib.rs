//! Aggregation harness for the moments sketch: a data cube of per-cell
//! sketches, roll-up and threshold queries, sliding windows, synthetic data,
//! accuracy evaluation and micro-benchmarks.

pub mod bench;
pub mod config;
pub mod cube;
pub mod error;
pub mod eval;
pub mod generate;
pub mod output;
pub mod query;
pub mod window;

pub use config::HarnessConfig;
pub use cube::{CubeStore, Filter, Grouping, IngestReport};
pub use error::{HarnessError, Result};
pub use eval::{evaluate, EvalReport};
pub use query::{query_quantile, query_threshold_groups, QuantileAnswer, ThresholdMode};
pub use window::{query_sliding_window, PaneSeries};
