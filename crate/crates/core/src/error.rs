use thiserror::Error;

pub type Result<T> = std::result::Result<T, SketchError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SketchError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input value {0}: only finite values can be accumulated")]
    InvalidValue(f64),

    #[error("incompatible sketches: order {left} vs order {right}")]
    IncompatibleOrder { left: usize, right: usize },

    #[error("invalid subtraction: {0}")]
    InvalidSubtraction(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("empty sketch")]
    EmptySketch,

    /// All accumulated values are identical; the caller should treat the data
    /// as a point mass at the contained value.
    #[error("degenerate support: every value equals {0}")]
    DegenerateSupport(f64),

    #[error("sketch extrema are stale; supply them before estimating")]
    StaleExtrema,

    #[error("maximum-entropy solve did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("estimate unavailable: {0}")]
    Unavailable(String),
}
