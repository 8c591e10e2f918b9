use crate::error::{Result, SketchError};

/// Which variable the density is expanded in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrimaryChoice {
    /// Pick per dataset; see [`crate::maxent::select_moment_counts`].
    #[default]
    Auto,
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Stop when every moment mismatch is at most this.
    pub tol: f64,
    /// Largest condition number of the Hessian at the uniform density
    /// accepted while adding moments.
    pub kappa_max: f64,
    /// Chebyshev approximation degree; a power of two.
    pub n_c: usize,
    /// The degree is doubled up to this bound while the fitted density is
    /// unresolved.
    pub max_degree: usize,
    pub max_iterations: usize,
    /// Sufficient-decrease constant of the backtracking line search.
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub primary: PrimaryChoice,
    /// A basis function is usable only if the tail of its Chebyshev expansion
    /// (and of its square) is below this.
    pub admissible_tail: f64,
    /// A fitted density is flagged unresolved when the tail of its Chebyshev
    /// expansion exceeds this fraction of its largest coefficient.
    pub resolution_tail: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            kappa_max: 1e4,
            n_c: 128,
            max_degree: 1024,
            max_iterations: 200,
            armijo: 0.1,
            backtrack: 0.5,
            max_backtracks: 40,
            primary: PrimaryChoice::Auto,
            admissible_tail: 1e-8,
            resolution_tail: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SketchError::InvalidParameter(msg));
        if !(self.tol > 0.0) {
            return bad(format!("tolerance must be positive, got {}", self.tol));
        }
        if !(self.kappa_max > 1.0) {
            return bad(format!("kappa_max must exceed 1, got {}", self.kappa_max));
        }
        if self.n_c < 8 || !self.n_c.is_power_of_two() {
            return bad(format!("n_c must be a power of two >= 8, got {}", self.n_c));
        }
        if self.max_degree < self.n_c {
            return bad(format!("max_degree must be at least n_c, got {}", self.max_degree));
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive".into());
        }
        if !(self.armijo > 0.0 && self.armijo < 0.5) || !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("line-search parameters out of range".into());
        }
        Ok(())
    }
}
