//! Maximum-entropy density estimation from Chebyshev moments.

mod basis;
mod brent;
mod config;
mod distribution;
mod potential;
mod select;
mod solve;

pub use basis::{BasisSpec, Primary};
pub use brent::brent;
pub use config::{PrimaryChoice, SolverConfig};
pub use distribution::MaxEntDistribution;
pub use potential::{Evaluation, Potential};
pub use select::{condition_number, select_in, select_moment_counts, uniform_moment};
pub use solve::{solve_maxent, solve_with_basis};

use crate::error::{Result, SketchError};
use crate::moments::to_chebyshev_moments;
use crate::sketch::MomentsSketch;

/// Estimate for a sketch: either every point is equal, or a fitted density.
#[derive(Debug, Clone, PartialEq)]
pub enum Fit {
    PointMass(f64),
    MaxEnt(MaxEntDistribution),
}

impl Fit {
    pub fn converged(&self) -> bool {
        match self {
            Fit::PointMass(_) => true,
            Fit::MaxEnt(d) => d.converged(),
        }
    }

    pub fn estimate_quantile(&self, phi: f64) -> Result<f64> {
        match self {
            Fit::PointMass(x) => Ok(*x),
            Fit::MaxEnt(d) => d.estimate_quantile(phi),
        }
    }

    pub fn estimate_quantiles(&self, phis: &[f64]) -> Result<Vec<f64>> {
        phis.iter().map(|&p| self.estimate_quantile(p)).collect()
    }

    /// Fraction of mass strictly below `x`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        match self {
            Fit::PointMass(c) => Ok(if x > *c { 1.0 } else { 0.0 }),
            Fit::MaxEnt(d) => d.cdf(x),
        }
    }

    /// `(k1, k2)` used by the fit; `(0, 0)` for a point mass.
    pub fn moment_counts(&self) -> (usize, usize) {
        match self {
            Fit::PointMass(_) => (0, 0),
            Fit::MaxEnt(d) => (d.basis().k1, d.basis().k2),
        }
    }

    pub fn distribution(&self) -> Option<&MaxEntDistribution> {
        match self {
            Fit::PointMass(_) => None,
            Fit::MaxEnt(d) => Some(d),
        }
    }
}

/// Fits a sketch. Non-convergence is reported through [`Fit::converged`],
/// not as an error.
pub fn fit(sketch: &MomentsSketch, config: &SolverConfig) -> Result<Fit> {
    match to_chebyshev_moments(sketch) {
        Ok(m) => Ok(Fit::MaxEnt(solve_maxent(&m, config)?)),
        Err(SketchError::DegenerateSupport(x)) => Ok(Fit::PointMass(x)),
        Err(e) => Err(e),
    }
}
