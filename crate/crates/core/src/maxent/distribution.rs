use super::basis::{BasisSpec, Primary};
use super::brent::brent;
use crate::chebyshev::{antiderivative, basis, eval_series};
use crate::error::{Result, SketchError};

/// A fitted maximum-entropy density.
///
/// `theta` is ordered `[θ_0, primary…, secondary…]`, where the primary
/// functions are `T_i` of the primary variable (see [`BasisSpec::primary`]).
#[derive(Debug, Clone, PartialEq)]
pub struct MaxEntDistribution {
    pub(crate) basis: BasisSpec,
    pub(crate) theta: Vec<f64>,
    pub(crate) coeffs: Vec<f64>,
    pub(crate) cdf_coeffs: Vec<f64>,
    pub(crate) mass: f64,
    pub(crate) converged: bool,
    pub(crate) resolved: bool,
    pub(crate) residual: f64,
    pub(crate) iterations: usize,
}

impl MaxEntDistribution {
    pub(crate) fn new(
        basis: BasisSpec,
        theta: Vec<f64>,
        coeffs: Vec<f64>,
        converged: bool,
        resolved: bool,
        residual: f64,
        iterations: usize,
    ) -> Self {
        let cdf_coeffs = antiderivative(&coeffs);
        let mass = eval_series(&cdf_coeffs, 1.0);
        Self {
            basis,
            theta,
            coeffs,
            cdf_coeffs,
            mass,
            converged,
            resolved,
            residual,
            iterations,
        }
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Chebyshev coefficients of the density in the primary variable.
    pub fn density_coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// Converged to tolerance with a density the quadrature resolves.
    pub fn converged(&self) -> bool {
        self.converged && self.resolved
    }

    /// Moment constraints met, regardless of resolution.
    pub fn moments_matched(&self) -> bool {
        self.converged
    }

    pub fn resolved(&self) -> bool {
        self.resolved
    }

    /// Largest moment mismatch at the final iterate.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    fn check(&self) -> Result<()> {
        if self.converged() {
            Ok(())
        } else {
            Err(SketchError::Unavailable(format!(
                "solver did not converge (residual {:e} after {} iterations{})",
                self.residual,
                self.iterations,
                if self.resolved { "" } else { ", density unresolved" }
            )))
        }
    }

    /// Exponent `Σ θ_a m_a` at primary coordinate `u`.
    fn exponent(&self, u: f64) -> f64 {
        let kp = self.basis.primary_count();
        let ks = self.basis.secondary_count();
        let tp = basis(u, kp + 1);
        let mut e: f64 = tp.iter().zip(&self.theta).map(|(t, th)| t * th).sum();
        if ks > 0 {
            let ts = basis(self.basis.secondary_at(u), ks + 1);
            e += ts[1..]
                .iter()
                .zip(&self.theta[kp + 1..])
                .map(|(t, th)| t * th)
                .sum::<f64>();
        }
        e
    }

    /// Density at `x`; zero outside the support.
    pub fn pdf(&self, x: f64) -> Result<f64> {
        self.check()?;
        if x < self.basis.x_min() || x > self.basis.x_max() {
            return Ok(0.0);
        }
        let u = self.basis.primary_at(x);
        Ok(self.exponent(u).exp() * self.basis.jacobian(x))
    }

    fn cdf_unit(&self, u: f64) -> f64 {
        (eval_series(&self.cdf_coeffs, u) / self.mass).clamp(0.0, 1.0)
    }

    /// `P(X <= x)`, with `x` clamped to the support.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        self.check()?;
        if x <= self.basis.x_min() {
            return Ok(0.0);
        }
        if x >= self.basis.x_max() {
            return Ok(1.0);
        }
        Ok(self.cdf_unit(self.basis.primary_at(x)))
    }

    pub fn estimate_quantile(&self, phi: f64) -> Result<f64> {
        self.check()?;
        if !(0.0..=1.0).contains(&phi) {
            return Err(SketchError::InvalidParameter(format!(
                "phi must be in [0, 1], got {phi}"
            )));
        }
        if phi == 0.0 {
            return Ok(self.basis.x_min());
        }
        if phi == 1.0 {
            return Ok(self.basis.x_max());
        }
        let u = brent(|u| self.cdf_unit(u) - phi, -1.0, 1.0, 1e-15, 200);
        Ok(self.basis.x_at(u))
    }

    pub fn estimate_quantiles(&self, phis: &[f64]) -> Result<Vec<f64>> {
        phis.iter().map(|&p| self.estimate_quantile(p)).collect()
    }

    /// `∫ T_i(primary) f` for `i = 0..=order`, from the cached expansion.
    pub fn primary_moments(&self, order: usize) -> Vec<f64> {
        (0..=order)
            .map(|i| {
                self.coeffs
                    .iter()
                    .enumerate()
                    .map(|(l, c)| c * crate::chebyshev::integral_of_product(i, l))
                    .sum::<f64>()
                    / self.mass
            })
            .collect()
    }

    pub fn primary(&self) -> Primary {
        self.basis.primary
    }
}
