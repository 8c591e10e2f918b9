use nalgebra::{Cholesky, DMatrix, DVector};

use super::basis::BasisSpec;
use super::config::SolverConfig;
use super::distribution::MaxEntDistribution;
use super::potential::Potential;
use super::select::candidate_bases;
use crate::chebyshev::tail_magnitude;
use crate::error::Result;
use crate::moments::ChebyshevMoments;

/// Newton direction `-H⁻¹ g`, adding a growing ridge if `H` is not
/// numerically positive definite.
fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = Cholesky::new(h.clone()) {
        return Some(-ch.solve(g));
    }
    let dim = h.nrows();
    let mut ridge = 1e-10 * h.trace() / dim as f64;
    if !(ridge > 0.0) {
        ridge = 1e-10;
    }
    for _ in 0..8 {
        let mut hr = h.clone();
        for i in 0..dim {
            hr[(i, i)] += ridge;
        }
        if let Some(ch) = Cholesky::new(hr) {
            return Some(-ch.solve(g));
        }
        ridge *= 2.0;
    }
    None
}

/// Whether the density expansion has decayed by its last coefficients.
pub(crate) fn is_resolved(coeffs: &[f64], tol: f64) -> bool {
    let tail = tail_magnitude(coeffs, (coeffs.len() / 8).max(2));
    let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    scale.is_finite() && tail <= tol * scale
}

/// Newton's method with backtracking on a fixed basis, starting from the
/// uniform density. When the result is not resolved by the quadrature the
/// degree is doubled, warm-starting from the previous solution.
pub fn solve_with_basis(
    m: &ChebyshevMoments,
    spec: BasisSpec,
    config: &SolverConfig,
) -> MaxEntDistribution {
    let target = spec.target(m);
    let mut n = config.n_c;
    let mut theta = DVector::zeros(spec.dim());
    loop {
        let d = newton(&spec, &target, n, theta, config);
        if d.resolved || !d.converged || 2 * n > config.max_degree {
            return d;
        }
        theta = DVector::from_column_slice(&d.theta);
        n *= 2;
    }
}

fn newton(
    spec: &BasisSpec,
    target: &[f64],
    n: usize,
    mut theta: DVector<f64>,
    config: &SolverConfig,
) -> MaxEntDistribution {
    let mut pot = Potential::new(spec, target, n);
    let mut ev = pot.evaluate(theta.as_slice());
    let mut residual = ev.gradient.amax();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        residual = ev.gradient.amax();
        if residual <= config.tol {
            converged = true;
            break;
        }
        if !residual.is_finite() {
            break;
        }
        iterations += 1;
        let Some(step) = newton_direction(&ev.hessian, &ev.gradient) else {
            break;
        };
        let slope = ev.gradient.dot(&step);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            let cand = &theta + t * &step;
            let v = pot.value(cand.as_slice());
            if v.is_finite() && v <= ev.value + config.armijo * t * slope {
                accepted = Some(cand);
                break;
            }
            t *= config.backtrack;
        }
        match accepted {
            Some(cand) => {
                theta = cand;
                ev = pot.evaluate(theta.as_slice());
            }
            None => {
                // at rounding level the value cannot show a decrease; take
                // the full step if it still shrinks the gradient
                let cand = &theta + &step;
                let e = pot.evaluate(cand.as_slice());
                if e.gradient.amax() < residual {
                    theta = cand;
                    ev = e;
                } else {
                    break;
                }
            }
        }
    }
    if !converged {
        residual = ev.gradient.amax();
        converged = residual <= config.tol;
    }
    pot.evaluate(theta.as_slice());
    let coeffs = pot.density_coefficients().to_vec();
    let resolved = is_resolved(&coeffs, config.resolution_tail);
    MaxEntDistribution::new(
        *spec,
        theta.as_slice().to_vec(),
        coeffs,
        converged,
        resolved,
        residual,
        iterations,
    )
}

/// Selects a basis and solves. If the preferred basis fails, the other
/// primary variable is tried; the first attempt is returned when both fail.
pub fn solve_maxent(m: &ChebyshevMoments, config: &SolverConfig) -> Result<MaxEntDistribution> {
    config.validate()?;
    let mut first = None;
    for spec in candidate_bases(m, config) {
        let d = solve_with_basis(m, spec, config);
        if d.converged() {
            return Ok(d);
        }
        first.get_or_insert(d);
    }
    Ok(first.expect("at least one candidate"))
}
