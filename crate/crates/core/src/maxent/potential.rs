//! The convex potential `L(θ) = ∫ exp(Σ θ_a m_a(u)) du − Σ θ_a μ_a` on
//! `[-1, 1]` and its derivatives.
//!
//! Integrals come from degree-`n` Chebyshev interpolants of the integrand
//! factors. For the primary block the density is expanded once and products
//! with `T_i` are integrated exactly using `T_i T_l = (T_{i+l} + T_{|i-l|})/2`.
//! Each secondary function `h_j` is a Chebyshev polynomial of a fixed
//! argument, so `h_j h_k = (h_{j+k} + h_{|j-k|})/2` as well, and only the
//! products `h_j · g` for `j <= k2` need their own expansions.

use nalgebra::{DMatrix, DVector};

use super::basis::BasisSpec;
use crate::chebyshev::{fill_basis, integral_of_product, integral_of_t, lobatto_nodes, ChebyshevTransform};

pub struct Potential {
    n: usize,
    kp: usize,
    ks: usize,
    target: Vec<f64>,
    /// `T_i(u_l)`, row-major `(kp + 1) × (n + 1)`.
    prim: Vec<f64>,
    /// `h_j(u_l)`, row-major `(2 ks + 1) × (n + 1)`.
    sec: Vec<f64>,
    /// Clenshaw–Curtis weights.
    weights: Vec<f64>,
    /// `∫ T_m T_l`, row-major `(2 kp + 1) × (n + 1)`.
    jtab: Vec<f64>,
    transform: ChebyshevTransform,
    g: Vec<f64>,
    coeffs: Vec<f64>,
    scratch: Vec<f64>,
    scratch_coeffs: Vec<f64>,
}

/// Value, gradient and Hessian at one `θ`.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

pub(crate) fn clenshaw_curtis_weights(n: usize) -> Vec<f64> {
    let nf = n as f64;
    (0..=n)
        .map(|l| {
            let eps = if l == 0 || l == n { 0.5 } else { 1.0 };
            let s: f64 = (0..=n)
                .step_by(2)
                .map(|j| {
                    let gamma = if j == 0 || j == n { 0.5 } else { 1.0 };
                    let angle = std::f64::consts::PI * ((j * l) % (2 * n)) as f64 / nf;
                    gamma * integral_of_t(j) * angle.cos()
                })
                .sum();
            2.0 * eps * s / nf
        })
        .collect()
}

impl Potential {
    /// `target` is `[1, primary moments…, secondary moments…]` matching `spec`.
    pub fn new(spec: &BasisSpec, target: &[f64], n: usize) -> Self {
        let kp = spec.primary_count();
        let ks = spec.secondary_count();
        assert_eq!(target.len(), 1 + kp + ks, "target length");
        let nodes = lobatto_nodes(n);
        let w = n + 1;

        let mut prim = vec![0.0; (kp + 1) * w];
        let mut sec = vec![0.0; (2 * ks + 1) * w];
        let mut tp = vec![0.0; kp + 1];
        let mut ts = vec![0.0; 2 * ks + 1];
        for (l, &u) in nodes.iter().enumerate() {
            fill_basis(u, &mut tp);
            for i in 0..=kp {
                prim[i * w + l] = tp[i];
            }
            if ks > 0 {
                fill_basis(spec.secondary_at(u), &mut ts);
                for j in 0..=2 * ks {
                    sec[j * w + l] = ts[j];
                }
            }
        }
        let mut jtab = vec![0.0; (2 * kp + 1) * w];
        for m in 0..=2 * kp {
            for l in 0..w {
                jtab[m * w + l] = integral_of_product(m, l);
            }
        }
        Self {
            n,
            kp,
            ks,
            target: target.to_vec(),
            prim,
            sec,
            weights: clenshaw_curtis_weights(n),
            jtab,
            transform: ChebyshevTransform::new(n),
            g: vec![0.0; w],
            coeffs: vec![0.0; w],
            scratch: vec![0.0; w],
            scratch_coeffs: vec![0.0; w],
        }
    }

    pub fn dim(&self) -> usize {
        1 + self.kp + self.ks
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    fn row(table: &[f64], w: usize, i: usize) -> &[f64] {
        &table[i * w..(i + 1) * w]
    }

    /// Density values `g(u_l)` at the nodes. Returns false on overflow.
    fn fill_density(&mut self, theta: &[f64]) -> bool {
        assert_eq!(theta.len(), self.dim(), "theta length");
        let w = self.n + 1;
        let mut ok = true;
        for l in 0..w {
            let mut e = 0.0;
            for i in 0..=self.kp {
                e += theta[i] * self.prim[i * w + l];
            }
            for j in 1..=self.ks {
                e += theta[self.kp + j] * self.sec[j * w + l];
            }
            let v = e.exp();
            ok &= v.is_finite();
            self.g[l] = v;
        }
        ok
    }

    fn dot_theta(&self, theta: &[f64]) -> f64 {
        theta.iter().zip(&self.target).map(|(t, m)| t * m).sum()
    }

    pub fn value(&mut self, theta: &[f64]) -> f64 {
        if !self.fill_density(theta) {
            return f64::INFINITY;
        }
        let mass: f64 = self.weights.iter().zip(&self.g).map(|(w, g)| w * g).sum();
        mass - self.dot_theta(theta)
    }

    pub fn gradient(&mut self, theta: &[f64]) -> DVector<f64> {
        self.evaluate(theta).gradient
    }

    pub fn hessian(&mut self, theta: &[f64]) -> DMatrix<f64> {
        self.evaluate(theta).hessian
    }

    /// Chebyshev coefficients of the density at the last evaluated `θ`.
    pub fn density_coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn evaluate(&mut self, theta: &[f64]) -> Evaluation {
        let dim = self.dim();
        let (kp, ks, w) = (self.kp, self.ks, self.n + 1);
        if !self.fill_density(theta) {
            return Evaluation {
                value: f64::INFINITY,
                gradient: DVector::from_element(dim, f64::NAN),
                hessian: DMatrix::from_element(dim, dim, f64::NAN),
            };
        }
        self.transform.coefficients_into(&self.g, &mut self.coeffs);

        // M_m = ∫ T_m g
        let mom: Vec<f64> = (0..=2 * kp)
            .map(|m| {
                Self::row(&self.jtab, w, m)
                    .iter()
                    .zip(&self.coeffs)
                    .map(|(j, c)| j * c)
                    .sum()
            })
            .collect();
        // S_j = ∫ h_j g
        let mut sec_mom = vec![mom[0]; 2 * ks + 1];
        for (j, s) in sec_mom.iter_mut().enumerate().skip(1) {
            *s = Self::row(&self.sec, w, j)
                .iter()
                .zip(&self.g)
                .zip(&self.weights)
                .map(|((h, g), wt)| h * g * wt)
                .sum();
        }

        let mut hess = DMatrix::zeros(dim, dim);
        for a in 0..=kp {
            for b in 0..=a {
                let v = 0.5 * (mom[a + b] + mom[a - b]);
                hess[(a, b)] = v;
                hess[(b, a)] = v;
            }
        }
        for j in 1..=ks {
            for jj in 1..=j {
                let v = 0.5 * (sec_mom[j + jj] + sec_mom[j - jj]);
                hess[(kp + j, kp + jj)] = v;
                hess[(kp + jj, kp + j)] = v;
            }
            // ∫ T_i h_j g via the expansion of h_j g
            for l in 0..w {
                self.scratch[l] = self.sec[j * w + l] * self.g[l];
            }
            self.transform
                .coefficients_into(&self.scratch, &mut self.scratch_coeffs);
            for i in 0..=kp {
                let v: f64 = Self::row(&self.jtab, w, i)
                    .iter()
                    .zip(&self.scratch_coeffs)
                    .map(|(jv, d)| jv * d)
                    .sum();
                hess[(i, kp + j)] = v;
                hess[(kp + j, i)] = v;
            }
        }

        let mut grad = DVector::zeros(dim);
        for a in 0..=kp {
            grad[a] = mom[a] - self.target[a];
        }
        for j in 1..=ks {
            grad[kp + j] = sec_mom[j] - self.target[kp + j];
        }
        let mass: f64 = self.weights.iter().zip(&self.g).map(|(w, g)| w * g).sum();
        Evaluation {
            value: mass - self.dot_theta(theta),
            gradient: grad,
            hessian: hess,
        }
    }
}
