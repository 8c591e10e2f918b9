//! Chebyshev series utilities on `[-1, 1]`: evaluation, interpolation at
//! Chebyshev–Lobatto nodes via a fast cosine transform, and exact integrals.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Evaluates `Σ c_j T_j(u)` with Clenshaw's recurrence.
pub fn eval_series(coeffs: &[f64], u: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &c in coeffs.iter().skip(1).rev() {
        let b0 = 2.0 * u * b1 - b2 + c;
        b2 = b1;
        b1 = b0;
    }
    coeffs.first().copied().unwrap_or(0.0) + u * b1 - b2
}

/// Fills `out` with `T_0(u), …, T_{out.len()-1}(u)`.
pub fn fill_basis(u: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = u;
    }
    for j in 2..out.len() {
        out[j] = 2.0 * u * out[j - 1] - out[j - 2];
    }
}

pub fn basis(u: f64, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    fill_basis(u, &mut v);
    v
}

/// `∫_{-1}^{1} T_p(u) du`.
pub fn integral_of_t(p: usize) -> f64 {
    if p % 2 == 1 {
        0.0
    } else {
        let p = p as f64;
        2.0 / (1.0 - p * p)
    }
}

/// `∫_{-1}^{1} T_m T_l du`, from `T_m T_l = (T_{m+l} + T_{|m-l|}) / 2`.
pub fn integral_of_product(m: usize, l: usize) -> f64 {
    0.5 * (integral_of_t(m + l) + integral_of_t(m.abs_diff(l)))
}

/// `∫_{-1}^{1} Σ c_j T_j du`.
pub fn integrate(coeffs: &[f64]) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .step_by(2)
        .map(|(j, &c)| c * integral_of_t(j))
        .sum()
}

/// Coefficients of the antiderivative `F` with `F(-1) = 0`.
pub fn antiderivative(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len();
    let c = |j: usize| coeffs.get(j).copied().unwrap_or(0.0);
    let mut b = vec![0.0; n + 1];
    if n == 0 {
        return b;
    }
    b[1] = c(0) - 0.5 * c(2);
    for j in 2..=n {
        b[j] = (c(j - 1) - c(j + 1)) / (2.0 * j as f64);
    }
    // T_j(-1) = (-1)^j
    let at_minus_one: f64 = b
        .iter()
        .enumerate()
        .skip(1)
        .map(|(j, &v)| if j % 2 == 0 { v } else { -v })
        .sum();
    b[0] = -at_minus_one;
    b
}

/// Chebyshev–Lobatto nodes `cos(π l / n)`, `l = 0..=n`, from `1` down to `-1`.
pub fn lobatto_nodes(n: usize) -> Vec<f64> {
    (0..=n)
        .map(|l| {
            if 2 * l == n {
                0.0
            } else {
                (PI * l as f64 / n as f64).cos()
            }
        })
        .collect()
}

/// Degree-`n` Chebyshev interpolation at the Lobatto nodes, computed with a
/// type-I discrete cosine transform of length `n + 1`.
pub struct ChebyshevTransform {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl std::fmt::Debug for ChebyshevTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChebyshevTransform").field("n", &self.n).finish()
    }
}

impl Clone for ChebyshevTransform {
    fn clone(&self) -> Self {
        Self::new(self.n)
    }
}

impl ChebyshevTransform {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "degree must be positive");
        let fft = FftPlanner::new().plan_fft_forward(2 * n);
        let scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        Self {
            n,
            fft,
            buf: vec![Complex::default(); 2 * n],
            scratch,
        }
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> Vec<f64> {
        lobatto_nodes(self.n)
    }

    /// Given `values[l] = f(cos(π l / n))`, writes `c` such that the
    /// interpolant is `Σ_{j=0}^{n} c_j T_j`.
    pub fn coefficients_into(&mut self, values: &[f64], out: &mut [f64]) {
        let n = self.n;
        assert_eq!(values.len(), n + 1);
        assert_eq!(out.len(), n + 1);
        // even extension of length 2n
        for l in 0..=n {
            self.buf[l] = Complex::new(values[l], 0.0);
        }
        for l in 1..n {
            self.buf[2 * n - l] = Complex::new(values[l], 0.0);
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        let scale = 1.0 / n as f64;
        for j in 0..=n {
            out[j] = self.buf[j].re * scale;
        }
        out[0] *= 0.5;
        out[n] *= 0.5;
    }

    pub fn coefficients(&mut self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n + 1];
        self.coefficients_into(values, &mut out);
        out
    }

    /// Interpolates `f` at the nodes and returns its coefficients.
    pub fn approximate<F: Fn(f64) -> f64>(&mut self, f: F) -> Vec<f64> {
        let values: Vec<f64> = self.nodes().into_iter().map(f).collect();
        self.coefficients(&values)
    }
}

/// Largest absolute coefficient among the top `tail` entries.
pub fn tail_magnitude(coeffs: &[f64], tail: usize) -> f64 {
    let start = coeffs.len().saturating_sub(tail);
    coeffs[start..].iter().fold(0.0, |m, c| m.max(c.abs()))
}
