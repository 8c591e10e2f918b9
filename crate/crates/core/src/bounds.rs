//! Worst-case bounds on `rank(t) = #{x : x < t}` implied by a sketch.
//!
//! [`markov_bound`] applies Markov's inequality to powers of `x - x_min`,
//! `x_max - x` and their log counterparts. [`rtt_bound`] computes the
//! Chebyshev–Markov–Stieltjes bounds: the quadrature rule that matches the
//! moments and has a node at `t` brackets the mass below `t` for every
//! distribution with those moments.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::chebyshev::{basis, eval_series};
use crate::error::{Result, SketchError};
use crate::maxent::condition_number;
use crate::moments::{to_chebyshev_moments, AffineMap, ChebyshevMoments};
use crate::sketch::MomentsSketch;

/// Bounds on the number of points strictly below `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankBounds {
    pub lower: f64,
    pub upper: f64,
    pub t: f64,
    /// Set when a numerical failure forced a fallback to weaker bounds.
    pub degraded: bool,
}

impl RankBounds {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, rank: f64) -> bool {
        self.lower <= rank && rank <= self.upper
    }

    fn exact(t: f64, r: f64) -> Self {
        Self {
            lower: r,
            upper: r,
            t,
            degraded: false,
        }
    }

    fn intersect(self, other: RankBounds) -> RankBounds {
        let lower = self.lower.max(other.lower);
        let upper = self.upper.min(other.upper);
        if lower <= upper {
            RankBounds {
                lower,
                upper,
                t: self.t,
                degraded: self.degraded && other.degraded,
            }
        } else {
            // inconsistent only through rounding; keep the wider of the two
            if self.width() >= other.width() {
                self
            } else {
                other
            }
        }
    }
}

/// Coefficients of `(1 + u)^i` in the Chebyshev basis, `i = 0..=k`.
fn shifted_power_table(k: usize) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![1.0]];
    for i in 1..=k {
        let prev = &rows[i - 1];
        let mut next = vec![0.0; i + 1];
        for (j, &c) in prev.iter().enumerate() {
            next[j] += c;
            // u T_j = (T_{j+1} + T_{|j-1|}) / 2
            next[j + 1] += 0.5 * c;
            next[j.abs_diff(1)] += 0.5 * c;
        }
        rows.push(next);
    }
    rows
}

/// One family of Chebyshev moments (standard or log) on `[-1, 1]`.
#[derive(Debug, Clone)]
struct Family {
    map: AffineMap,
    /// `E[T_i]`, `i = 0..=k`.
    cheb: Vec<f64>,
    /// `E[(1 + u)^i]` and `E[(1 - u)^i]` plus rounding slack, `i = 0..=k`.
    up: Vec<f64>,
    down: Vec<f64>,
    rtt: Option<Cms>,
}

#[derive(Debug, Clone)]
struct Cms {
    chol: Cholesky<f64, Dyn>,
    m: usize,
    slack: f64,
}

const EPS: f64 = f64::EPSILON;
/// Gram matrices beyond this condition number are shrunk.
const MAX_GRAM_KAPPA: f64 = 1e10;

impl Family {
    /// `moment_tol` is an additional absolute uncertainty on each Chebyshev
    /// moment.
    fn new(map: AffineMap, moments: &[f64], k: usize, moment_tol: f64) -> Self {
        let mut cheb = Vec::with_capacity(k + 1);
        cheb.push(1.0);
        cheb.extend_from_slice(&moments[..k]);
        let table = shifted_power_table(k);
        // rounding in the moment conversion grows like (|c| + 1)^i
        let growth = 2.0 * (map.scaled_center().abs() + 1.0);
        let mut up = Vec::with_capacity(k + 1);
        let mut down = Vec::with_capacity(k + 1);
        for (i, row) in table.iter().enumerate() {
            let slack = 64.0 * EPS * (2.0 * growth).powi(i as i32) + 2f64.powi(i as i32) * moment_tol;
            let plus: f64 = row.iter().zip(&cheb).map(|(a, m)| a * m).sum();
            // (1 - u)^i has the same coefficients with sign (-1)^j
            let minus: f64 = row
                .iter()
                .zip(&cheb)
                .enumerate()
                .map(|(j, (a, m))| if j % 2 == 0 { a * m } else { -a * m })
                .sum();
            up.push(plus.max(0.0) + slack);
            down.push(minus.max(0.0) + slack);
        }
        let rtt = Cms::new(&cheb, growth, moment_tol);
        Self {
            map,
            cheb,
            up,
            down,
            rtt,
        }
    }

    /// Markov bounds on the fraction of mass below unit coordinate `u`.
    fn markov(&self, u: f64) -> (f64, f64) {
        let k = self.cheb.len() - 1;
        let mut lower = 0.0f64;
        let mut upper = 1.0f64;
        let s_plus = 1.0 + u;
        let s_minus = 1.0 - u;
        for i in 1..=k {
            if s_plus > 0.0 {
                lower = lower.max(1.0 - self.up[i] / s_plus.powi(i as i32));
            }
            if s_minus > 0.0 {
                upper = upper.min(self.down[i] / s_minus.powi(i as i32));
            }
        }
        (lower, upper)
    }
}

impl Cms {
    fn new(cheb: &[f64], growth: f64, moment_tol: f64) -> Option<Self> {
        let k = cheb.len() - 1;
        let mut m = k / 2;
        while m >= 1 {
            let g = DMatrix::from_fn(m + 1, m + 1, |i, j| 0.5 * (cheb[i + j] + cheb[i.abs_diff(j)]));
            let kappa = condition_number(&g);
            if kappa <= MAX_GRAM_KAPPA {
                if let Some(chol) = Cholesky::new(g) {
                    let moment_err = 64.0 * EPS * growth.powi(2 * m as i32);
                    let slack = 1e-9 + kappa * (moment_err + 4.0 * moment_tol);
                    return Some(Self { chol, m, slack });
                }
            }
            m -= 1;
        }
        None
    }

    fn kernel_weight(&self, y: f64) -> f64 {
        let v = DVector::from_vec(basis(y, self.m + 1));
        let a = self.chol.solve(&v);
        1.0 / v.dot(&a)
    }

    /// Fraction bounds at unit coordinate `t`, or `None` on numerical failure.
    fn bound(&self, t: f64) -> Option<(f64, f64)> {
        let m = self.m;
        let v = DVector::from_vec(basis(t, m + 1));
        let a = self.chol.solve(&v);
        let w_t = 1.0 / v.dot(&a);
        let roots = chebyshev_roots(a.as_slice())?;
        if roots.len() != m {
            return None;
        }
        let mut lower = 0.0;
        let mut total = w_t;
        for &y in &roots {
            let w = self.kernel_weight(y);
            if !(w > 0.0) {
                return None;
            }
            total += w;
            if y < t {
                lower += w;
            }
        }
        if (total - 1.0).abs() > 1e-6 {
            return None;
        }
        Some((lower - self.slack, lower + w_t + self.slack))
    }
}

/// Real roots of `Σ a_j T_j` from the eigenvalues of its colleague matrix.
fn chebyshev_roots(a: &[f64]) -> Option<Vec<f64>> {
    let mut deg = a.len() - 1;
    let scale = a.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    while deg > 0 && a[deg].abs() <= 1e-14 * scale {
        deg -= 1;
    }
    if deg == 0 {
        return Some(Vec::new());
    }
    if deg == 1 {
        return Some(vec![-a[0] / a[1]]);
    }
    let mut c = DMatrix::zeros(deg, deg);
    c[(0, 1)] = 1.0;
    for i in 1..deg {
        c[(i, i - 1)] = 0.5;
        if i + 1 < deg {
            c[(i, i + 1)] = 0.5;
        }
    }
    for j in 0..deg {
        c[(deg - 1, j)] -= a[j] / (2.0 * a[deg]);
    }
    let eig = c.complex_eigenvalues();
    let mut roots = Vec::with_capacity(deg);
    for z in eig.iter() {
        if z.im.abs() > 1e-7 * (1.0 + z.re.abs()) {
            return None;
        }
        roots.push(z.re);
    }
    // polish against the series itself
    for r in roots.iter_mut() {
        for _ in 0..3 {
            let f = eval_series(a, *r);
            let h = 1e-7 * (1.0 + r.abs());
            let df = (eval_series(a, *r + h) - eval_series(a, *r - h)) / (2.0 * h);
            if df == 0.0 || !df.is_finite() {
                break;
            }
            let step = f / df;
            if step.abs() > 1e-3 {
                break;
            }
            *r -= step;
        }
    }
    Some(roots)
}

/// Precomputed bounds for one sketch, reusable across probes.
#[derive(Debug, Clone)]
pub struct BoundsContext {
    n: f64,
    /// Apply the facts that hold only for finite datasets: at least one
    /// point lies below any `t > x_min` and one at or above any `t <= x_max`.
    discrete: bool,
    x_min: f64,
    x_max: f64,
    standard: Option<Family>,
    log: Option<Family>,
}

impl BoundsContext {
    /// Uses every stored moment.
    pub fn new(sketch: &MomentsSketch) -> Result<Self> {
        let k = sketch.order();
        Self::with_orders(sketch, k, k)
    }

    /// Uses at most `k1` standard and `k2` log moments.
    pub fn with_orders(sketch: &MomentsSketch, k1: usize, k2: usize) -> Result<Self> {
        match to_chebyshev_moments(sketch) {
            Ok(m) => Ok(Self::from_moments(&m, k1, k2)),
            Err(SketchError::DegenerateSupport(x)) => Ok(Self {
                n: sketch.count() as f64,
                discrete: true,
                x_min: x,
                x_max: x,
                standard: None,
                log: None,
            }),
            Err(e) => Err(e),
        }
    }

    pub fn from_moments(m: &ChebyshevMoments, k1: usize, k2: usize) -> Self {
        Self::build(m, k1, k2, 0.0, true)
    }

    /// Bounds valid for any distribution on `[x_min, x_max]` whose first
    /// `k1` standard and `k2` log Chebyshev moments are within `moment_tol`
    /// of the sketch's. Used to compare against a fitted density.
    pub fn continuous(m: &ChebyshevMoments, k1: usize, k2: usize, moment_tol: f64) -> Self {
        Self::build(m, k1, k2, moment_tol, false)
    }

    fn build(m: &ChebyshevMoments, k1: usize, k2: usize, moment_tol: f64, discrete: bool) -> Self {
        let k1 = k1.min(m.standard().len());
        let k2 = k2.min(m.log().len());
        let standard = (k1 > 0).then(|| Family::new(m.x_map(), m.standard(), k1, moment_tol));
        let log = match m.log_map() {
            Some(map) if k2 > 0 => Some(Family::new(map, m.log(), k2, moment_tol)),
            _ => None,
        };
        Self {
            n: m.count() as f64,
            discrete,
            x_min: m.x_min(),
            x_max: m.x_max(),
            standard,
            log,
        }
    }

    pub fn count(&self) -> f64 {
        self.n
    }

    fn range(&self, t: f64) -> Option<RankBounds> {
        if t <= self.x_min {
            Some(RankBounds::exact(t, 0.0))
        } else if t > self.x_max {
            Some(RankBounds::exact(t, self.n))
        } else {
            None
        }
    }

    /// Applies the bounds every dataset satisfies and scales to counts.
    fn finish(&self, t: f64, lower: f64, upper: f64, degraded: bool) -> RankBounds {
        let n = self.n;
        let (mut lower, mut upper) = (lower * n, upper * n);
        if self.discrete {
            lower = lower.max(1.0);
            upper = upper.min(n - 1.0);
        }
        let lower = lower.clamp(0.0, n);
        let upper = upper.clamp(0.0, n);
        RankBounds {
            lower: lower.min(upper),
            upper: upper.max(lower),
            t,
            degraded,
        }
    }

    pub fn markov(&self, t: f64) -> RankBounds {
        if let Some(r) = self.range(t) {
            return r;
        }
        let (mut lower, mut upper) = (0.0f64, 1.0f64);
        for (fam, arg) in self.families(t) {
            let (l, u) = fam.markov(fam.map.to_unit(arg));
            lower = lower.max(l);
            upper = upper.min(u);
        }
        self.finish(t, lower, upper, false)
    }

    pub fn rtt(&self, t: f64) -> RankBounds {
        if let Some(r) = self.range(t) {
            return r;
        }
        let mut out: Option<RankBounds> = None;
        let mut failed = false;
        for (fam, arg) in self.families(t) {
            let Some(cms) = &fam.rtt else {
                failed = true;
                continue;
            };
            match cms.bound(fam.map.to_unit(arg)) {
                Some((l, u)) => {
                    let b = self.finish(t, l, u, false);
                    out = Some(match out {
                        Some(prev) => prev.intersect(b),
                        None => b,
                    });
                }
                None => failed = true,
            }
        }
        match out {
            Some(b) => b,
            None => {
                let mut b = self.markov(t);
                b.degraded = failed || b.degraded;
                b
            }
        }
    }

    fn families(&self, t: f64) -> impl Iterator<Item = (&Family, f64)> {
        let s = self.standard.as_ref().map(|f| (f, t));
        let l = self.log.as_ref().map(|f| (f, t.ln()));
        s.into_iter().chain(l)
    }

    /// Worst-case quantile error of `q_hat` as a `phi`-quantile, measured
    /// against the target rank `floor(phi n)`.
    pub fn quantile_error_bound(&self, q_hat: f64, phi: f64) -> f64 {
        let b = self.rtt(q_hat);
        let target = (phi * self.n).floor();
        (b.lower - target).abs().max((b.upper - target).abs()) / self.n
    }
}

fn check_nonempty(sketch: &MomentsSketch) -> Result<()> {
    if sketch.is_empty() {
        Err(SketchError::EmptySketch)
    } else {
        Ok(())
    }
}

pub fn markov_bound(sketch: &MomentsSketch, t: f64) -> Result<RankBounds> {
    check_nonempty(sketch)?;
    Ok(BoundsContext::new(sketch)?.markov(t))
}

pub fn rtt_bound(sketch: &MomentsSketch, t: f64) -> Result<RankBounds> {
    check_nonempty(sketch)?;
    Ok(BoundsContext::new(sketch)?.rtt(t))
}

pub fn quantile_error_bound(sketch: &MomentsSketch, q_hat: f64, phi: f64) -> Result<f64> {
    check_nonempty(sketch)?;
    Ok(BoundsContext::new(sketch)?.quantile_error_bound(q_hat, phi))
}
