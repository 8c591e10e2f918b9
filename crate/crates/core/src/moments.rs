//! Conversion of stored power sums into Chebyshev-basis moments on `[-1, 1]`.

use crate::error::{Result, SketchError};
use crate::sketch::MomentsSketch;

/// Affine map from `[lo, hi]` onto `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    lo: f64,
    hi: f64,
}

impl AffineMap {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo < hi);
        Self { lo, hi }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    /// Center of the data after scaling to unit half-width.
    pub fn scaled_center(&self) -> f64 {
        self.center() / self.half_width()
    }

    /// Exact at the endpoints: `lo -> -1`, `hi -> 1`.
    pub fn to_unit(&self, x: f64) -> f64 {
        ((x - self.lo) - (self.hi - x)) / (self.hi - self.lo)
    }

    /// Inverse of [`to_unit`](Self::to_unit), exact at `±1`.
    pub fn from_unit(&self, u: f64) -> f64 {
        0.5 * ((1.0 - u) * self.lo + (1.0 + u) * self.hi)
    }
}

/// Number of moments that survive the shift onto `[-1, 1]` in double
/// precision when the scaled data is centered at `c`.
pub fn max_stable_order(c: f64) -> usize {
    let k = 13.06 / (0.78 + (c.abs() + 1.0).log10());
    if k.is_nan() {
        return 2;
    }
    (k.floor() as usize).clamp(2, 20)
}

/// Sample moments `E[T_i(s1(x))]` and `E[T_i(s2(ln x))]`, `i = 1..=k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevMoments {
    count: u64,
    x_map: AffineMap,
    log_map: Option<AffineMap>,
    standard: Vec<f64>,
    log: Vec<f64>,
}

impl ChebyshevMoments {
    pub fn new(
        count: u64,
        x_map: AffineMap,
        log_map: Option<AffineMap>,
        standard: Vec<f64>,
        log: Vec<f64>,
    ) -> Self {
        debug_assert!(log_map.is_some() || log.is_empty());
        Self {
            count,
            x_map,
            log_map,
            standard,
            log,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn x_map(&self) -> AffineMap {
        self.x_map
    }

    pub fn log_map(&self) -> Option<AffineMap> {
        self.log_map
    }

    pub fn x_min(&self) -> f64 {
        self.x_map.lo
    }

    pub fn x_max(&self) -> f64 {
        self.x_map.hi
    }

    /// `E[T_i(s1(x))]` for `i = 1..=k`.
    pub fn standard(&self) -> &[f64] {
        &self.standard
    }

    /// `E[T_i(s2(ln x))]` for `i = 1..=k`; empty when log moments are unusable.
    pub fn log(&self) -> &[f64] {
        &self.log
    }

    pub fn has_log(&self) -> bool {
        !self.log.is_empty()
    }

    /// Orders usable without catastrophic cancellation: `(standard, log)`.
    pub fn stable_orders(&self) -> (usize, usize) {
        let k1 = self
            .standard
            .len()
            .min(max_stable_order(self.x_map.scaled_center()));
        let k2 = match self.log_map {
            Some(m) if self.has_log() => self.log.len().min(max_stable_order(m.scaled_center())),
            _ => 0,
        };
        (k1, k2)
    }
}

/// Converts raw moments `E[x^i]` (`raw[0] = 1`) into `E[T_i(map(x))]`,
/// `i = 0..raw.len()`. The data is scaled to unit half-width first, then
/// shifted with the binomial expansion, then expressed in the Chebyshev basis.
pub fn power_to_chebyshev(raw: &[f64], map: AffineMap) -> Vec<f64> {
    let k = raw.len();
    let h = map.half_width();
    let c = map.scaled_center();
    // E[(x/h)^i]
    let mut scaled = Vec::with_capacity(k);
    let mut hp = 1.0;
    for &r in raw {
        scaled.push(r / hp);
        hp *= h;
    }
    // E[(x/h - c)^j]
    let binom = binomial_table(k);
    let mut shifted = vec![0.0; k];
    for j in 0..k {
        let mut acc = 0.0;
        let mut cp = 1.0;
        for i in (0..=j).rev() {
            acc += binom[j][i] * scaled[i] * cp;
            cp *= -c;
        }
        shifted[j] = acc;
    }
    let t = chebyshev_monomial_table(k);
    (0..k)
        .map(|j| (0..=j).map(|i| t[j][i] * shifted[i]).sum())
        .collect()
}

fn binomial_table(k: usize) -> Vec<Vec<f64>> {
    let mut b = vec![vec![0.0; k]; k];
    for j in 0..k {
        b[j][0] = 1.0;
        for i in 1..=j {
            b[j][i] = b[j - 1][i - 1] + if i < j { b[j - 1][i] } else { 0.0 };
        }
    }
    b
}

/// Row `j` holds the monomial coefficients of `T_j`.
pub(crate) fn chebyshev_monomial_table(k: usize) -> Vec<Vec<f64>> {
    let mut t = vec![vec![0.0; k.max(2)]; k.max(2)];
    t[0][0] = 1.0;
    t[1][1] = 1.0;
    for j in 2..k {
        for i in 0..=j {
            let up = if i > 0 { 2.0 * t[j - 1][i - 1] } else { 0.0 };
            t[j][i] = up - t[j - 2][i];
        }
    }
    t.truncate(k);
    t
}

/// Chebyshev moments of a sketch's data.
///
/// Log moments are produced only when every point is positive and the log
/// range is non-degenerate.
pub fn to_chebyshev_moments(sketch: &MomentsSketch) -> Result<ChebyshevMoments> {
    if sketch.is_empty() {
        return Err(SketchError::EmptySketch);
    }
    if sketch.extrema_stale() {
        return Err(SketchError::StaleExtrema);
    }
    let (lo, hi) = (sketch.min(), sketch.max());
    if lo == hi {
        return Err(SketchError::DegenerateSupport(lo));
    }
    let n = sketch.count() as f64;
    let raw = |sums: &[f64]| {
        let mut v = Vec::with_capacity(sums.len() + 1);
        v.push(1.0);
        v.extend(sums.iter().map(|s| s / n));
        v
    };
    let x_map = AffineMap::new(lo, hi);
    let standard = power_to_chebyshev(&raw(sketch.power_sums()), x_map)[1..].to_vec();

    let mut log_map = None;
    let mut log = Vec::new();
    if sketch.has_log_moments() {
        let (llo, lhi) = (lo.ln(), hi.ln());
        if llo < lhi {
            let m = AffineMap::new(llo, lhi);
            log = power_to_chebyshev(&raw(sketch.log_sums()), m)[1..].to_vec();
            log_map = Some(m);
        }
    }
    Ok(ChebyshevMoments::new(
        sketch.count(),
        x_map,
        log_map,
        standard,
        log,
    ))
}
