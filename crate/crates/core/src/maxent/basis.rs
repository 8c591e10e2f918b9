use crate::moments::{AffineMap, ChebyshevMoments};

/// Variable in which the density is expanded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Primary {
    /// `u = s1(x)`; log moments enter as `T_j(s2(ln x(u)))`.
    Linear,
    /// `v = s2(ln x)`; standard moments enter as `T_j(s1(exp(y(v))))`.
    Log,
}

/// Selected basis: `k1` standard and `k2` log Chebyshev moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisSpec {
    pub k1: usize,
    pub k2: usize,
    pub primary: Primary,
    pub x_map: AffineMap,
    pub log_map: Option<AffineMap>,
}

impl BasisSpec {
    pub fn x_min(&self) -> f64 {
        self.x_map.lo()
    }

    pub fn x_max(&self) -> f64 {
        self.x_map.hi()
    }

    pub(crate) fn log_map_checked(&self) -> AffineMap {
        self.log_map.expect("log basis requires positive support")
    }

    /// Number of non-constant functions in the primary variable.
    pub fn primary_count(&self) -> usize {
        match self.primary {
            Primary::Linear => self.k1,
            Primary::Log => self.k2,
        }
    }

    pub fn secondary_count(&self) -> usize {
        match self.primary {
            Primary::Linear => self.k2,
            Primary::Log => self.k1,
        }
    }

    pub fn dim(&self) -> usize {
        1 + self.k1 + self.k2
    }

    pub fn primary_map(&self) -> AffineMap {
        match self.primary {
            Primary::Linear => self.x_map,
            Primary::Log => self.log_map_checked(),
        }
    }

    pub fn x_at(&self, u: f64) -> f64 {
        let x = match self.primary {
            Primary::Linear => self.x_map.from_unit(u),
            Primary::Log => self.log_map_checked().from_unit(u).exp(),
        };
        x.clamp(self.x_min(), self.x_max())
    }

    pub fn primary_at(&self, x: f64) -> f64 {
        let x = x.clamp(self.x_min(), self.x_max());
        let u = match self.primary {
            Primary::Linear => self.x_map.to_unit(x),
            Primary::Log => self.log_map_checked().to_unit(x.ln()),
        };
        u.clamp(-1.0, 1.0)
    }

    /// Argument of the secondary Chebyshev polynomials at primary `u`.
    pub fn secondary_at(&self, u: f64) -> f64 {
        let x = self.x_at(u);
        let z = match self.primary {
            Primary::Linear => self.log_map_checked().to_unit(x.ln()),
            Primary::Log => self.x_map.to_unit(x),
        };
        z.clamp(-1.0, 1.0)
    }

    /// `du/dx`, converting a density in `u` into a density in `x`.
    pub fn jacobian(&self, x: f64) -> f64 {
        match self.primary {
            Primary::Linear => 1.0 / self.x_map.half_width(),
            Primary::Log => 1.0 / (self.log_map_checked().half_width() * x),
        }
    }

    /// Target vector `[1, primary moments…, secondary moments…]`.
    pub fn target(&self, m: &ChebyshevMoments) -> Vec<f64> {
        let (p, s) = match self.primary {
            Primary::Linear => (m.standard(), m.log()),
            Primary::Log => (m.log(), m.standard()),
        };
        let mut t = Vec::with_capacity(self.dim());
        t.push(1.0);
        t.extend_from_slice(&p[..self.primary_count()]);
        t.extend_from_slice(&s[..self.secondary_count()]);
        t
    }
}
