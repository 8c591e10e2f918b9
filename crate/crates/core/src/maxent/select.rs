//! Greedy choice of how many standard (`k1`) and log (`k2`) moments to use.

use nalgebra::{DMatrix, SymmetricEigen};

use super::basis::{BasisSpec, Primary};
use super::config::{PrimaryChoice, SolverConfig};
use super::potential::Potential;
use crate::chebyshev::{fill_basis, integral_of_t, lobatto_nodes, tail_magnitude, ChebyshevTransform};
use crate::moments::ChebyshevMoments;

/// `E[T_i(U)]` for `U` uniform on `[-1, 1]`.
pub fn uniform_moment(i: usize) -> f64 {
    0.5 * integral_of_t(i)
}

/// Condition number of a symmetric matrix; infinite when not positive definite.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for &v in eig.eigenvalues.iter() {
        lo = lo.min(v);
        hi = hi.max(v.abs());
    }
    if !(lo > 0.0) {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Number of secondary orders `j` whose functions `h_j` and `h_{2j}` are
/// resolved by a degree-`n` Chebyshev interpolant.
pub(crate) fn admissible_secondary(spec: &BasisSpec, max: usize, n: usize, tol: f64) -> usize {
    if max == 0 {
        return 0;
    }
    let nodes = lobatto_nodes(n);
    let z: Vec<f64> = nodes.iter().map(|&u| spec.secondary_at(u)).collect();
    let mut t = vec![0.0; 2 * max + 1];
    let mut table = vec![vec![0.0; n + 1]; 2 * max + 1];
    for (l, &zl) in z.iter().enumerate() {
        fill_basis(zl, &mut t);
        for j in 0..=2 * max {
            table[j][l] = t[j];
        }
    }
    let mut transform = ChebyshevTransform::new(n);
    let tail = (n / 8).max(2);
    let resolved = |j: usize, transform: &mut ChebyshevTransform| {
        tail_magnitude(&transform.coefficients(&table[j]), tail) <= tol
    };
    let mut count = 0;
    for j in 1..=max {
        if resolved(j, &mut transform) && resolved(2 * j, &mut transform) {
            count = j;
        } else {
            break;
        }
    }
    count
}

fn spec_with(m: &ChebyshevMoments, primary: Primary, kp: usize, ks: usize) -> BasisSpec {
    let (k1, k2) = match primary {
        Primary::Linear => (kp, ks),
        Primary::Log => (ks, kp),
    };
    BasisSpec {
        k1,
        k2,
        primary,
        x_map: m.x_map(),
        log_map: m.log_map(),
    }
}

/// Greedy selection with a fixed primary variable.
pub fn select_in(m: &ChebyshevMoments, primary: Primary, config: &SolverConfig) -> BasisSpec {
    let (s1, s2) = m.stable_orders();
    let (kp_max, ks_cap) = match primary {
        Primary::Linear => (s1, s2),
        Primary::Log => {
            assert!(m.has_log(), "log primary requires log moments");
            (s2, s1)
        }
    };
    let probe = spec_with(m, primary, kp_max, ks_cap);
    let ks_max = admissible_secondary(&probe, ks_cap, config.n_c, config.admissible_tail);
    let full = spec_with(m, primary, kp_max, ks_max);

    let dim = full.dim();
    let mut pot = Potential::new(&full, &vec![0.0; dim], config.n_c);
    let h0 = pot.hessian(&vec![0.0; dim]);

    let (prim_mom, sec_mom) = match primary {
        Primary::Linear => (m.standard(), m.log()),
        Primary::Log => (m.log(), m.standard()),
    };
    let kappa = |a: usize, b: usize| {
        let idx: Vec<usize> = (0..=a).chain((1..=b).map(|j| kp_max + j)).collect();
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |r, c| h0[(idx[r], idx[c])]);
        condition_number(&sub)
    };

    let (mut a, mut b) = (1usize.min(kp_max), 0usize);
    loop {
        let mut options: Vec<(f64, bool, usize, usize)> = Vec::with_capacity(2);
        if a < kp_max {
            let d = (prim_mom[a] - uniform_moment(a + 1)).abs();
            options.push((d, primary == Primary::Linear, a + 1, b));
        }
        if b < ks_max {
            let d = (sec_mom[b] - uniform_moment(b + 1)).abs();
            options.push((d, primary == Primary::Log, a, b + 1));
        }
        // closer to uniform first; ties go to the standard family
        options.sort_by(|x, y| x.0.total_cmp(&y.0).then(y.1.cmp(&x.1)));
        match options
            .into_iter()
            .find(|&(_, _, na, nb)| kappa(na, nb) <= config.kappa_max)
        {
            Some((_, _, na, nb)) => {
                a = na;
                b = nb;
            }
            None => break,
        }
    }
    spec_with(m, primary, a, b)
}

/// Bases to try, most preferred first.
pub(crate) fn candidate_bases(m: &ChebyshevMoments, config: &SolverConfig) -> Vec<BasisSpec> {
    match config.primary {
        PrimaryChoice::Linear => vec![select_in(m, Primary::Linear, config)],
        PrimaryChoice::Log if m.has_log() => vec![select_in(m, Primary::Log, config)],
        PrimaryChoice::Log => vec![select_in(m, Primary::Linear, config)],
        PrimaryChoice::Auto => {
            let lin = select_in(m, Primary::Linear, config);
            if !m.has_log() {
                return vec![lin];
            }
            let log = select_in(m, Primary::Log, config);
            if log.k1 + log.k2 > lin.k1 + lin.k2 {
                vec![log, lin]
            } else {
                vec![lin, log]
            }
        }
    }
}

/// Chooses `(k1, k2)` and the primary variable.
///
/// Moments are added one at a time, each step taking whichever of the next
/// standard or next log moment is closer to the corresponding moment of the
/// uniform distribution, as long as the Hessian at the uniform density stays
/// within `kappa_max`. With automatic primary selection the variable that
/// admits more moments wins, ties going to the linear one.
pub fn select_moment_counts(m: &ChebyshevMoments, config: &SolverConfig) -> BasisSpec {
    candidate_bases(m, config)
        .into_iter()
        .next()
        .expect("at least one candidate")
}
