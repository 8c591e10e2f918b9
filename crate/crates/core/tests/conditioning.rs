use moments_sketch::maxent::{condition_number, BasisSpec, Potential, Primary};
use moments_sketch::{max_stable_order, to_chebyshev_moments, AffineMap, MomentsSketch};
use nalgebra::{DMatrix, SymmetricEigen};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// Exact inverse of a nonsingular rational matrix.
fn inverse(a: &[Vec<BigRational>]) -> Vec<Vec<BigRational>> {
    let n = a.len();
    let mut m: Vec<Vec<BigRational>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { BigRational::one() } else { BigRational::zero() }));
            r
        })
        .collect();
    for col in 0..n {
        let p = (col..n).find(|&r| !m[r][col].is_zero()).expect("singular");
        m.swap(col, p);
        let pivot = m[col][col].clone();
        for v in m[col].iter_mut() {
            *v = &*v / &pivot;
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in 0..2 * n {
                    let d = &f * &m[col][c];
                    m[r][c] = &m[r][c] - d;
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

fn largest_eigenvalue(a: &[Vec<BigRational>]) -> f64 {
    let n = a.len();
    // scale before converting so huge entries stay finite
    let big = a
        .iter()
        .flatten()
        .map(|v| v.abs())
        .max()
        .expect("nonempty");
    let scaled = DMatrix::from_fn(n, n, |i, j| (&a[i][j] / &big).to_f64().unwrap());
    let e = SymmetricEigen::new(scaled).eigenvalues.amax();
    let log = big.numer().bits() as f64 - big.denom().bits() as f64;
    // refine the power-of-two estimate of `big`
    let mant = (&big / BigRational::from_integer(BigInt::from(2u8)).pow(log as i32))
        .to_f64()
        .unwrap();
    e * mant * 2f64.powf(log)
}

fn exact_condition(a: &[Vec<BigRational>]) -> f64 {
    largest_eigenvalue(a) * largest_eigenvalue(&inverse(a))
}

/// `∫_{lo}^{hi} x^p dx / (hi - lo)`.
fn uniform_power_moment(lo: i64, hi: i64, p: u32) -> BigRational {
    let num = BigInt::from(hi).pow(p + 1) - BigInt::from(lo).pow(p + 1);
    BigRational::new(num, BigInt::from((p as i64 + 1) * (hi - lo)))
}

/// `∫_{-1}^{1} T_m T_l du / 2`.
fn chebyshev_gram(m: usize, l: usize) -> BigRational {
    let it = |p: usize| {
        if p % 2 == 1 {
            BigRational::zero()
        } else {
            BigRational::new(BigInt::from(2), BigInt::from(1 - (p * p) as i64))
        }
    };
    (it(m + l) + it(m.abs_diff(l))) / rat(4)
}

#[test]
fn power_basis_is_ill_conditioned() {
    let k = 8;
    let h: Vec<Vec<BigRational>> = (0..=k)
        .map(|i| (0..=k).map(|j| uniform_power_moment(20, 100, (i + j) as u32)).collect())
        .collect();
    let kappa = exact_condition(&h);
    assert!(kappa >= 1e25, "power basis condition {kappa:e}");
}

#[test]
fn chebyshev_basis_is_well_conditioned() {
    let k = 8;
    let g: Vec<Vec<BigRational>> = (0..=k).map(|i| (0..=k).map(|j| chebyshev_gram(i, j)).collect()).collect();
    let oracle = exact_condition(&g);
    assert!((oracle - 11.3).abs() < 0.1, "oracle {oracle}");

    let spec = BasisSpec {
        k1: k,
        k2: 0,
        primary: Primary::Linear,
        x_map: AffineMap::new(20.0, 100.0),
        log_map: Some(AffineMap::new(20f64.ln(), 100f64.ln())),
    };
    let target = vec![0.0; spec.dim()];
    let mut pot = Potential::new(&spec, &target, 128);
    let h = pot.hessian(&vec![0.0; spec.dim()]);
    let kappa = condition_number(&h);
    assert!((kappa - oracle).abs() < 1e-8 * oracle, "{kappa} vs {oracle}");
}

#[test]
fn stability_formula() {
    assert_eq!(max_stable_order(0.0), 16);
    assert_eq!(max_stable_order(2.0), 10);
    assert_eq!(max_stable_order(1e6), 2);
    assert_eq!(max_stable_order(-2.0), 10);
}

/// Exact `E[T_i((x - center) / h)]` of the given points.
fn exact_chebyshev_moments(xs: &[f64], lo: f64, hi: f64, k: usize) -> Vec<BigRational> {
    let (lo, hi) = (exact(lo), exact(hi));
    let two = rat(2);
    let center = (&lo + &hi) / &two;
    let h = (&hi - &lo) / &two;
    let n = rat(xs.len() as i64);
    let mut sums = vec![BigRational::zero(); k + 1];
    for &x in xs {
        let u = (exact(x) - &center) / &h;
        let mut t_prev = BigRational::one();
        let mut t = u.clone();
        sums[0] += &t_prev;
        for s in sums.iter_mut().skip(1) {
            *s += &t;
            let next = &two * &u * &t - &t_prev;
            t_prev = t;
            t = next;
        }
    }
    sums.into_iter().map(|s| s / &n).collect()
}

#[test]
fn chebyshev_moments_at_offset_center() {
    let k = 10;
    // uniform on [1, 3]: scaled center 2
    let xs: Vec<f64> = (0..2001).map(|i| 1.0 + i as f64 / 1000.0).collect();
    let s = MomentsSketch::from_values(k, &xs).unwrap();
    let m = to_chebyshev_moments(&s).unwrap();
    assert!((m.x_map().scaled_center() - 2.0).abs() < 1e-15);
    let oracle = exact_chebyshev_moments(&xs, s.min(), s.max(), k);
    let kf = k as f64;
    let tol = 3f64.powi(-(k as i32)) * (1.0 / (kf - 1.0) - 1.0 / kf);
    for i in 1..=k {
        let err = (m.standard()[i - 1] - oracle[i].to_f64().unwrap()).abs();
        assert!(err <= tol, "order {i}: error {err:e} > {tol:e}");
    }
}

#[test]
fn chebyshev_moments_match_exact_values_near_zero_center() {
    let xs: Vec<f64> = (0..500).map(|i| ((i * 7919) % 1000) as f64 / 37.0 - 5.0).collect();
    let s = MomentsSketch::from_values(10, &xs).unwrap();
    let m = to_chebyshev_moments(&s).unwrap();
    let oracle = exact_chebyshev_moments(&xs, s.min(), s.max(), 10);
    for i in 1..=10 {
        assert!((m.standard()[i - 1] - oracle[i].to_f64().unwrap()).abs() < 1e-8);
    }
}

