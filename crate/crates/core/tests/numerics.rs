use moments_sketch::maxent::{
    condition_number, select_moment_counts, solve_maxent, solve_with_basis, BasisSpec, Potential,
    Primary, PrimaryChoice, SolverConfig,
};
use moments_sketch::{to_chebyshev_moments, AffineMap, ChebyshevMoments, MomentsSketch};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            left + right + diff / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

fn cheb(i: usize, z: f64) -> f64 {
    (i as f64 * z.clamp(-1.0, 1.0).acos()).cos()
}

/// Basis functions of `spec` at primary coordinate `u`, computed directly.
fn basis_functions(spec: &BasisSpec, u: f64) -> Vec<f64> {
    let (lo, hi) = (spec.x_min(), spec.x_max());
    let x = match spec.primary {
        Primary::Linear => lo + 0.5 * (u + 1.0) * (hi - lo),
        Primary::Log => (lo.ln() + 0.5 * (u + 1.0) * (hi.ln() - lo.ln())).exp(),
    };
    let s1 = (2.0 * x - lo - hi) / (hi - lo);
    let s2 = (2.0 * x.ln() - lo.ln() - hi.ln()) / (hi.ln() - lo.ln());
    let (p, s) = match spec.primary {
        Primary::Linear => (s1, s2),
        Primary::Log => (s2, s1),
    };
    let mut out = vec![1.0];
    out.extend((1..=spec.primary_count()).map(|i| cheb(i, p)));
    out.extend((1..=spec.secondary_count()).map(|j| cheb(j, s)));
    out
}

fn spec(primary: Primary, k1: usize, k2: usize, lo: f64, hi: f64) -> BasisSpec {
    BasisSpec {
        k1,
        k2,
        primary,
        x_map: AffineMap::new(lo, hi),
        log_map: Some(AffineMap::new(lo.ln(), hi.ln())),
    }
}

fn random_case(rng: &mut ChaCha8Rng) -> (BasisSpec, Vec<f64>) {
    let primary = if rng.random_bool(0.5) { Primary::Linear } else { Primary::Log };
    let k1 = rng.random_range(1..=8);
    let k2 = rng.random_range(0..=8 - k1);
    let lo = rng.random_range(0.1..5.0);
    let hi = lo * rng.random_range(1.5..20.0);
    let s = spec(primary, k1, k2, lo, hi);
    let theta: Vec<f64> = (0..s.dim())
        .map(|i| if i == 0 { rng.random_range(-1.0..0.0) } else { rng.random_range(-0.6..0.6) })
        .collect();
    (s, theta)
}

fn target_for(s: &BasisSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut t = vec![1.0];
    t.extend((1..s.dim()).map(|_| rng.random_range(-0.3..0.3)));
    t
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let (s, theta) = random_case(&mut rng);
        let target = target_for(&s, &mut rng);
        let mut pot = Potential::new(&s, &target, 128);
        let ev = pot.evaluate(&theta);
        let scale = ev.gradient.amax().max(1.0);
        let h = 1e-5;
        for a in 0..s.dim() {
            let mut p = theta.clone();
            let mut m = theta.clone();
            p[a] += h;
            m[a] -= h;
            let fd = (pot.value(&p) - pot.value(&m)) / (2.0 * h);
            let err = (fd - ev.gradient[a]).abs() / scale;
            assert!(err < 1e-5, "component {a}: analytic {} fd {fd}", ev.gradient[a]);
        }
    }
}

#[test]
fn hessian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let (s, theta) = random_case(&mut rng);
        let target = target_for(&s, &mut rng);
        let mut pot = Potential::new(&s, &target, 128);
        let ev = pot.evaluate(&theta);
        let scale = ev.hessian.amax();
        let h = 1e-5;
        for b in 0..s.dim() {
            let mut p = theta.clone();
            let mut m = theta.clone();
            p[b] += h;
            m[b] -= h;
            let gp = pot.gradient(&p);
            let gm = pot.gradient(&m);
            for a in 0..s.dim() {
                let fd = (gp[a] - gm[a]) / (2.0 * h);
                let err = (fd - ev.hessian[(a, b)]).abs() / scale;
                assert!(err < 1e-4, "entry ({a},{b}): {} vs {fd}", ev.hessian[(a, b)]);
            }
        }
        assert_eq!(ev.hessian, ev.hessian.transpose());
        assert!(ev.hessian.clone().cholesky().is_some());
    }
}

#[test]
fn quadrature_matches_adaptive_integration() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let (s, theta) = random_case(&mut rng);
        let target = vec![0.0; s.dim()];
        let mut pot = Potential::new(&s, &target, 128);
        let ev = pot.evaluate(&theta);
        let density = |u: f64| {
            let f = basis_functions(&s, u);
            f.iter().zip(&theta).map(|(m, t)| m * t).sum::<f64>().exp()
        };
        for a in 0..s.dim() {
            let oracle = simpson(&|u| basis_functions(&s, u)[a] * density(u), -1.0, 1.0, 1e-11);
            assert!((oracle - ev.gradient[a]).abs() < 1e-7, "gradient {a}");
            for b in 0..=a {
                let oracle = simpson(
                    &|u| {
                        let f = basis_functions(&s, u);
                        f[a] * f[b] * density(u)
                    },
                    -1.0,
                    1.0,
                    1e-11,
                );
                assert!((oracle - ev.hessian[(a, b)]).abs() < 1e-7, "hessian ({a},{b})");
            }
        }
        let mass = simpson(&density, -1.0, 1.0, 1e-12);
        assert!((mass - ev.value).abs() < 1e-7);
    }
}

fn sample_sketch(rng: &mut ChaCha8Rng, n: usize) -> MomentsSketch {
    let kind = rng.random_range(0..3);
    let vals: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.random_range(1e-9..1.0);
            match kind {
                0 => -u.ln(),
                1 => 1.0 + 4.0 * u * u,
                _ => (3.0 * u).exp(),
            }
        })
        .collect();
    MomentsSketch::from_values(10, &vals).unwrap()
}

#[test]
fn cdf_matches_integrated_pdf() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let config = SolverConfig::default();
    let mut checked = 0;
    while checked < 20 {
        let s = sample_sketch(&mut rng, 2000);
        let m = to_chebyshev_moments(&s).unwrap();
        let d = solve_maxent(&m, &config).unwrap();
        if !d.converged() {
            continue;
        }
        checked += 1;
        assert!(d.cdf(s.min()).unwrap().abs() < 1e-6);
        assert!((d.cdf(s.max()).unwrap() - 1.0).abs() < 1e-6);
        for j in 1..10 {
            let x = s.min() + (s.max() - s.min()) * j as f64 / 10.0;
            // integrate in the primary coordinate, where the density is smooth
            let oracle = match d.primary() {
                Primary::Linear => simpson(&|y| d.pdf(y).unwrap(), s.min(), x, 1e-10),
                Primary::Log => {
                    simpson(&|l: f64| d.pdf(l.exp()).unwrap() * l.exp(), s.min().ln(), x.ln(), 1e-10)
                }
            };
            let got = d.cdf(x).unwrap();
            assert!((got - oracle).abs() < 1e-6, "cdf({x}) = {got}, oracle {oracle}");
        }
    }
}

#[test]
fn cdf_is_monotone_and_quantiles_invert_it() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let config = SolverConfig::default();
    for _ in 0..20 {
        let s = sample_sketch(&mut rng, 1000);
        let d = moments_sketch::fit(&s, &config).unwrap();
        let Some(d) = d.distribution().filter(|d| d.converged()) else { continue };
        let mut prev = 0.0;
        for j in 0..=1000 {
            let x = s.min() + (s.max() - s.min()) * j as f64 / 1000.0;
            let c = d.cdf(x).unwrap();
            // rounding-level noise only, where the density is negligible
            assert!(c >= prev - 1e-12, "cdf decreased at {x}: {prev} -> {c}");
            prev = c;
        }
        for &phi in &[0.01, 0.3, 0.5, 0.77, 0.99] {
            let q = d.estimate_quantile(phi).unwrap();
            assert!(q >= s.min() && q <= s.max());
            assert!((d.cdf(q).unwrap() - phi).abs() <= 1e-8);
        }
        assert_eq!(d.estimate_quantile(0.0).unwrap(), s.min());
        assert_eq!(d.estimate_quantile(1.0).unwrap(), s.max());
    }
}

#[test]
fn converged_fit_reproduces_input_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let config = SolverConfig::default();
    for _ in 0..10 {
        let s = sample_sketch(&mut rng, 5000);
        let m = to_chebyshev_moments(&s).unwrap();
        let d = solve_maxent(&m, &config).unwrap();
        assert!(d.converged());
        let spec = *d.basis();
        let mut target = vec![1.0];
        let (std, log) = (m.standard(), m.log());
        match spec.primary {
            Primary::Linear => {
                target.extend_from_slice(&std[..spec.k1]);
                target.extend_from_slice(&log[..spec.k2]);
            }
            Primary::Log => {
                target.extend_from_slice(&log[..spec.k2]);
                target.extend_from_slice(&std[..spec.k1]);
            }
        }
        let mut pot = Potential::new(&spec, &target, config.n_c);
        let g = pot.gradient(d.theta());
        assert!(g.amax() <= config.tol, "residual {}", g.amax());
        let fitted = d.primary_moments(spec.primary_count());
        for i in 1..=spec.primary_count() {
            assert!((fitted[i] - target[i]).abs() < 1e-8);
        }
    }
}

fn uniform_moments(k: usize) -> Vec<f64> {
    (1..=k)
        .map(|i| if i % 2 == 1 { 0.0 } else { 1.0 / (1.0 - (i * i) as f64) })
        .collect()
}

#[test]
fn uniform_on_symmetric_interval() {
    let m = ChebyshevMoments::new(1000, AffineMap::new(-1.0, 1.0), None, uniform_moments(4), vec![]);
    assert_eq!(m.standard(), &[0.0, -1.0 / 3.0, 0.0, -1.0 / 15.0]);
    let d = solve_maxent(&m, &SolverConfig::default()).unwrap();
    assert!(d.converged());
    for th in &d.theta()[1..] {
        assert!(th.abs() < 1e-6);
    }
    assert!(d.estimate_quantile(0.5).unwrap().abs() < 1e-6);
    assert!((d.cdf(0.0).unwrap() - 0.5).abs() < 1e-6);
}

#[test]
fn uniform_on_unit_interval() {
    let m = ChebyshevMoments::new(1000, AffineMap::new(0.0, 1.0), None, vec![0.0], vec![]);
    let d = solve_maxent(&m, &SolverConfig::default()).unwrap();
    assert!(d.theta()[1].abs() < 1e-12);
    assert!((d.estimate_quantile(0.25).unwrap() - 0.25).abs() < 1e-6);
    assert!((d.pdf(0.3).unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn unlimited_condition_number_uses_every_moment() {
    let vals: Vec<f64> = (0..4000).map(|i| 0.5 + 2.5 * ((i as f64 + 0.5) / 4000.0).powf(1.3)).collect();
    let s = MomentsSketch::from_values(8, &vals).unwrap();
    let m = to_chebyshev_moments(&s).unwrap();
    let config = SolverConfig {
        kappa_max: f64::INFINITY,
        ..SolverConfig::default()
    };
    let b = select_moment_counts(&m, &config);
    assert_eq!((b.k1, b.k2), (8, 8));
}

#[test]
fn nonpositive_support_disables_log_moments() {
    let vals: Vec<f64> = (0..1000).map(|i| -1.0 + 3.0 * i as f64 / 999.0).collect();
    let s = MomentsSketch::from_values(10, &vals).unwrap();
    let m = to_chebyshev_moments(&s).unwrap();
    for kappa_max in [1e4, f64::INFINITY] {
        let config = SolverConfig {
            kappa_max,
            ..SolverConfig::default()
        };
        assert_eq!(select_moment_counts(&m, &config).k2, 0);
    }
}

#[test]
fn selected_basis_respects_condition_limit() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let vals: Vec<f64> = (0..10_000).map(|_| rng.random_range(0.0..1.0)).collect();
    let s = MomentsSketch::from_values(10, &vals).unwrap();
    let m = to_chebyshev_moments(&s).unwrap();
    for primary in [PrimaryChoice::Auto, PrimaryChoice::Linear, PrimaryChoice::Log] {
        let config = SolverConfig {
            primary,
            ..SolverConfig::default()
        };
        let b = select_moment_counts(&m, &config);
        let target = vec![0.0; b.dim()];
        let mut pot = Potential::new(&b, &target, config.n_c);
        let h = pot.hessian(&vec![0.0; b.dim()]);
        assert!(condition_number(&h) <= config.kappa_max);
        assert!(b.k1 + b.k2 >= 1);
    }
}

fn lobatto_weighted_uniform(map: AffineMap, k: usize, n: usize) -> ChebyshevMoments {
    // Clenshaw–Curtis weights integrate T_i exactly for i <= n
    let nodes: Vec<f64> = (0..=n).map(|j| -(std::f64::consts::PI * j as f64 / n as f64).cos()).collect();
    let weights: Vec<f64> = (0..=n)
        .map(|l| {
            let c = if l == 0 || l == n { 1.0 } else { 2.0 };
            let s: f64 = (1..=n / 2)
                .map(|j| {
                    let b = if 2 * j == n { 1.0 } else { 2.0 };
                    b / (4.0 * (j * j) as f64 - 1.0)
                        * (2.0 * std::f64::consts::PI * (j * l) as f64 / n as f64).cos()
                })
                .sum();
            c / n as f64 * (1.0 - s)
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let moments = (1..=k)
        .map(|i| nodes.iter().zip(&weights).map(|(u, w)| w * cheb(i, *u)).sum::<f64>() / total)
        .collect();
    ChebyshevMoments::new(1 << 20, map, None, moments, vec![])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn recovers_uniform_from_node_weighted_samples(
        lo in -50.0f64..50.0,
        width in 0.01f64..100.0,
        k in 1usize..=10,
    ) {
        let map = AffineMap::new(lo, lo + width);
        let m = lobatto_weighted_uniform(map, k, 128);
        let config = SolverConfig { primary: PrimaryChoice::Linear, ..SolverConfig::default() };
        let d = solve_maxent(&m, &config).unwrap();
        prop_assert!(d.converged());
        for j in 0..=200 {
            let x = map.from_unit(-1.0 + j as f64 / 100.0);
            prop_assert!((d.pdf(x).unwrap() * width - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn fixed_basis_solve_matches_targets(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = sample_sketch(&mut rng, 500);
        let m = to_chebyshev_moments(&s).unwrap();
        let config = SolverConfig::default();
        let b = select_moment_counts(&m, &config);
        let d = solve_with_basis(&m, b, &config);
        if d.moments_matched() {
            prop_assert!(d.residual() <= config.tol);
        }
    }
}
