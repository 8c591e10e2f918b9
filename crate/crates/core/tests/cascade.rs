use moments_sketch::cascade::baseline_threshold;
use moments_sketch::{fit, threshold, CascadeStats, MomentsSketch, SolverConfig, Stage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, LogNormal, Normal};

fn dataset(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    match rng.random_range(0..6) {
        0 => Exp::new(1.0).unwrap().sample_iter(rng).take(n).collect(),
        1 => {
            let shape = [0.3, 1.0, 4.0][rng.random_range(0..3)];
            Gamma::new(shape, 1.0).unwrap().sample_iter(rng).take(n).collect()
        }
        2 => LogNormal::new(1.0, 0.7).unwrap().sample_iter(rng).take(n).collect(),
        3 => Normal::new(0.0, 1.0).unwrap().sample_iter(rng).take(n).collect(),
        4 => (0..n).map(|_| rng.random_range(10.0..20.0)).collect(),
        _ => (0..n)
            .map(|_| if rng.random_bool(0.95) { rng.random_range(1.0..3.0) } else { rng.random_range(8.0..9.0) })
            .collect(),
    }
}

fn probe(rng: &mut ChaCha8Rng, sorted: &[f64], phi: f64) -> f64 {
    let n = sorted.len();
    let (lo, hi) = (sorted[0], sorted[n - 1]);
    match rng.random_range(0..4) {
        0 => {
            let p = (phi + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0);
            sorted[((p * n as f64) as usize).min(n - 1)]
        }
        1 | 2 => rng.random_range(lo..=hi),
        _ => lo + (hi - lo) * rng.random_range(-0.2..1.2),
    }
}

#[test]
fn cascade_matches_solve_then_compare() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let config = SolverConfig::default();
    let mut stats = CascadeStats::new();
    let (mut compared, mut mismatches) = (0, 0);
    for _ in 0..200 {
        let n = rng.random_range(30..3000);
        let mut xs = dataset(&mut rng, n);
        let s = MomentsSketch::from_values(10, &xs).unwrap();
        xs.sort_by(f64::total_cmp);
        let baseline = fit(&s, &config).unwrap();
        for _ in 0..10 {
            let phi = rng.random_range(0.01..0.99);
            let t = probe(&mut rng, &xs, phi);
            let out = stats.threshold(&s, t, phi, &config).unwrap();
            if out.resolved_by == Stage::Range {
                assert!(t < s.min() || t > s.max());
            }
            if !baseline.converged() {
                continue;
            }
            compared += 1;
            let expected = baseline.estimate_quantile(phi).unwrap() > t;
            if out.decision != Some(expected) {
                mismatches += 1;
                eprintln!("mismatch: n {n} t {t} phi {phi} {out:?}");
            }
        }
    }
    assert!(compared > 1500);
    assert_eq!(mismatches, 0);
    let sum: f64 = Stage::ALL.iter().map(|&st| stats.fraction(st)).sum();
    assert!((sum - 1.0).abs() < 1e-9);
    assert!(stats.early_fraction() > 0.3, "{stats:?}");
}

#[test]
fn baseline_helper_matches_fit() {
    let xs: Vec<f64> = (1..=2000).map(|i| (i as f64 / 100.0).powi(2)).collect();
    let s = MomentsSketch::from_values(10, &xs).unwrap();
    let config = SolverConfig::default();
    for &(t, phi) in &[(100.0, 0.5), (1.0, 0.1), (300.0, 0.9)] {
        let q = fit(&s, &config).unwrap().estimate_quantile(phi).unwrap();
        assert_eq!(baseline_threshold(&s, t, phi, &config).unwrap(), Some(q > t));
        assert_eq!(threshold(&s, t, phi, &config).unwrap().decision, Some(q > t));
    }
}

#[test]
fn out_of_range_probes_resolve_by_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let config = SolverConfig::default();
    let mut stats = CascadeStats::new();
    for _ in 0..50 {
        let xs = dataset(&mut rng, 100);
        let s = MomentsSketch::from_values(10, &xs).unwrap();
        let t = if rng.random_bool(0.5) { s.max() + 1.0 } else { s.min() - 1.0 };
        let out = stats.threshold(&s, t, rng.random_range(0.01..0.99), &config).unwrap();
        assert_eq!(out.decision, Some(t < s.min()));
    }
    assert_eq!(stats.fraction(Stage::Range), 1.0);
}

#[test]
fn nonconvergent_solves_are_indeterminate() {
    let s = MomentsSketch::from_values(10, &[-1.0, 0.0, 1.0]).unwrap();
    let config = SolverConfig::default();
    let out = threshold(&s, 0.3, 0.5, &config).unwrap();
    if out.resolved_by == Stage::MaxEnt {
        assert!(out.is_indeterminate());
        assert!(out.bounds.is_some());
    }
    assert_eq!(baseline_threshold(&s, 0.3, 0.5, &config).unwrap(), None);
}
