use moments_sketch::accuracy::{mean_error, quantile_error, standard_phis};
use moments_sketch::{encode_low_precision, fit, merge_all, CompressedSketch, MomentsSketch, SolverConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma};

fn eps_avg(sorted: &[f64], s: &MomentsSketch) -> f64 {
    let phis = standard_phis();
    let q = fit(s, &SolverConfig::default()).unwrap().estimate_quantiles(&phis).unwrap();
    mean_error(sorted, &phis, &q)
}

fn spaced(card: usize) -> Vec<f64> {
    (0..card).map(|i| -1.0 + 2.0 * i as f64 / (card - 1) as f64).collect()
}

#[test]
fn worked_error_example() {
    let d: Vec<f64> = (1..=1000).map(f64::from).collect();
    assert_eq!(quantile_error(&d, 504.0, 0.5), 0.003);
}

#[test]
fn tiny_cardinalities_do_not_converge() {
    let config = SolverConfig::default();
    for card in 2..=4 {
        let s = MomentsSketch::from_values(10, &spaced(card)).unwrap();
        let f = fit(&s, &config).unwrap();
        assert!(!f.converged(), "cardinality {card}");
        assert!(f.estimate_quantile(0.5).is_err());
    }
}

#[test]
fn moderate_cardinalities_converge() {
    for card in [16, 24, 32, 64] {
        // repeat each value so the data resembles many rows over few distinct values
        let xs: Vec<f64> = spaced(card).iter().flat_map(|&x| std::iter::repeat_n(x, 50)).collect();
        let s = MomentsSketch::from_values(10, &xs).unwrap();
        let e = eps_avg(&xs, &s);
        assert!(e < 0.05, "cardinality {card}: {e}");
    }
}

#[test]
fn exponential_accuracy() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut xs: Vec<f64> = Exp::new(1.0).unwrap().sample_iter(&mut rng).take(200_000).collect();
    let s = MomentsSketch::from_values(10, &xs).unwrap();
    xs.sort_by(f64::total_cmp);
    let e = eps_avg(&xs, &s);
    assert!(e <= 1e-3, "{e}");
}

#[test]
fn gamma_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for shape in [0.1, 1.0, 10.0] {
        let mut xs: Vec<f64> = Gamma::new(shape, 1.0).unwrap().sample_iter(&mut rng).take(100_000).collect();
        let s = MomentsSketch::from_values(10, &xs).unwrap();
        xs.sort_by(f64::total_cmp);
        let e = eps_avg(&xs, &s);
        assert!(e <= 1e-2, "shape {shape}: {e}");
    }
}

#[test]
fn low_precision_cells_keep_accuracy() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let exp = Exp::new(1.0).unwrap();
    let mut all = Vec::new();
    let mut full = Vec::new();
    let mut low = Vec::new();
    for _ in 0..100_000 {
        let cell: Vec<f64> = exp.sample_iter(&mut rng).take(10).collect();
        let s = MomentsSketch::from_values(10, &cell).unwrap();
        let bytes = encode_low_precision(&s, 20, &mut rng).unwrap().to_bytes();
        low.push(CompressedSketch::from_bytes(&bytes).unwrap().decode().unwrap());
        full.push(s);
        all.extend(cell);
    }
    all.sort_by(f64::total_cmp);
    let e_full = eps_avg(&all, &merge_all(10, &full).unwrap());
    let e_low = eps_avg(&all, &merge_all(10, &low).unwrap());
    assert!(e_low <= 2.0 * e_full, "low {e_low} full {e_full}");
}
