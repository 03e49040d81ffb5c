use fairhgr::data::{gen_bivariate_gaussian, gen_pattern, PatternKind};
use fairhgr::estimators::{
    chi2_kde, hgr_kde, hgr_nn, null_calibration, pearson, rdc, witsenhausen_discrete, KdeConfig, NeuralEstimatorConfig,
    RdcConfig, SamplePairs,
};
use fairhgr::linalg::Matrix;
use proptest::prelude::*;

fn pairs_strategy() -> impl Strategy<Value = SamplePairs> {
    (30usize..120, -0.9f64..0.9, any::<u64>()).prop_map(|(n, rho, seed)| gen_bivariate_gaussian(n, rho, seed).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kde_hgr_in_unit_interval_and_below_chi2(pairs in pairs_strategy()) {
        let cfg = KdeConfig { grid_size: 24, ..Default::default() };
        let h = hgr_kde(&pairs, &cfg).unwrap().value;
        let c = chi2_kde(&pairs, &cfg).unwrap().value;
        prop_assert!((0.0..=1.0 + 1e-12).contains(&h));
        prop_assert!(c + 1e-9 >= h * h, "chi2 {c} < hgr² {}", h * h);
    }

    #[test]
    fn kde_hgr_symmetric(pairs in pairs_strategy()) {
        let cfg = KdeConfig { grid_size: 24, ..Default::default() };
        let a = hgr_kde(&pairs, &cfg).unwrap().value;
        let b = hgr_kde(&pairs.swapped(), &cfg).unwrap().value;
        prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn rdc_rank_invariant(pairs in pairs_strategy(), seed in any::<u64>()) {
        let cfg = RdcConfig { seed, ..Default::default() };
        let base = rdc(&pairs, &cfg).unwrap().value;
        let (u, v) = pairs.clone().into_parts();
        let warped = SamplePairs::new(u.iter().map(|x| x.exp()).collect(), v.iter().map(|y| 3.0 * y - 1.0).collect()).unwrap();
        prop_assert_eq!(rdc(&warped, &cfg).unwrap().value.to_bits(), base.to_bits());
        prop_assert!((0.0..=1.0 + 1e-12).contains(&base));
    }

    #[test]
    fn pearson_bounded_and_sign_flips(pairs in pairs_strategy()) {
        let r = pearson(&pairs).unwrap();
        prop_assert!(r.abs() <= 1.0 + 1e-12);
        let (u, v) = pairs.into_parts();
        let flipped = SamplePairs::new(u.iter().map(|x| -x).collect(), v).unwrap();
        prop_assert!((pearson(&flipped).unwrap() + r).abs() < 1e-12);
    }

    #[test]
    fn witsenhausen_permutation_invariant(
        rows in 2usize..6,
        cols in 2usize..6,
        cells in prop::collection::vec(0.01f64..1.0, 36),
        shift in 0usize..6,
    ) {
        let total: f64 = cells[..rows * cols].iter().sum();
        let p = Matrix::from_fn(rows, cols, |i, j| cells[i * cols + j] / total);
        let permuted = Matrix::from_fn(rows, cols, |i, j| cells[((i + shift) % rows) * cols + (j + shift) % cols] / total);
        let a = witsenhausen_discrete(&p).unwrap().value;
        let b = witsenhausen_discrete(&permuted).unwrap().value;
        prop_assert!((0.0..=1.0 + 1e-12).contains(&a));
        prop_assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn kde_null_level_is_small_and_dependence_exceeds_it() {
    let pairs = gen_bivariate_gaussian(800, 0.5, 4).unwrap();
    let cfg = KdeConfig::default();
    let null = null_calibration(|p| hgr_kde(p, &cfg), &pairs, 20, 9).unwrap();
    let observed = hgr_kde(&pairs, &cfg).unwrap().value;
    assert!(null.q95 < 0.2, "{null:?}");
    assert!(observed > null.q99);
}

#[test]
fn neural_hgr_detects_nonmonotone_pattern_that_pearson_misses() {
    let pairs = gen_pattern(PatternKind::GaussianPdf, 600, 0.0, 2).unwrap();
    let h = hgr_nn(&pairs, &NeuralEstimatorConfig::hgr_default(1).with_iterations(800)).unwrap().value;
    assert!(pearson(&pairs).unwrap().abs() < 0.2);
    assert!(h > 0.9, "{h}");
}

#[test]
fn neural_hgr_symmetric_within_training_noise() {
    let pairs = gen_bivariate_gaussian(1500, 0.7, 3).unwrap();
    let cfg = NeuralEstimatorConfig::hgr_default(5).with_iterations(600);
    let a = hgr_nn(&pairs, &cfg).unwrap().value;
    let b = hgr_nn(&pairs.swapped(), &cfg).unwrap().value;
    assert!((a - b).abs() < 0.05, "{a} vs {b}");
}
