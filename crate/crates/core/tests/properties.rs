//! Property-based invariants of the numerical building blocks.

use ndarray::Array2;
use proptest::prelude::*;

use tda_core::ate::{clip_propensity, wald_ci, PROPENSITY_CLIP};
use tda_core::linalg::{lasso_solve, least_squares, ridge_solve};
use tda_core::nn::{per_sample_scores, Activation, Batch, DenseNet, LossKind, ParamPartition};
use tda_core::rng::{permutation, seeded};
use tda_core::survival::{ipcw_influence, km_estimate, survival_from_log_hazard, TimeGrid, G_MIN};
use tda_core::targeting::{combine_directions, stopping_threshold};

fn grid() -> TimeGrid {
    TimeGrid::uniform(12, 6.0, 3).unwrap()
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-3.0..3.0f64, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn survival_sample() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    prop::collection::vec((0.01..8.0f64, any::<bool>()), 1..40).prop_map(|v| v.into_iter().unzip())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn km_is_a_survival_curve((time, event) in survival_sample()) {
        let km = km_estimate(&time, &event, &grid()).unwrap();
        prop_assert!(km.survival.iter().all(|s| (0.0..=1.0).contains(s)));
        prop_assert!(km.survival.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(km.variance.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn km_without_censoring_is_empirical(time in prop::collection::vec(0.01..8.0f64, 1..40)) {
        let g = grid();
        let km = km_estimate(&time, &vec![true; time.len()], &g).unwrap();
        for (t, s) in g.points().iter().zip(&km.survival) {
            let empirical = time.iter().filter(|&&x| x > *t).count() as f64 / time.len() as f64;
            prop_assert!((s - empirical).abs() < 1e-12);
        }
    }

    #[test]
    fn integrated_curves_are_monotone(log_h in prop::collection::vec(-6.0..1.5f64, 37)) {
        let g = grid();
        prop_assert_eq!(log_h.len(), g.n_nodes());
        let s = survival_from_log_hazard(&log_h, &g);
        prop_assert!(s.iter().all(|v| *v > 0.0 && *v <= 1.0));
        prop_assert!(s.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn ipcw_without_censoring_recovers_empirical_survival(
        time in prop::collection::vec(0.01..8.0f64, 1..40),
        s_hat in prop::collection::vec(0.0..1.0f64, 12),
    ) {
        let g = grid();
        let ones = Array2::ones((time.len(), g.len()));
        let d = ipcw_influence(g.points(), &time, &ones, &s_hat, G_MIN).unwrap();
        for (k, t) in g.points().iter().enumerate() {
            let empirical = time.iter().filter(|&&x| x > *t).count() as f64 / time.len() as f64;
            let mean = d.values[k].iter().sum::<f64>() / time.len() as f64;
            prop_assert!((mean - (empirical - s_hat[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn combined_weights_have_unit_norm(d in prop::collection::vec(-5.0..5.0f64, 1..6)) {
        prop_assume!(d.iter().any(|v| v.abs() > 1e-6));
        let k = d.len();
        let basis: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        let w = combine_directions(&basis, &d).unwrap().unwrap();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = d.iter().map(|v| -v).collect();
        let flipped = combine_directions(&basis, &neg).unwrap().unwrap();
        prop_assert!(w.iter().zip(&flipped).all(|(a, b)| (a + b).abs() < 1e-15));
    }

    #[test]
    fn threshold_is_linear_in_sd(sd in 0.0..10.0f64, n in 2usize..5000) {
        let one = stopping_threshold(1.0, n).unwrap();
        prop_assert!((stopping_threshold(sd, n).unwrap() - sd * one).abs() <= 1e-15 * sd.max(1.0));
    }

    #[test]
    fn vanishing_ridge_is_least_squares(g in matrix(12, 4), r in prop::collection::vec(-3.0..3.0f64, 12)) {
        let (ols, singular) = least_squares(g.view(), &r).unwrap();
        prop_assume!(!singular);
        let ridge = ridge_solve(g.view(), &r, 1e-12).unwrap();
        let scale = ols.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!(ols.iter().zip(&ridge).all(|(a, b)| (a - b).abs() < 1e-6 * scale));
    }

    #[test]
    fn large_lasso_penalty_zeroes_everything(g in matrix(10, 3), r in prop::collection::vec(-3.0..3.0f64, 10)) {
        prop_assume!(g.iter().any(|v| v.abs() > 1e-3));
        // Standardised correlations are bounded by the RMS of r.
        let rms = (r.iter().map(|v| v * v).sum::<f64>() / 10.0).sqrt();
        let alpha = lasso_solve(g.view(), &r, 2.0 * rms + 1e-9).unwrap();
        prop_assert!(alpha.iter().all(|a| *a == 0.0));
    }

    #[test]
    fn score_rows_follow_sample_order(seed in 0u64..1000, n in 2usize..20) {
        let mut rng = seeded(seed);
        let net = DenseNet::init(&[3, 4, 1], Activation::Elu, Activation::Identity, 0.0, &mut rng).unwrap();
        let x = Array2::from_shape_fn((n, 3), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 2.0 + seed as f64 * 1e-3);
        let y: Vec<f64> = (0..n).map(|i| (i % 3) as f64).collect();
        let part = ParamPartition::last_layer(&net);
        let s = per_sample_scores(&net, &part, LossKind::Mse, &Batch::new(x.clone(), y.clone()).unwrap()).unwrap();
        let perm = permutation(n, &mut rng);
        let xp = x.select(ndarray::Axis(0), &perm);
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let sp = per_sample_scores(&net, &part, LossKind::Mse, &Batch::new(xp, yp).unwrap()).unwrap();
        for (row, &i) in perm.iter().enumerate() {
            prop_assert_eq!(sp.values.row(row), s.values.row(i));
        }
    }

    #[test]
    fn permutations_are_bijections(seed in any::<u64>(), n in 0usize..200) {
        let mut p = permutation(n, &mut seeded(seed));
        p.sort_unstable();
        prop_assert_eq!(p, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn clipped_propensities_stay_inside(g in 0.0..=1.0f64) {
        let (c, hit) = clip_propensity(g);
        prop_assert!((PROPENSITY_CLIP..=1.0 - PROPENSITY_CLIP).contains(&c));
        prop_assert_eq!(hit, c != g);
    }

    #[test]
    fn wald_interval_is_centred(psi in -10.0..10.0f64, eif in prop::collection::vec(-5.0..5.0f64, 1..50)) {
        let (lo, hi) = wald_ci(psi, &eif);
        prop_assert!(lo <= psi && psi <= hi);
        prop_assert!(((psi - lo) - (hi - psi)).abs() < 1e-12);
    }
}
