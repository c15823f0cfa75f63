//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Criteria 1–7 and 9 are deterministic properties of the implementation
//! and make this binary exit non-zero when they fail. Criteria 8, 10 and 11
//! are Monte-Carlo statements about estimator behaviour; their verdict and
//! the numbers behind it are printed but do not fail the test run.
//!
//! Set `TDA_ACCEPTANCE_SKIP_BENCH=1` to skip the two desk-scale benchmarks
//! (criteria 10 and 11), which take several minutes on one core.

use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::Rng;

use tda_core::ate::{post_tmle, AteMethod, Nuisance};
use tda_core::harness::{
    outperformance, persist, AteBenchConfig, BenchOutput, SummaryTable, SurvivalBenchConfig,
};
use tda_core::harness::{run_ate_bench, run_survival_bench};
use tda_core::linalg::{lasso_solve, ridge_solve};
use tda_core::nn::{
    batch_loss_gradient, per_sample_scores, Activation, Batch, Dense, DenseNet, LossKind, ParamPartition,
};
use tda_core::rng::{normal, seeded, TdaRng};
use tda_core::survival::{
    gen_covariates, km_estimate, simulate, survival_from_log_hazard, DgpParams, TimeGrid, N_SURVIVAL_COVARIATES,
};
use tda_core::targeting::{
    combine_directions, project_influence, tda_run, NetSubmodel, StopReason, TargetingConfig, LOSS_SLACK,
};
use tda_core::Result;

struct Verdict {
    pass: bool,
    summary: String,
    notes: Vec<String>,
}

impl Verdict {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Verdict {
            pass,
            summary: summary.into(),
            notes: Vec::new(),
        }
    }

    fn note(mut self, line: impl Into<String>) -> Self {
        self.notes.push(line.into());
        self
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn normal_matrix(rows: usize, cols: usize, rng: &mut TdaRng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| normal(rng))
}

fn outputs(net: &DenseNet, inputs: &Array2<f64>) -> Vec<f64> {
    net.forward_batch(inputs.view(), None)
        .expect("forward pass")
        .output()
        .column(0)
        .to_vec()
}

fn all_params(net: &DenseNet) -> ParamPartition {
    ParamPartition::new((0..net.n_params()).collect(), net.n_params()).expect("nonempty")
}

/// A small random network with a matching loss and batch.
fn random_problem(rng: &mut TdaRng, n: usize) -> (DenseNet, LossKind, Batch) {
    let p = rng.random_range(2..5);
    let mut dims = vec![p];
    for _ in 0..rng.random_range(1..3) {
        dims.push(rng.random_range(2..6));
    }
    dims.push(1);
    let hidden = [Activation::Elu, Activation::Sigmoid, Activation::Relu][rng.random_range(0..3)];
    let loss = [LossKind::Mse, LossKind::Bce, LossKind::Poisson][rng.random_range(0..3)];
    let out = if loss == LossKind::Bce { Activation::Sigmoid } else { Activation::Identity };
    let net = DenseNet::init(&dims, hidden, out, 0.0, rng).expect("valid dims");
    let inputs = normal_matrix(n, p, rng);
    let targets: Vec<f64> = (0..n)
        .map(|_| match loss {
            LossKind::Mse => normal(rng),
            _ => f64::from(rng.random_bool(0.4)),
        })
        .collect();
    let exposure: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let batch = Batch::with_exposure(inputs, targets, exposure).expect("consistent batch");
    (net, loss, batch)
}

fn per_sample_losses(net: &DenseNet, loss: LossKind, batch: &Batch) -> Vec<f64> {
    outputs(net, &batch.inputs)
        .iter()
        .enumerate()
        .map(|(i, &f)| loss.value(f, batch.targets[i], batch.exposure[i]))
        .collect()
}

/// Central finite differences of every per-sample loss with respect to
/// every parameter; rows are samples.
fn fd_scores(net: &DenseNet, loss: LossKind, batch: &Batch, h: f64) -> Array2<f64> {
    let theta = net.flat_params();
    let mut out = Array2::zeros((batch.len(), theta.len()));
    let mut probe = net.clone();
    for j in 0..theta.len() {
        let mut t = theta.clone();
        t[j] = theta[j] + h;
        probe.set_flat_params(&t).unwrap();
        let up = per_sample_losses(&probe, loss, batch);
        t[j] = theta[j] - h;
        probe.set_flat_params(&t).unwrap();
        let down = per_sample_losses(&probe, loss, batch);
        for i in 0..batch.len() {
            out[[i, j]] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    out
}

fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn criterion_1() -> Verdict {
    let mut rng = seeded(101);
    let mut worst = 0.0f64;
    for _ in 0..25 {
        let (net, loss, batch) = random_problem(&mut rng, 8);
        let scores = per_sample_scores(&net, &all_params(&net), loss, &batch).unwrap();
        let fd = fd_scores(&net, loss, &batch, 1e-5);
        for (a, b) in scores.values.iter().zip(fd.iter()) {
            worst = worst.max(rel_err(*a, *b, 1e-4));
        }
    }
    Verdict::new(
        worst < 1e-4,
        format!("per-sample scores vs central differences on 25 random nets: max rel err {worst:.2e} (< 1e-4)"),
    )
}

fn criterion_2() -> Verdict {
    let mut rng = seeded(202);
    let mut worst = 0.0f64;
    for _ in 0..25 {
        let n = rng.random_range(5..60);
        let (net, loss, batch) = random_problem(&mut rng, n);
        let scores = per_sample_scores(&net, &all_params(&net), loss, &batch).unwrap();
        let per_sample_mean = scores.column_means();
        let (_, batch_grad) = batch_loss_gradient(&net, loss, &batch).unwrap();
        let scale = batch_grad.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let diff = per_sample_mean
            .iter()
            .zip(&batch_grad)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(diff / scale);
    }
    Verdict::new(
        worst < 1e-10,
        format!("mean per-sample score vs batched gradient on 25 random batches: max rel err {worst:.2e} (< 1e-10)"),
    )
}

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn soft(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

fn criterion_3() -> Verdict {
    let mut rng = seeded(303);
    let (n, k) = (10, 5);
    let mut ridge_err = 0.0f64;
    for s in 0..20 {
        let g = normal_matrix(n, k, &mut rng);
        let r: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let lambda = if s % 4 == 0 { 0.0 } else { 10f64.powf(rng.random_range(-3.0..1.0)) };
        let ours = ridge_solve(g.view(), &r, lambda).unwrap();
        // Ridge is least squares on the design stacked with √λ·I.
        let mut aug = DMatrix::zeros(n + k, k);
        aug.view_mut((0, 0), (n, k)).copy_from(&to_dmatrix(&g));
        for j in 0..k {
            aug[(n + j, j)] = lambda.sqrt();
        }
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&DVector::from_vec(r.clone()));
        let oracle = aug.pseudo_inverse(1e-14).unwrap() * rhs;
        for (a, b) in ours.iter().zip(oracle.iter()) {
            ridge_err = ridge_err.max((a - b).abs());
        }
    }
    let mut lasso_err = 0.0f64;
    let mut zeros = 0;
    for _ in 0..20 {
        let m = DMatrix::from_fn(n, k, |_, _| normal(&mut rng));
        // Orthogonal columns with unit mean square: Gᵀ G / n = I.
        let q = m.qr().q() * (n as f64).sqrt();
        let g = Array2::from_shape_fn((n, k), |(i, j)| q[(i, j)]);
        let r: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let lambda = rng.random_range(0.01..1.0);
        let ours = lasso_solve(g.view(), &r, lambda).unwrap();
        for j in 0..k {
            let c = (0..n).map(|i| g[[i, j]] * r[i]).sum::<f64>() / n as f64;
            let oracle = soft(c, lambda / 2.0);
            zeros += usize::from(oracle == 0.0);
            lasso_err = lasso_err.max((ours[j] - oracle).abs());
        }
    }
    Verdict::new(
        ridge_err < 1e-8 && lasso_err < 1e-8,
        format!(
            "ridge vs pseudo-inverse max err {ridge_err:.2e}; lasso vs orthogonal soft-threshold max err {lasso_err:.2e} \
             ({zeros} of 100 coefficients thresholded to zero)"
        ),
    )
}

fn criterion_4() -> Verdict {
    let mut worst = 0.0f64;
    let mut psi_err = 0.0f64;
    for s in 0..10 {
        let mut rng = seeded(400 + s);
        let n = 300 + 50 * s as usize;
        let x: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let g: Vec<f64> = x.iter().map(|v| sigmoid(0.3 + 0.9 * v)).collect();
        let a: Vec<f64> = g.iter().map(|&p| f64::from(rng.random_bool(p))).collect();
        let q0: Vec<f64> = x.iter().map(|v| 1.0 + v + 0.3 * normal(&mut rng)).collect();
        let q1: Vec<f64> = q0.iter().map(|q| q + 2.0 + 0.3 * normal(&mut rng)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 1.0 + x[i] + 0.5 * x[i] * x[i] + 2.5 * a[i] + normal(&mut rng))
            .collect();
        let nu = Nuisance::new(&g, q0.clone(), q1.clone()).unwrap();
        let (est, eps) = post_tmle(&nu, &a, &y).unwrap();
        let gc = &nu.g;
        let h: Vec<f64> = (0..n).map(|i| a[i] / gc[i] - (1.0 - a[i]) / (1.0 - gc[i])).collect();
        let q1s: Vec<f64> = (0..n).map(|i| q1[i] + eps / gc[i]).collect();
        let q0s: Vec<f64> = (0..n).map(|i| q0[i] - eps / (1.0 - gc[i])).collect();
        let score: Vec<f64> = (0..n)
            .map(|i| h[i] * (y[i] - if a[i] == 1.0 { q1s[i] } else { q0s[i] }))
            .collect();
        worst = worst.max(mean(&score).abs());
        let psi = mean(&(0..n).map(|i| q1s[i] - q0s[i]).collect::<Vec<_>>());
        psi_err = psi_err.max((psi - est.psi).abs());
    }
    Verdict::new(
        worst < 1e-10 && psi_err < 1e-10,
        format!("post-TMLE |P_n[H(Y − Q*)]| max {worst:.2e} over 10 datasets (< 1e-10); psi mismatch {psi_err:.1e}"),
    )
}

/// Linear ATE model on inputs `[a, x0, x1, x2, H]` with the clever
/// covariate `H` built from the true propensity, started from the least
/// squares fit without `H` whose treatment coefficient is then shifted by
/// `bias`.
struct LinearTask {
    model: NetSubmodel,
    a: Vec<f64>,
    y: Vec<f64>,
    h: Vec<f64>,
    g: Vec<f64>,
}

fn linear_task(seed: u64, n: usize, bias: f64) -> LinearTask {
    let mut rng = seeded(seed);
    let x = normal_matrix(n, 3, &mut rng);
    let g: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|r| sigmoid(0.4 * r[0] - 0.3 * r[1] + 0.2 * r[2]))
        .collect();
    let a: Vec<f64> = g.iter().map(|&p| f64::from(rng.random_bool(p))).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 1.0 + 2.0 * a[i] + x[[i, 0]] - 0.5 * x[[i, 1]] + 0.5 * x[[i, 0]].powi(2) + normal(&mut rng))
        .collect();
    let h: Vec<f64> = (0..n).map(|i| a[i] / g[i] - (1.0 - a[i]) / (1.0 - g[i])).collect();
    let design = DMatrix::from_fn(n, 5, |i, j| match j {
        0 => 1.0,
        1 => a[i],
        _ => x[[i, j - 2]],
    });
    let coef = design
        .svd(true, true)
        .solve(&DVector::from_vec(y.clone()), 1e-12)
        .expect("least squares");
    let weights = Array2::from_shape_vec((1, 5), vec![coef[1] + bias, coef[2], coef[3], coef[4], 0.0]).unwrap();
    let layer = Dense::new(weights, Array1::from_elem(1, coef[0]), Activation::Identity).unwrap();
    let net = DenseNet::new(vec![layer], 0.0).unwrap();
    let inputs = Array2::from_shape_fn((n, 5), |(i, j)| match j {
        0 => a[i],
        4 => h[i],
        _ => x[[i, j - 1]],
    });
    let batch = Batch::new(inputs, y.clone()).unwrap();
    let partition = all_params(&net);
    let model = NetSubmodel::new(net, partition, LossKind::Mse, batch).unwrap();
    LinearTask { model, a, y, h, g }
}

/// Efficient influence values of the ATE at the model's current
/// predictions, with the plug-in estimate as `psi`.
fn ate_eif(m: &NetSubmodel, a: &[f64], y: &[f64], g: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let set = |treat: f64| {
        let mut inputs = m.batch.inputs.clone();
        for i in 0..n {
            inputs[[i, 0]] = treat;
            inputs[[i, 4]] = if treat == 1.0 { 1.0 / g[i] } else { -1.0 / (1.0 - g[i]) };
        }
        inputs
    };
    let q = outputs(&m.net, &m.batch.inputs);
    let q1 = outputs(&m.net, &set(1.0));
    let q0 = outputs(&m.net, &set(0.0));
    let psi = mean(&(0..n).map(|i| q1[i] - q0[i]).collect::<Vec<_>>());
    let h: Vec<f64> = (0..n).map(|i| a[i] / g[i] - (1.0 - a[i]) / (1.0 - g[i])).collect();
    Ok(vec![(0..n).map(|i| h[i] * (y[i] - q[i]) + q1[i] - q0[i] - psi).collect()])
}

fn criterion_5() -> Verdict {
    let cfg = TargetingConfig {
        max_iters: 100,
        ..TargetingConfig::ate_default()
    };
    let mut converged = 0;
    let mut monotone = true;
    let mut iters = Vec::new();
    let mut start_score = Vec::new();
    let mut steps = Vec::new();
    for seed in 0..20 {
        let LinearTask { mut model, a, y, h, g } = linear_task(500 + seed, 500, 0.5);
        let q = outputs(&model.net, &model.batch.inputs);
        start_score.push(mean(&(0..a.len()).map(|i| h[i] * (y[i] - q[i])).collect::<Vec<_>>()).abs());
        let mut eif = |m: &NetSubmodel| ate_eif(m, &a, &y, &g);
        let report = tda_run(&mut model, &mut eif, &cfg);
        let last = report.last().expect("at least one iteration");
        let met = report.converged
            && report.reason == StopReason::ToleranceMet
            && last.mean_dproj[0].abs() <= last.eta_n[0]
            && last.iter <= cfg.max_iters;
        converged += usize::from(met);
        iters.push(last.iter as f64);
        steps.push(report.steps_taken() as f64);
        monotone &= report
            .iterations
            .windows(2)
            .all(|w| w[1].train_loss <= w[0].train_loss + LOSS_SLACK);
    }
    Verdict::new(
        converged >= 18 && monotone,
        format!(
            "linear ATE task (n = 500): {converged}/20 runs reach |P_n[D*_proj]| ≤ η_n within 100 iterations \
             (mean {:.1} iterations, {:.1} accepted steps); training loss non-increasing in every run: {monotone}",
            mean(&iters),
            mean(&steps)
        ),
    )
    .note(format!(
        "initial |P_n[H(Y − Q)]| ranged {:.3}–{:.3}",
        start_score.iter().cloned().fold(f64::INFINITY, f64::min),
        start_score.iter().cloned().fold(0.0, f64::max)
    ))
}

/// Relative directional derivative of `Σ d_k²` along the combined step
/// on a two-weight linear model with `D₂ = −D₁`. The weights start at the
/// least-squares fit plus `N(0, spread²)` noise, or at pure noise when
/// `spread` is `None`.
fn toy_derivative(seed: u64, spread: Option<f64>) -> f64 {
    let cfg = TargetingConfig::ate_default();
    let n = 60;
    let mut rng = seeded(seed);
    let z = normal_matrix(n, 2, &mut rng);
    let y: Vec<f64> = (0..n).map(|i| 0.7 * z[[i, 0]] - 0.4 * z[[i, 1]] + normal(&mut rng)).collect();
    let start: Vec<f64> = match spread {
        Some(sd) => {
            let fit = to_dmatrix(&z)
                .svd(true, true)
                .solve(&DVector::from_vec(y.clone()), 1e-12)
                .expect("least squares");
            fit.iter().map(|c| c + sd * normal(&mut rng)).collect()
        }
        None => (0..2).map(|_| normal(&mut rng)).collect(),
    };
    let w = Array2::from_shape_vec((1, 2), start).unwrap();
    let net = DenseNet::new(vec![Dense::new(w, Array1::zeros(1), Activation::Identity).unwrap()], 0.0).unwrap();
    let partition = ParamPartition::new(vec![0, 1], 3).unwrap();
    let batch = Batch::new(z, y).unwrap();
    let d1: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    let d2: Vec<f64> = d1.iter().map(|v| -v).collect();
    let theta0 = partition.gather(&net.flat_params());
    // Projection directions and projected means at θ.
    let eval = |theta: &[f64]| {
        let mut probe = net.clone();
        let mut flat = probe.flat_params();
        partition.scatter(&mut flat, theta);
        probe.set_flat_params(&flat).unwrap();
        let scores = per_sample_scores(&probe, &partition, LossKind::Mse, &batch).unwrap();
        let mut alphas = Vec::new();
        let mut d = Vec::new();
        for dk in [&d1, &d2] {
            let p = project_influence(dk, &scores, &cfg).unwrap();
            d.push(mean(&p.projected));
            alphas.push(p.alpha);
        }
        (alphas, d)
    };
    let objective = |theta: &[f64]| eval(theta).1.iter().map(|v| v * v).sum::<f64>();
    let (alphas, d) = eval(&theta0);
    let v = combine_directions(&alphas, &d).unwrap().expect("nonzero d");
    let step = |gamma: f64| -> Vec<f64> { theta0.iter().zip(&v).map(|(t, vi)| t - gamma * vi).collect() };
    let h = 1e-6;
    let deriv = (objective(&step(h)) - objective(&step(-h))) / (2.0 * h);
    deriv / objective(&theta0).max(f64::MIN_POSITIVE)
}

fn criterion_6() -> Verdict {
    // Targeting starts from a fitted model, so the family is drawn around
    // the least-squares fit.
    let near: Vec<f64> = (0..20).map(|s| toy_derivative(600 + s, Some(0.1))).collect();
    let worst = near.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let far: Vec<f64> = (0..20).map(|s| toy_derivative(700 + s, None)).collect();
    let far_up = far.iter().filter(|d| **d > 0.0).count();
    Verdict::new(
        worst <= 0.0,
        format!(
            "two-target toy with D₂ = −D₁, 20 datasets near the fit: largest relative directional derivative of \
             Σd_k² along the combined step {worst:.3e} (≤ 0)"
        ),
    )
    .note(format!(
        "from weights unrelated to the data (far from any fit) Σd_k² rises along the step in {far_up}/20 draws"
    ))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 4.0 * f64::EPSILON * b.abs().max(1.0)
}

fn criterion_7() -> Verdict {
    // Constant hazard: S(t) = exp(−λ t).
    let grid = TimeGrid::standard();
    let mut integ_err = 0.0f64;
    for lambda in [0.01, 0.1, 0.35, 1.0] {
        let s = survival_from_log_hazard(&vec![f64::ln(lambda); grid.n_nodes()], &grid);
        for (t, v) in grid.points().iter().zip(&s) {
            integ_err = integ_err.max((v - (-lambda * t).exp()).abs());
        }
    }

    // Hand-computed product-limit values: n = 5, events at 1, 2, 3, a
    // censoring tie at 2 and censoring at 4.
    let time = [1.0, 2.0, 2.0, 3.0, 4.0];
    let event = [true, true, false, true, false];
    let g = TimeGrid::new(vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 5.0], 1).unwrap();
    let km = km_estimate(&time, &event, &g).unwrap();
    let s = [1.0, 4.0 / 5.0, 4.0 / 5.0, 3.0 / 5.0, 3.0 / 5.0, 3.0 / 10.0, 3.0 / 10.0, 3.0 / 10.0, 3.0 / 10.0];
    // Greenwood: S² Σ d / (n (n − d)) with terms 1/20, 1/12, 1/2.
    let gw = [0.0, 0.64 / 20.0, 0.64 / 20.0, 0.36 * (8.0 / 60.0), 0.36 * (8.0 / 60.0), 0.09 * (38.0 / 60.0),
        0.09 * (38.0 / 60.0), 0.09 * (38.0 / 60.0), 0.09 * (38.0 / 60.0)];
    let km_ok = km.survival.iter().zip(&s).all(|(a, b)| close(*a, *b))
        && km.variance.iter().zip(&gw).all(|(a, b)| close(*a, *b));
    // Without censoring KM is the empirical survival function.
    let t2 = [0.7, 1.3, 1.3, 2.2, 3.9, 4.1];
    let km2 = km_estimate(&t2, &[true; 6], &g).unwrap();
    let empirical_ok = g
        .points()
        .iter()
        .zip(&km2.survival)
        .all(|(t, v)| close(*v, t2.iter().filter(|&&x| x > *t).count() as f64 / 6.0));
    let greenwood_zero = km.variance[0] == 0.0 && km2.variance[0] == 0.0;

    // Poisson loss derivative in the log-hazard.
    let mut rng = seeded(707);
    let mut pois_err = 0.0f64;
    for _ in 0..200 {
        let eta = rng.random_range(-4.0..2.0);
        let tau = rng.random_range(0.05..3.0);
        let delta = f64::from(rng.random_bool(0.3));
        let h = 1e-5;
        let fd = (LossKind::Poisson.value(eta + h, delta, tau) - LossKind::Poisson.value(eta - h, delta, tau)) / (2.0 * h);
        pois_err = pois_err.max(rel_err(LossKind::Poisson.derivative(eta, delta, tau), fd, 1e-3));
    }
    // And through a hazard network on person-time rows.
    for _ in 0..5 {
        let net = DenseNet::init(&[3, 5, 1], Activation::Elu, Activation::Identity, 0.0, &mut rng).unwrap();
        let inputs = normal_matrix(10, 3, &mut rng);
        let targets = (0..10).map(|_| f64::from(rng.random_bool(0.3))).collect();
        let exposure = (0..10).map(|_| rng.random_range(0.05..1.0)).collect();
        let batch = Batch::with_exposure(inputs, targets, exposure).unwrap();
        let scores = per_sample_scores(&net, &all_params(&net), LossKind::Poisson, &batch).unwrap();
        let fd = fd_scores(&net, LossKind::Poisson, &batch, 1e-5);
        for (a, b) in scores.values.iter().zip(fd.iter()) {
            pois_err = pois_err.max(rel_err(*a, *b, 1e-3));
        }
    }
    Verdict::new(
        integ_err < 1e-4 && km_ok && empirical_ok && greenwood_zero && pois_err < 1e-6,
        format!(
            "constant-hazard integration err {integ_err:.1e}; KM/Greenwood hand values match: {km_ok}; \
             KM = empirical without censoring: {empirical_ok}; Greenwood 0 where S = 1: {greenwood_zero}; \
             Poisson gradient max rel err {pois_err:.1e}"
        ),
    )
}

/// `S(t|x)` on the grid by composite Simpson integration of the true
/// hazard, 16 panels per grid cell.
fn true_conditional_survival(p: &DgpParams, x: &[f64], points: &[f64]) -> Vec<f64> {
    let panels = 16;
    let mut cum = 0.0;
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(points.len());
    for &t in points {
        let w = (t - prev) / panels as f64;
        for k in 0..panels {
            let a = prev + k as f64 * w;
            let h = |s: f64| p.true_hazard(s, x);
            cum += w / 6.0 * (h(a) + 4.0 * h(a + 0.5 * w) + h(a + w));
        }
        prev = t;
        out.push((-cum).exp());
    }
    out
}

fn censoring_survival(p: &DgpParams, x: &[f64], t: f64) -> f64 {
    (-(t / p.censoring_scale(x)).powf(p.alpha_c)).exp()
}

fn criterion_8() -> Verdict {
    let p = DgpParams::default();
    let grid = TimeGrid::standard();
    let times = grid.points();
    let k = times.len();

    // Reference sample: the true curve, its Monte-Carlo error, and
    // E[S(t|X) / G(t|X)], the second moment of the weighted indicator.
    let n_ref = 20_000;
    let x_ref = gen_covariates(n_ref, N_SURVIVAL_COVARIATES, p.rho, &mut seeded(7));
    let mut sum = vec![0.0; k];
    let mut sum_sq = vec![0.0; k];
    let mut second = vec![0.0; k];
    for row in x_ref.rows() {
        let x = row.as_slice().unwrap();
        let s = true_conditional_survival(&p, x, times);
        for j in 0..k {
            sum[j] += s[j];
            sum_sq[j] += s[j] * s[j];
            second[j] += s[j] / censoring_survival(&p, x, times[j]);
        }
    }
    let nr = n_ref as f64;
    let truth: Vec<f64> = sum.iter().map(|s| s / nr).collect();
    let truth_se: Vec<f64> = (0..k)
        .map(|j| ((sum_sq[j] / nr - truth[j].powi(2)).max(0.0) / nr).sqrt())
        .collect();

    let n = 5000;
    // Design-based SE of the mean, E[S/G] − S² estimated on the reference
    // sample. The weights are heavy-tailed, so this is itself noisy.
    let model_se: Vec<f64> = (0..k)
        .map(|j| ((second[j] / nr - truth[j].powi(2)).max(0.0) / n as f64).sqrt())
        .collect();
    let run = |seed: u64| {
        let data = simulate(n, &p, &mut seeded(seed)).unwrap();
        let mut est = Vec::with_capacity(k);
        let mut se = Vec::with_capacity(k);
        for &t in times {
            let w: Vec<f64> = (0..n)
                .map(|i| {
                    if data.time[i] > t {
                        1.0 / censoring_survival(&p, data.x.row(i).as_slice().unwrap(), t)
                    } else {
                        0.0
                    }
                })
                .collect();
            est.push(mean(&w));
            se.push(sd(&w) / (n as f64).sqrt());
        }
        (data, est, se)
    };
    let within = |e: f64, j: usize, s: f64| (e - truth[j]).abs() <= 3.0 * (s * s + truth_se[j].powi(2)).sqrt();
    let (data, est, se) = run(2025);
    let by_model: Vec<bool> = (0..k).map(|j| within(est[j], j, model_se[j])).collect();
    let by_sample = (0..k).filter(|&j| within(est[j], j, se[j])).count();
    let degenerate = (0..k).filter(|&j| se[j] == 0.0).count();
    let hits = by_model.iter().filter(|b| **b).count();
    let z_max = (0..k)
        .map(|j| (est[j] - truth[j]).abs() / (model_se[j].powi(2) + truth_se[j].powi(2)).sqrt())
        .filter(|z| z.is_finite())
        .fold(0.0, f64::max);
    let other_seeds = (1..=10)
        .filter(|&seed| {
            let (_, e, _) = run(seed);
            (0..k).all(|j| within(e[j], j, model_se[j]))
        })
        .count();
    let mut v = Verdict::new(
        hits == k,
        format!(
            "known-G IPCW, n = 5000, seed 2025: within 3 SE of the true curve at {hits}/{k} grid points \
             (largest |error| / SE {z_max:.2})"
        ),
    )
    .note(format!(
        "SE is the design-based SE estimated on the reference sample; with the plug-in sample SE instead \
         {by_sample}/{k} points pass, because at {degenerate} points no subject is still observed and the sample SE is 0"
    ))
    .note(format!("seeds 1–10: {other_seeds}/10 pass at all {k} points with the same rule"));
    for j in (0..k).filter(|&j| !by_model[j]) {
        let alive = data.time.iter().filter(|&&t| t > times[j]).count();
        v = v.note(format!(
            "t = {:5.2}: estimate {:.5}, truth {:.5}, SE {:.5} (sample SE {:.5}), {alive} subjects still observed",
            times[j], est[j], truth[j], model_se[j], se[j]
        ));
    }
    v
}

fn small_ate_config() -> AteBenchConfig {
    let mut cfg = AteBenchConfig {
        replications: 3,
        workers: 2,
        methods: vec![AteMethod::Plugin, AteMethod::Aipw, AteMethod::PostTmle, AteMethod::TdaLast],
        ..AteBenchConfig::default()
    };
    cfg.ihdp.n = 200;
    cfg.train.max_epochs = 15;
    cfg
}

fn small_survival_config() -> SurvivalBenchConfig {
    let mut cfg = SurvivalBenchConfig {
        replications: 2,
        workers: 2,
        n: 200,
        truth_n: 2000,
        ..SurvivalBenchConfig::default()
    };
    cfg.hazard.hidden = vec![16, 8];
    cfg.hazard.train.max_epochs = 5;
    cfg.targeting.max_iters = 20;
    cfg
}

fn summary_bytes(out: &BenchOutput, dir: &Path, target: &str) -> Vec<u8> {
    persist(&out.records, &out.summary, dir, target).unwrap();
    std::fs::read(dir.join("summary.csv")).unwrap()
}

fn criterion_9() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let ate = small_ate_config();
    let a1 = summary_bytes(&run_ate_bench(&ate).unwrap(), &tmp.path().join("ate1"), "tda_last");
    let a2 = summary_bytes(&run_ate_bench(&ate).unwrap(), &tmp.path().join("ate2"), "tda_last");
    let surv = small_survival_config();
    let s1 = summary_bytes(&run_survival_bench(&surv).unwrap(), &tmp.path().join("s1"), "tda");
    let s2 = summary_bytes(&run_survival_bench(&surv).unwrap(), &tmp.path().join("s2"), "tda");
    Verdict::new(
        a1 == a2 && s1 == s2,
        format!(
            "repeated runs with 2 workers: ATE summary.csv identical: {} ({} bytes); survival summary.csv identical: {} \
             ({} bytes)",
            a1 == a2,
            a1.len(),
            s1 == s2,
            s1.len()
        ),
    )
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn metric(s: &SummaryTable, method: &str, f: impl Fn(&tda_core::harness::MethodSummary) -> f64) -> f64 {
    s.method(method).map_or(f64::NAN, f)
}

fn criterion_10() -> Verdict {
    let cfg = AteBenchConfig {
        replications: 100,
        workers: workers(),
        methods: vec![AteMethod::Plugin, AteMethod::TdaLast, AteMethod::TdaFull],
        ..AteBenchConfig::default()
    };
    let started = Instant::now();
    let out = run_ate_bench(&cfg).unwrap();
    let s = &out.summary;
    let cov = |m: &str| metric(s, m, |x| x.mean_coverage);
    let mse = |m: &str| metric(s, m, |x| x.mean_mse);
    let bias = |m: &str| metric(s, m, |x| x.mean_bias);
    let checks = [
        ("coverage(plugin) ≤ 0.85", cov("plugin") <= 0.85),
        ("coverage(tda_last) ≥ 0.85", cov("tda_last") >= 0.85),
        ("coverage(tda_full) ≥ 0.85", cov("tda_full") >= 0.85),
        ("mse(tda_last) < mse(plugin)", mse("tda_last") < mse("plugin")),
        ("|bias(tda_last)| < |bias(plugin)|", bias("tda_last").abs() < bias("plugin").abs()),
    ];
    let mut v = Verdict::new(
        checks.iter().all(|c| c.1),
        format!(
            "ATE bench, {} replications (n = {}, {} failed) in {:.0} s on {} worker(s)",
            cfg.replications,
            cfg.ihdp.n,
            s.failed,
            started.elapsed().as_secs_f64(),
            cfg.workers
        ),
    );
    for m in ["plugin", "tda_last", "tda_full"] {
        v = v.note(format!(
            "{m:9} bias {:+.4}  mse {:.4}  coverage {:.2}  ci width {:.3}  converged {}",
            bias(m),
            mse(m),
            cov(m),
            metric(s, m, |x| x.mean_ci_width),
            s.method(m).and_then(|x| x.converged).map_or("-".into(), |c| c.to_string())
        ));
    }
    for (name, ok) in checks {
        v = v.note(format!("{name}: {}", if ok { "yes" } else { "no" }));
    }
    v
}

fn criterion_11() -> Verdict {
    let cfg = SurvivalBenchConfig {
        workers: workers(),
        ..SurvivalBenchConfig::default()
    };
    let started = Instant::now();
    let out = run_survival_bench(&cfg).unwrap();
    let s = &out.summary;
    let mse = |m: &str| metric(s, m, |x| x.mean_mse);
    let cov = |m: &str| metric(s, m, |x| x.mean_coverage);
    let times = s.times.clone().unwrap_or_default();
    let later: Vec<usize> = (0..times.len()).filter(|&j| times[j] > 2.0).collect();
    let op = outperformance(&out.records, "tda");
    let mut majority = Vec::new();
    if let Some(op) = &op {
        for (comp, fracs) in &op.competitors {
            let wins = later.iter().filter(|&&j| fracs[j] > 0.5).count();
            majority.push((comp.clone(), wins, 2 * wins > later.len()));
        }
    }
    let checks = [
        (
            "mse(tda) ≤ 0.75 × min(mse(initial), mse(km))",
            mse("tda") <= 0.75 * mse("initial").min(mse("km")),
        ),
        ("coverage(tda) ≥ 0.80", cov("tda") >= 0.80),
        ("coverage(km) ≤ 0.70", cov("km") <= 0.70),
        (
            "tda wins in > 50% of replications at most grid points beyond t = 2",
            !majority.is_empty() && majority.iter().all(|m| m.2),
        ),
    ];
    let mut v = Verdict::new(
        checks.iter().all(|c| c.1),
        format!(
            "survival bench, {} replications (n = {}, {} failed) in {:.0} s on {} worker(s)",
            cfg.replications,
            cfg.n,
            s.failed,
            started.elapsed().as_secs_f64(),
            cfg.workers
        ),
    );
    for m in ["initial", "km", "tda"] {
        v = v.note(format!(
            "{m:8} time-averaged mse {:.3e}  coverage {:.3}  |bias| {:.4}  converged {}",
            mse(m),
            cov(m),
            metric(s, m, |x| x.mean_abs_bias),
            s.method(m).and_then(|x| x.converged).map_or("-".into(), |c| c.to_string())
        ));
    }
    for (comp, wins, _) in &majority {
        v = v.note(format!("tda beats {comp} at {wins}/{} grid points beyond t = 2", later.len()));
    }
    for (name, ok) in checks {
        v = v.note(format!("{name}: {}", if ok { "yes" } else { "no" }));
    }
    v
}

fn main() {
    let skip_bench = std::env::var_os("TDA_ACCEPTANCE_SKIP_BENCH").is_some_and(|v| v != "0");
    type Check = fn() -> Verdict;
    let criteria: [(usize, &str, bool, Check); 11] = [
        (1, "gradient fidelity", true, criterion_1),
        (2, "per-sample / batch consistency", true, criterion_2),
        (3, "projection solvers", true, criterion_3),
        (4, "post-TMLE score equation", true, criterion_4),
        (5, "targeting loop contract", true, criterion_5),
        (6, "multi-target descent", true, criterion_6),
        (7, "survival numerics", true, criterion_7),
        (8, "IPCW with known censoring", false, criterion_8),
        (9, "determinism", true, criterion_9),
        (10, "ATE desk-scale bench", false, criterion_10),
        (11, "survival desk-scale bench", false, criterion_11),
    ];
    let mut gated_failures = Vec::new();
    let mut reported_failures = Vec::new();
    for (id, name, gated, check) in criteria {
        if skip_bench && id >= 10 {
            println!("criterion {id:2} SKIP  {name}: TDA_ACCEPTANCE_SKIP_BENCH is set");
            continue;
        }
        let started = Instant::now();
        let v = check();
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:2} {status}  {name}: {} [{:.1} s]",
            v.summary,
            started.elapsed().as_secs_f64()
        );
        for line in &v.notes {
            println!("              {line}");
        }
        if !v.pass {
            if gated {
                gated_failures.push(id);
            } else {
                reported_failures.push(id);
            }
        }
    }
    if !reported_failures.is_empty() {
        println!("statistical criteria failing (reported, not gating): {reported_failures:?}");
    }
    if !gated_failures.is_empty() {
        println!("property criteria failing: {gated_failures:?}");
        std::process::exit(1);
    }
}
