use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::grid::TimeGrid;
use crate::error::{Result, TdaError};
use crate::nn::{train_dense, Activation, AdamConfig, Batch, DenseNet, LossKind, TrainConfig, TrainHistory};
use crate::rng::TdaRng;

/// Architecture and training settings of a log-hazard network with input
/// `[x, t/horizon]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HazardModelSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub dropout: f64,
    pub train: TrainConfig,
}

impl Default for HazardModelSpec {
    fn default() -> Self {
        HazardModelSpec {
            hidden: vec![64, 32, 16],
            activation: Activation::Relu,
            dropout: 0.2,
            train: TrainConfig {
                adam: AdamConfig::default(),
                batch_size: 256,
                max_epochs: 100,
                patience: 10,
            },
        }
    }
}

impl HazardModelSpec {
    pub fn init(&self, n_covariates: usize, rng: &mut TdaRng) -> Result<DenseNet> {
        let mut dims = vec![n_covariates + 1];
        dims.extend(&self.hidden);
        dims.push(1);
        DenseNet::init(&dims, self.activation, Activation::Identity, self.dropout, rng)
    }
}

/// `τλ − Δ·ln(λτ)`.
pub fn poisson_loss(lambda: f64, delta: bool, tau: f64) -> Result<f64> {
    if !(lambda > 0.0) || !(tau > 0.0) {
        return Err(TdaError::Domain(format!(
            "Poisson loss needs positive hazard and exposure, got λ = {lambda}, τ = {tau}"
        )));
    }
    Ok(tau * lambda - if delta { (lambda * tau).ln() } else { 0.0 })
}

/// Person-time rows: one per (subject, grid cell at risk), with exposure
/// equal to the time at risk inside the cell and target 1 only in the cell
/// containing the subject's observed event. The time input is the cell
/// midpoint. `Batch::ids` holds the subject index.
pub fn person_time(
    x: ArrayView2<'_, f64>,
    time: &[f64],
    indicator: &[bool],
    subjects: &[usize],
    grid: &TimeGrid,
) -> Result<Batch> {
    let p = x.ncols();
    let mut inputs = Vec::new();
    let (mut targets, mut exposure, mut ids) = (Vec::new(), Vec::new(), Vec::new());
    for &i in subjects {
        let t_i = time[i];
        for (j, &end) in grid.points().iter().enumerate() {
            let start = grid.cell_start(j);
            if t_i <= start {
                break;
            }
            let tau = t_i.min(end) - start;
            if tau <= 0.0 {
                continue;
            }
            inputs.extend(x.row(i).iter().copied());
            inputs.push(grid.time_feature(grid.cell_mid(j)));
            targets.push(if indicator[i] && t_i <= end { 1.0 } else { 0.0 });
            exposure.push(tau);
            ids.push(i);
        }
    }
    if targets.is_empty() {
        return Err(TdaError::Domain("no subject is at risk on the grid".into()));
    }
    let inputs = Array2::from_shape_vec((targets.len(), p + 1), inputs).expect("row-major fill");
    let mut batch = Batch::with_exposure(inputs, targets, exposure)?;
    batch.ids = ids;
    Ok(batch)
}

/// Network inputs `[x_i, t_m/horizon]` for every subject `i` and
/// integration node `m`, subject-major.
pub fn node_inputs(x: ArrayView2<'_, f64>, grid: &TimeGrid) -> Array2<f64> {
    let nodes = grid.nodes();
    let (n, p) = x.dim();
    let mut out = Array2::zeros((n * nodes.len(), p + 1));
    for i in 0..n {
        for (m, &t) in nodes.iter().enumerate() {
            let mut row = out.row_mut(i * nodes.len() + m);
            row.slice_mut(ndarray::s![..p]).assign(&x.row(i));
            row[p] = grid.time_feature(t);
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct HazardFit {
    pub net: DenseNet,
    pub history: TrainHistory,
}

/// Trains a hazard network by Poisson person-time regression on the
/// training subjects, early-stopped on the validation subjects. Pass the
/// event indicator for the event hazard or its complement for censoring.
#[allow(clippy::too_many_arguments)]
pub fn fit_hazard(
    x: ArrayView2<'_, f64>,
    time: &[f64],
    indicator: &[bool],
    train_idx: &[usize],
    val_idx: &[usize],
    grid: &TimeGrid,
    spec: &HazardModelSpec,
    rng: &mut TdaRng,
) -> Result<HazardFit> {
    let train_b = person_time(x, time, indicator, train_idx, grid)?;
    let val_b = person_time(x, time, indicator, val_idx, grid)?;
    let net = spec.init(x.ncols(), rng)?;
    let (net, history) = train_dense(net, LossKind::Poisson, &train_b, &val_b, &spec.train, rng)?;
    Ok(HazardFit { net, history })
}

/// `exp(−∫₀ᵗ λ)` at the grid points from log-hazard values at the
/// integration nodes, by the trapezoid rule. `−∞` means zero hazard.
pub fn survival_from_log_hazard(log_hazard: &[f64], grid: &TimeGrid) -> Vec<f64> {
    let hazard: Vec<f64> = log_hazard.iter().map(|v| v.exp()).collect();
    grid.integrate_to_points(&hazard).into_iter().map(|c| (-c).exp()).collect()
}

/// Conditional survival curves, one row per subject.
pub fn survival_curves(net: &DenseNet, x: ArrayView2<'_, f64>, grid: &TimeGrid) -> Result<Array2<f64>> {
    let inputs = node_inputs(x, grid);
    let out = net.forward_batch(inputs.view(), None)?;
    let out = out.output().column(0).to_vec();
    let m = grid.n_nodes();
    let mut curves = Array2::zeros((x.nrows(), grid.len()));
    for (i, mut row) in curves.rows_mut().into_iter().enumerate() {
        let s = survival_from_log_hazard(&out[i * m..(i + 1) * m], grid);
        row.iter_mut().zip(s).for_each(|(d, v)| *d = v);
    }
    Ok(curves)
}

/// `S(·|x)` for a single covariate vector.
pub fn survival_from_hazard(net: &DenseNet, x: &[f64], grid: &TimeGrid) -> Result<Vec<f64>> {
    let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
    Ok(survival_curves(net, view, grid)?.row(0).to_vec())
}

/// Column means of the conditional curves.
pub fn marginal_survival(net: &DenseNet, x: ArrayView2<'_, f64>, grid: &TimeGrid) -> Result<Vec<f64>> {
    Ok(column_means(&survival_curves(net, x, grid)?))
}

pub(crate) fn column_means(m: &Array2<f64>) -> Vec<f64> {
    m.mean_axis(ndarray::Axis(0)).expect("nonempty").to_vec()
}
