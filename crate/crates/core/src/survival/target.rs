use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::grid::TimeGrid;
use super::hazard::{node_inputs, person_time, survival_from_log_hazard};
use super::ipcw::ipcw_influence;
use crate::error::{Result, TdaError};
use crate::nn::{DenseNet, ScoreMatrix};
use crate::targeting::{tda_run_multi, FinalEstimate, Submodel, TargetingConfig, TargetingReport};

/// Final linear layer of a hazard network, with the penultimate features
/// of every person-time row and every integration node cached. The
/// per-subject loss is the sum of its person-time Poisson losses.
pub struct FinalLayerSubmodel {
    grid: TimeGrid,
    n: usize,
    row_feats: Array2<f64>,
    row_exposure: Vec<f64>,
    row_event: Vec<f64>,
    row_subject: Vec<usize>,
    node_feats: Array2<f64>,
    weights: Array1<f64>,
    bias: f64,
}

fn penultimate(net: &DenseNet, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let cache = net.forward_batch(inputs, None)?;
    Ok(cache.layer_input(net.layers().len() - 1).to_owned())
}

impl FinalLayerSubmodel {
    pub fn new(net: &DenseNet, x: ArrayView2<'_, f64>, time: &[f64], event: &[bool], grid: &TimeGrid) -> Result<Self> {
        if net.output_dim() != 1 || x.ncols() + 1 != net.input_dim() {
            return Err(TdaError::Shape {
                expected: x.ncols() + 1,
                actual: net.input_dim(),
            });
        }
        let n = x.nrows();
        let subjects: Vec<usize> = (0..n).collect();
        let rows = person_time(x, time, event, &subjects, grid)?;
        let last = net.layers().last().expect("nonempty net");
        Ok(FinalLayerSubmodel {
            grid: grid.clone(),
            n,
            row_feats: penultimate(net, rows.inputs.view())?,
            row_exposure: rows.exposure,
            row_event: rows.targets,
            row_subject: rows.ids,
            node_feats: penultimate(net, node_inputs(x, grid).view())?,
            weights: last.weights.row(0).to_owned(),
            bias: last.bias[0],
        })
    }

    fn log_hazard(&self, feats: &Array2<f64>) -> Array1<f64> {
        feats.dot(&self.weights) + self.bias
    }

    /// Conditional survival curves under the current final layer.
    pub fn curves(&self) -> Array2<f64> {
        let eta = self.log_hazard(&self.node_feats);
        let m = self.grid.n_nodes();
        let eta = eta.as_slice().expect("contiguous");
        let mut out = Array2::zeros((self.n, self.grid.len()));
        for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
            let s = survival_from_log_hazard(&eta[i * m..(i + 1) * m], &self.grid);
            row.iter_mut().zip(s).for_each(|(d, v)| *d = v);
        }
        out
    }

    pub fn marginal(&self) -> Vec<f64> {
        super::hazard::column_means(&self.curves())
    }

    /// Writes the targeted layer back into a copy of `net`.
    pub fn apply_to(&self, net: &DenseNet) -> Result<DenseNet> {
        let mut out = net.clone();
        let mut flat = out.flat_params();
        let start = flat.len() - self.weights.len() - 1;
        flat[start..start + self.weights.len()].copy_from_slice(self.weights.as_slice().expect("contiguous"));
        *flat.last_mut().expect("nonempty") = self.bias;
        out.set_flat_params(&flat)?;
        Ok(out)
    }
}

impl Submodel for FinalLayerSubmodel {
    fn n_samples(&self) -> usize {
        self.n
    }

    fn theta(&self) -> Vec<f64> {
        let mut t = self.weights.to_vec();
        t.push(self.bias);
        t
    }

    fn set_theta(&mut self, theta: &[f64]) -> Result<()> {
        let k = self.weights.len();
        if theta.len() != k + 1 {
            return Err(TdaError::Shape {
                expected: k + 1,
                actual: theta.len(),
            });
        }
        self.weights.assign(&ArrayView2::from_shape((1, k), &theta[..k]).expect("row").row(0));
        self.bias = theta[k];
        Ok(())
    }

    fn scores(&self) -> Result<ScoreMatrix> {
        let k = self.weights.len();
        let eta = self.log_hazard(&self.row_feats);
        let mut values = Array2::zeros((self.n, k + 1));
        for (r, e) in eta.iter().enumerate() {
            let coef = self.row_exposure[r] * e.exp() - self.row_event[r];
            let mut dst = values.row_mut(self.row_subject[r]);
            dst.slice_mut(ndarray::s![..k]).scaled_add(coef, &self.row_feats.row(r));
            dst[k] += coef;
        }
        if let Some(((i, _), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(TdaError::NonFinite {
                sample: i,
                what: "survival score".into(),
            });
        }
        Ok(ScoreMatrix {
            values,
            sample_ids: (0..self.n).collect(),
            param_indices: (0..=k).collect(),
        })
    }

    fn mean_loss(&self) -> Result<f64> {
        let eta = self.log_hazard(&self.row_feats);
        let total: f64 = eta
            .iter()
            .enumerate()
            .map(|(r, e)| {
                let tau = self.row_exposure[r];
                tau * e.exp() - self.row_event[r] * (e + tau.ln())
            })
            .sum();
        Ok(total / self.n as f64)
    }
}

/// Estimated marginal survival with pointwise intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub survival: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SurvivalCurve {
    /// `S ± z·sd/√n`.
    pub fn wald(survival: Vec<f64>, sd: &[f64], n: usize, z: f64) -> Self {
        let half: Vec<f64> = sd.iter().map(|s| z * s / (n as f64).sqrt()).collect();
        SurvivalCurve {
            lower: survival.iter().zip(&half).map(|(s, h)| s - h).collect(),
            upper: survival.iter().zip(&half).map(|(s, h)| s + h).collect(),
            survival,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SurvivalTargetFit {
    /// Plug-in curve before targeting, with intervals from the projected
    /// influence at the initial weights.
    pub initial: SurvivalCurve,
    pub targeted: SurvivalCurve,
    pub report: TargetingReport,
    pub net: DenseNet,
    /// Censoring-weight floor activations at the final iteration.
    pub floored: usize,
}

/// Targets the whole marginal survival curve at once by updating the final
/// layer of the hazard network along the combined IPCW direction. The
/// censoring curves `g_hat` (subjects × grid) are held fixed.
#[allow(clippy::too_many_arguments)]
pub fn target_survival_curve(
    net: &DenseNet,
    x: ArrayView2<'_, f64>,
    time: &[f64],
    event: &[bool],
    g_hat: &Array2<f64>,
    grid: &TimeGrid,
    cfg: &TargetingConfig,
    g_min: f64,
) -> Result<SurvivalTargetFit> {
    let mut model = FinalLayerSubmodel::new(net, x, time, event, grid)?;
    let initial_s = model.marginal();
    let mut floored = 0;
    let mut influence = |m: &FinalLayerSubmodel| -> Result<Vec<Vec<f64>>> {
        let d = ipcw_influence(grid.points(), time, g_hat, &m.marginal(), g_min)?;
        floored = d.floored;
        Ok(d.values)
    };
    let mut report = tda_run_multi(&mut model, &mut influence, cfg);
    if let Some(e) = &report.error {
        return Err(TdaError::Domain(format!("survival targeting failed: {e}")));
    }
    report.notes.push(format!("censoring floor active at {floored} subject-time pairs"));
    report.notes.push("censoring model fitted once and held fixed".into());
    let n = x.nrows();
    let first = report.iterations.first().expect("at least one iteration");
    let last = report.last().expect("at least one iteration");
    let z = crate::ate::Z_95;
    let initial = SurvivalCurve::wald(initial_s, &first.sd_dproj, n, z);
    let targeted = SurvivalCurve::wald(model.marginal(), &last.sd_dproj, n, z);
    for (k, t) in grid.points().iter().enumerate() {
        report.estimates.push(FinalEstimate {
            label: format!("S({t})"),
            psi: targeted.survival[k],
            ci_lower: targeted.lower[k],
            ci_upper: targeted.upper[k],
        });
    }
    let net = model.apply_to(net)?;
    Ok(SurvivalTargetFit {
        initial,
        targeted,
        report,
        net,
        floored,
    })
}
