//! Targeting of the outcome heads of a fitted [`DragonNet`].
//!
//! The trunk is frozen in every submodel offered here, so its features are
//! computed once and the submodel only re-evaluates the heads.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::dragonnet::DragonNet;
use super::estimators::{AteEstimate, AteMethod, Nuisance};
use crate::error::{Result, TdaError};
use crate::nn::{batch_loss_gradient, mean_loss, per_sample_scores, Batch, LossKind, ParamPartition, ScoreMatrix};
use crate::targeting::{
    block_gradients, mean_output_gradient, plateau_select, tda_direct, tda_run, FinalEstimate, Submodel,
    TargetingConfig, TargetingReport, PLATEAU_REL_TOL,
};

/// Which outcome-head parameters are freed for targeting. Indices used by
/// [`HeadPartition::Indices`] address the concatenation of the control
/// head's and the treated head's flat parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadPartition {
    /// Output layer of both heads.
    LastLayer,
    /// Every layer of both heads.
    OutcomeHeads,
    /// Explicit blocks, e.g. `q0.1,q1.1,q1.0:5` (see [`FromStr`]).
    Blocks(Vec<HeadBlock>),
    /// Nested submodels grown by estimand-gradient ranking of hidden units,
    /// chosen by the confidence-bound plateau rule.
    AutoPlateau,
}

/// A block of head parameters: a whole layer, or one hidden unit's
/// incoming weights and bias.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadBlock {
    pub arm: usize,
    pub layer: usize,
    pub unit: Option<usize>,
}

impl fmt::Display for HeadBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}.{}", self.arm, self.layer)?;
        if let Some(u) = self.unit {
            write!(f, ":{u}")?;
        }
        Ok(())
    }
}

impl FromStr for HeadBlock {
    type Err = TdaError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || TdaError::Config(format!("bad block `{s}` (expected qA.L or qA.L:U)"));
        let rest = s.trim().strip_prefix('q').ok_or_else(bad)?;
        let (arm, rest) = rest.split_once('.').ok_or_else(bad)?;
        let (layer, unit) = match rest.split_once(':') {
            Some((l, u)) => (l, Some(u.parse().map_err(|_| bad())?)),
            None => (rest, None),
        };
        let arm: usize = arm.parse().map_err(|_| bad())?;
        let layer: usize = layer.parse().map_err(|_| bad())?;
        if arm > 1 || layer > 1 {
            return Err(bad());
        }
        Ok(HeadBlock { arm, layer, unit })
    }
}

impl FromStr for HeadPartition {
    type Err = TdaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "last-layer" | "last_layer" => Ok(HeadPartition::LastLayer),
            "outcome-heads" | "outcome_heads" => Ok(HeadPartition::OutcomeHeads),
            "auto-plateau" | "auto_plateau" => Ok(HeadPartition::AutoPlateau),
            other => {
                let spec = other
                    .strip_prefix("blocks:")
                    .ok_or_else(|| TdaError::Config(format!("unknown partition `{other}`")))?;
                let blocks = spec.split(',').map(str::parse).collect::<Result<Vec<HeadBlock>>>()?;
                if blocks.is_empty() {
                    return Err(TdaError::Config("empty block list".into()));
                }
                Ok(HeadPartition::Blocks(blocks))
            }
        }
    }
}

impl fmt::Display for HeadPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeadPartition::LastLayer => f.write_str("last-layer"),
            HeadPartition::OutcomeHeads => f.write_str("outcome-heads"),
            HeadPartition::AutoPlateau => f.write_str("auto-plateau"),
            HeadPartition::Blocks(b) => {
                let parts: Vec<String> = b.iter().map(ToString::to_string).collect();
                write!(f, "blocks:{}", parts.join(","))
            }
        }
    }
}

/// Flat indices (in the two-head address space) of one block.
pub fn block_indices(model: &DragonNet, block: HeadBlock) -> Result<Vec<usize>> {
    let head = &model.heads[block.arm];
    let offset = if block.arm == 1 { model.heads[0].n_params() } else { 0 };
    let spans = head.layer_spans();
    let span = spans
        .get(block.layer)
        .ok_or_else(|| TdaError::Partition(format!("head has no layer {}", block.layer)))?;
    let idx: Vec<usize> = match block.unit {
        None => span.all().collect(),
        Some(u) => {
            let layer = &head.layers()[block.layer];
            if u >= layer.outputs() {
                return Err(TdaError::Partition(format!("layer {} has no unit {u}", block.layer)));
            }
            let n_in = layer.inputs();
            let w = span.weights.start + u * n_in;
            (w..w + n_in).chain([span.bias.start + u]).collect()
        }
    };
    Ok(idx.into_iter().map(|i| i + offset).collect())
}

/// Resolves a fixed partition to head-space indices.
pub fn partition_indices(model: &DragonNet, partition: &HeadPartition) -> Result<Vec<usize>> {
    let blocks: Vec<HeadBlock> = match partition {
        HeadPartition::LastLayer => (0..2).map(|arm| HeadBlock { arm, layer: 1, unit: None }).collect(),
        HeadPartition::OutcomeHeads => (0..2)
            .flat_map(|arm| (0..2).map(move |layer| HeadBlock { arm, layer, unit: None }))
            .collect(),
        HeadPartition::Blocks(b) => b.clone(),
        HeadPartition::AutoPlateau => {
            return Err(TdaError::Partition("auto-plateau has no fixed index set".into()))
        }
    };
    let mut idx = Vec::new();
    for b in blocks {
        idx.extend(block_indices(model, b)?);
    }
    idx.sort_unstable();
    idx.dedup();
    Ok(idx)
}

/// Which influence values are projected during ATE targeting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AteInfluence {
    /// Full efficient influence function
    /// `H (Y - Q_A) + Q_1 - Q_0 - ψ`.
    Eif,
    /// Only the weighted-residual part `H (Y - Q_A)`. The omitted term is a
    /// function of `X` alone, has zero empirical mean at the plug-in `ψ`
    /// and is orthogonal to outcome-model scores in the population, so it
    /// only adds noise to the finite-sample projection.
    #[default]
    Residual,
}

impl FromStr for AteInfluence {
    type Err = TdaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "eif" => Ok(AteInfluence::Eif),
            "residual" => Ok(AteInfluence::Residual),
            other => Err(TdaError::Config(format!("unknown influence `{other}` (eif|residual)"))),
        }
    }
}

/// The two outcome heads restricted to a parameter subset, evaluated on
/// fixed trunk features with the factual squared-error loss.
pub struct HeadSubmodel {
    pub model: DragonNet,
    feats: Array2<f64>,
    a: Vec<f64>,
    y_std: Vec<f64>,
    rows: [Vec<usize>; 2],
    batches: [Batch; 2],
    parts: [Option<ParamPartition>; 2],
    /// Head-space indices, sorted.
    targ: Vec<usize>,
}

impl HeadSubmodel {
    pub fn new(model: DragonNet, x: &Array2<f64>, a: &[f64], y: &[f64], targ: Vec<usize>) -> Result<Self> {
        let feats = model.features(x.view())?;
        let y_std = model.standardize(y);
        let k0 = model.heads[0].n_params();
        let k1 = model.heads[1].n_params();
        let mut targ = targ;
        targ.sort_unstable();
        targ.dedup();
        if targ.is_empty() || targ[targ.len() - 1] >= k0 + k1 {
            return Err(TdaError::Partition("targeted head indices empty or out of range".into()));
        }
        let t0: Vec<usize> = targ.iter().copied().filter(|&i| i < k0).collect();
        let t1: Vec<usize> = targ.iter().filter(|&&i| i >= k0).map(|i| i - k0).collect();
        let part = |t: Vec<usize>, k| if t.is_empty() { Ok(None) } else { ParamPartition::new(t, k).map(Some) };
        let parts = [part(t0, k0)?, part(t1, k1)?];
        let rows: [Vec<usize>; 2] =
            [0.0, 1.0].map(|arm| (0..a.len()).filter(|&i| a[i] == arm).collect());
        let batches = [0, 1].map(|arm| {
            let r = &rows[arm];
            let mut b = Batch::new(feats.select(Axis(0), r), r.iter().map(|&i| y_std[i]).collect())
                .expect("aligned rows");
            b.ids = r.clone();
            b
        });
        Ok(HeadSubmodel {
            model,
            feats,
            a: a.to_vec(),
            y_std,
            rows,
            batches,
            parts,
            targ,
        })
    }

    pub fn n_targeted(&self) -> usize {
        self.targ.len()
    }

    /// Standardised `(q0, q1)` on every row.
    pub fn heads_std(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        self.model.heads_std(self.feats.view())
    }

    /// Trunk features of every row.
    pub fn features(&self) -> &Array2<f64> {
        &self.feats
    }

    /// Influence values on the standardised scale, with `g` clipped.
    pub fn influence_std(&self, g: &[f64], kind: AteInfluence) -> Result<Vec<f64>> {
        let (q0, q1) = self.heads_std()?;
        let nu = Nuisance::new(g, q0, q1)?;
        let mut d = nu.eif(&self.a, &self.y_std, nu.plugin_psi())?;
        if kind == AteInfluence::Residual {
            let psi = nu.plugin_psi();
            for (i, v) in d.iter_mut().enumerate() {
                *v -= nu.q1[i] - nu.q0[i] - psi;
            }
        }
        Ok(d)
    }

    fn offset(&self, arm: usize) -> usize {
        if arm == 1 {
            self.parts[0].as_ref().map_or(0, |p| p.targ().len())
        } else {
            0
        }
    }
}

impl Submodel for HeadSubmodel {
    fn n_samples(&self) -> usize {
        self.a.len()
    }

    fn theta(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.targ.len());
        for arm in 0..2 {
            if let Some(p) = &self.parts[arm] {
                out.extend(p.gather(&self.model.heads[arm].flat_params()));
            }
        }
        out
    }

    fn set_theta(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.targ.len() {
            return Err(TdaError::Shape {
                expected: self.targ.len(),
                actual: theta.len(),
            });
        }
        for arm in 0..2 {
            if let Some(p) = &self.parts[arm] {
                let off = self.offset(arm);
                let mut flat = self.model.heads[arm].flat_params();
                p.scatter(&mut flat, &theta[off..off + p.targ().len()]);
                self.model.heads[arm].set_flat_params(&flat)?;
            }
        }
        Ok(())
    }

    fn scores(&self) -> Result<ScoreMatrix> {
        let n = self.n_samples();
        let mut values = Array2::zeros((n, self.targ.len()));
        for arm in 0..2 {
            let (Some(p), false) = (&self.parts[arm], self.rows[arm].is_empty()) else {
                continue;
            };
            let s = per_sample_scores(&self.model.heads[arm], p, LossKind::Mse, &self.batches[arm])?;
            let off = self.offset(arm);
            for (r, &i) in self.rows[arm].iter().enumerate() {
                values
                    .row_mut(i)
                    .slice_mut(ndarray::s![off..off + p.targ().len()])
                    .assign(&s.values.row(r));
            }
        }
        Ok(ScoreMatrix {
            values,
            sample_ids: (0..n).collect(),
            param_indices: self.targ.clone(),
        })
    }

    fn mean_loss(&self) -> Result<f64> {
        let n = self.n_samples() as f64;
        let mut total = 0.0;
        for arm in 0..2 {
            if !self.rows[arm].is_empty() {
                total += mean_loss(&self.model.heads[arm], LossKind::Mse, &self.batches[arm])?
                    * self.rows[arm].len() as f64;
            }
        }
        Ok(total / n)
    }

    fn mean_score(&self) -> Result<Vec<f64>> {
        let n = self.n_samples() as f64;
        let mut out = Vec::with_capacity(self.targ.len());
        for arm in 0..2 {
            if let Some(p) = &self.parts[arm] {
                if self.rows[arm].is_empty() {
                    out.extend(std::iter::repeat_n(0.0, p.targ().len()));
                    continue;
                }
                let (_, g) = batch_loss_gradient(&self.model.heads[arm], LossKind::Mse, &self.batches[arm])?;
                let w = self.rows[arm].len() as f64 / n;
                out.extend(p.gather(&g).into_iter().map(|v| v * w));
            }
        }
        Ok(out)
    }
}

/// Estimate and targeting trace from one TDA run.
#[derive(Clone, Debug)]
pub struct TdaAteFit {
    pub estimate: AteEstimate,
    pub report: TargetingReport,
    pub model: DragonNet,
}

fn finish(
    method: AteMethod,
    sub: &HeadSubmodel,
    g_raw: &[f64],
    y: &[f64],
) -> Result<AteEstimate> {
    let (q0, q1) = sub.heads_std()?;
    let m = &sub.model;
    let un = |v: Vec<f64>| v.into_iter().map(|q| m.y_mean + m.y_scale * q).collect();
    let nu = Nuisance::new(g_raw, un(q0), un(q1))?;
    let psi = nu.plugin_psi();
    Ok(AteEstimate::from_eif(method, psi, nu.eif(&sub.a, y, psi)?))
}

/// Runs the projection-based targeting loop on the given head indices and
/// returns the targeted plug-in estimate with its Wald interval.
pub fn tda_ate_indices(
    model: &DragonNet,
    x: &Array2<f64>,
    a: &[f64],
    y: &[f64],
    targ: Vec<usize>,
    method: AteMethod,
    influence: AteInfluence,
    cfg: &TargetingConfig,
) -> Result<TdaAteFit> {
    let g_raw = model.predict(x.view())?.g;
    let (g, _, _) = clipped(&g_raw);
    let mut sub = HeadSubmodel::new(model.clone(), x, a, y, targ)?;
    let mut source = |m: &HeadSubmodel| -> Result<Vec<Vec<f64>>> { Ok(vec![m.influence_std(&g, influence)?]) };
    let mut report = tda_run(&mut sub, &mut source, cfg);
    if let Some(e) = &report.error {
        return Err(TdaError::Domain(format!("targeting failed: {e}")));
    }
    let mut estimate = finish(method, &sub, &g_raw, y)?;
    estimate.converged = Some(report.converged);
    report.estimates.push(FinalEstimate {
        label: "ate".into(),
        psi: estimate.psi,
        ci_lower: estimate.ci_lower,
        ci_upper: estimate.ci_upper,
    });
    Ok(TdaAteFit {
        estimate,
        report,
        model: sub.model,
    })
}

fn clipped(g_raw: &[f64]) -> (Vec<f64>, usize, usize) {
    let nu = Nuisance::new(g_raw, vec![0.0; g_raw.len()], vec![0.0; g_raw.len()]).expect("aligned");
    (nu.g, nu.clipped, g_raw.len())
}

/// TDA with a fixed partition, or with plateau selection over nested
/// submodels for [`HeadPartition::AutoPlateau`].
pub fn tda_ate(
    model: &DragonNet,
    x: &Array2<f64>,
    a: &[f64],
    y: &[f64],
    partition: &HeadPartition,
    method: AteMethod,
    influence: AteInfluence,
    cfg: &TargetingConfig,
) -> Result<TdaAteFit> {
    if *partition != HeadPartition::AutoPlateau {
        let idx = partition_indices(model, partition)?;
        return tda_ate_indices(model, x, a, y, idx, method, influence, cfg);
    }
    let candidates = plateau_candidates(model, x)?;
    let mut fits = Vec::with_capacity(candidates.len());
    for idx in candidates {
        fits.push(tda_ate_indices(model, x, a, y, idx, method, influence, cfg)?);
    }
    let summary: Vec<(f64, f64)> = fits
        .iter()
        .map(|f| (f.estimate.psi, (f.estimate.ci_upper - f.estimate.psi) / 1.96))
        .collect();
    let k = plateau_select(&summary, PLATEAU_REL_TOL);
    let mut chosen = fits.swap_remove(k);
    chosen
        .report
        .notes
        .push(format!("plateau selection chose submodel {k} of {}", summary.len()));
    Ok(chosen)
}

/// Nested submodels: the output layers, then the output layers plus the
/// top 8, 16, 32, 64 and 128 hidden units ranked by the gradient norm of
/// the plug-in estimand.
pub fn plateau_candidates(model: &DragonNet, x: &Array2<f64>) -> Result<Vec<Vec<usize>>> {
    let feats = model.features(x.view())?;
    let mut psi_grad = mean_output_gradient(&model.heads[0], &feats, 0)?;
    psi_grad.iter_mut().for_each(|v| *v = -*v);
    psi_grad.extend(mean_output_gradient(&model.heads[1], &feats, 0)?);
    let units = model.heads[0].layers()[0].outputs();
    let blocks: Vec<HeadBlock> = (0..2)
        .flat_map(|arm| (0..units).map(move |u| HeadBlock { arm, layer: 0, unit: Some(u) }))
        .collect();
    let block_idx = blocks
        .iter()
        .map(|&b| block_indices(model, b))
        .collect::<Result<Vec<_>>>()?;
    let ranked = block_gradients(&block_idx, &psi_grad)?;
    let base = partition_indices(model, &HeadPartition::LastLayer)?;
    let mut out = vec![base.clone()];
    let mut size = 8;
    while size <= blocks.len() {
        let mut idx = base.clone();
        for r in &ranked[..size] {
            idx.extend(&block_idx[r.index]);
        }
        idx.sort_unstable();
        out.push(idx);
        size *= 2;
    }
    Ok(out)
}

/// Closed-form last-layer targeting: regress the clever covariate on the
/// output-layer inputs of the factual head and step along the fit.
pub fn tda_direct_ate(model: &DragonNet, x: &Array2<f64>, a: &[f64], y: &[f64]) -> Result<(AteEstimate, DragonNet)> {
    let g_raw = model.predict(x.view())?.g;
    let (g, _, _) = clipped(&g_raw);
    let feats = model.features(x.view())?;
    let n = a.len();
    let hidden: Vec<Array2<f64>> = (0..2)
        .map(|arm| {
            let head = &model.heads[arm];
            let c = head.forward_batch(feats.view(), None)?;
            Ok(c.layer_input(head.layers().len() - 1).to_owned())
        })
        .collect::<Result<_>>()?;
    let m = hidden[0].ncols() + 1;
    let mut phi = Array2::zeros((n, 2 * m));
    let mut h = Vec::with_capacity(n);
    for i in 0..n {
        let arm = a[i] as usize;
        let mut row = phi.row_mut(i);
        let off = arm * m;
        row.slice_mut(ndarray::s![off..off + m - 1]).assign(&hidden[arm].row(i));
        row[off + m - 1] = 1.0;
        h.push(super::estimators::clever_covariate(a[i], g[i])?);
    }
    let (q0, q1) = model.heads_std(feats.view())?;
    let y_std = model.standardize(y);
    let resid: Vec<f64> = (0..n).map(|i| y_std[i] - if a[i] == 1.0 { q1[i] } else { q0[i] }).collect();
    let last = |arm: usize| model.heads[arm].layer_spans()[1].all();
    let mut theta = Vec::with_capacity(2 * m);
    for arm in 0..2 {
        theta.extend_from_slice(&model.heads[arm].flat_params()[last(arm)]);
    }
    let fit = tda_direct(phi.view(), &h, &resid, &theta)?;
    let mut out = model.clone();
    for arm in 0..2 {
        let mut flat = out.heads[arm].flat_params();
        flat[last(arm)].copy_from_slice(&fit.theta[arm * m..(arm + 1) * m]);
        out.heads[arm].set_flat_params(&flat)?;
    }
    let p = out.predict(x.view())?;
    let nu = Nuisance::new(&g_raw, p.q0, p.q1)?;
    let psi = nu.plugin_psi();
    let mut est = AteEstimate::from_eif(AteMethod::TdaDirect, psi, nu.eif(a, y, psi)?);
    if fit.rank_deficient {
        est.notes.push("rank-deficient features; minimum-norm direction used".into());
    }
    est.notes.push(format!("epsilon = {:.6e}", fit.epsilon));
    Ok((est, out))
}

/// T-reg estimate: plug-in of the `ε`-perturbed heads `Q + ε H`.
pub fn treg_estimate(model: &DragonNet, epsilon_std: f64, x: &Array2<f64>, a: &[f64], y: &[f64]) -> Result<AteEstimate> {
    let p = model.predict(x.view())?;
    let nu = Nuisance::new(&p.g, p.q0, p.q1)?;
    let star = super::estimators::fluctuate(&nu, epsilon_std * model.y_scale);
    let psi = star.plugin_psi();
    let mut est = AteEstimate::from_eif(AteMethod::Treg, psi, star.eif(a, y, psi)?);
    est.notes.push(format!("epsilon = {epsilon_std:.6e}"));
    Ok(est)
}
