use ndarray::ArrayView1;

use super::project::Projector;
use super::report::{IterationRecord, StopReason, TargetingReport};
use super::{mean_sd, StepRule, TargetingConfig};
use crate::error::{Result, TdaError};
use crate::nn::{batch_loss_gradient, mean_loss, per_sample_scores, Batch, DenseNet, LossKind, ParamPartition, ScoreMatrix};

/// Absolute slack allowed on the training loss when accepting a step,
/// absorbing floating-point noise on flat stretches.
pub const LOSS_SLACK: f64 = 1e-12;

/// A model restricted to its targeted parameters, evaluated on the
/// targeting sample.
pub trait Submodel {
    fn n_samples(&self) -> usize;
    fn theta(&self) -> Vec<f64>;
    fn set_theta(&mut self, theta: &[f64]) -> Result<()>;
    /// Per-sample loss gradients with respect to the targeted parameters.
    fn scores(&self) -> Result<ScoreMatrix>;
    /// Mean per-sample loss over the targeting sample.
    fn mean_loss(&self) -> Result<f64>;
    /// Gradient of [`Submodel::mean_loss`] with respect to the targeted
    /// parameters.
    fn mean_score(&self) -> Result<Vec<f64>> {
        Ok(self.scores()?.column_means().to_vec())
    }
}

/// Produces the raw influence vectors (one per target parameter) at the
/// model's current weights.
pub trait InfluenceSource<M: ?Sized> {
    fn influence(&mut self, model: &M) -> Result<Vec<Vec<f64>>>;
}

impl<M: ?Sized, F> InfluenceSource<M> for F
where
    F: FnMut(&M) -> Result<Vec<Vec<f64>>>,
{
    fn influence(&mut self, model: &M) -> Result<Vec<Vec<f64>>> {
        self(model)
    }
}

/// `sd / (√n · ln n)`.
pub fn stopping_threshold(sd_proj: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(TdaError::Domain(format!("stopping threshold needs n >= 2, got {n}")));
    }
    if !(sd_proj >= 0.0) {
        return Err(TdaError::Domain(format!("standard deviation {sd_proj} is negative")));
    }
    let n = n as f64;
    Ok(sd_proj / (n.sqrt() * n.ln()))
}

/// `Σ_k w_k α_k` with `w_k = d_k / ‖d‖₂`. Returns `None` when every
/// `d_k` is zero.
pub fn combine_directions(alphas: &[Vec<f64>], d: &[f64]) -> Result<Option<Vec<f64>>> {
    if alphas.len() != d.len() || alphas.is_empty() {
        return Err(TdaError::Shape {
            expected: d.len(),
            actual: alphas.len(),
        });
    }
    let k = alphas[0].len();
    if alphas.iter().any(|a| a.len() != k) {
        return Err(TdaError::Domain("direction lengths differ".into()));
    }
    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(None);
    }
    let mut out = vec![0.0; k];
    for (a, dk) in alphas.iter().zip(d) {
        let w = dk / norm;
        out.iter_mut().zip(a).for_each(|(o, ai)| *o += w * ai);
    }
    Ok(Some(out))
}

/// Loss and targeting criterion at a candidate parameter value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub loss: f64,
    /// Norm of the per-parameter `P_n[D*_proj]` vector at the candidate.
    pub criterion: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StepOutcome {
    Accepted {
        theta: Vec<f64>,
        gamma: f64,
        candidate: Candidate,
    },
    NoLossImprovement,
}

/// Moves `theta` against `sign(mean_dproj) · alpha`.
///
/// With a fixed rule the step is taken unconditionally. The line search
/// evaluates every grid step, discards those that raise the loss or the
/// criterion above their current values, and keeps the lowest-loss one.
pub fn targeting_step<F>(
    theta: &[f64],
    alpha: &[f64],
    mean_dproj: f64,
    current: Candidate,
    rule: StepRule,
    mut evaluate: F,
) -> Result<StepOutcome>
where
    F: FnMut(&[f64]) -> Result<Candidate>,
{
    if theta.len() != alpha.len() {
        return Err(TdaError::Shape {
            expected: theta.len(),
            actual: alpha.len(),
        });
    }
    if !mean_dproj.is_finite() {
        return Err(TdaError::Domain("P_n[D*_proj] is not finite".into()));
    }
    let sign = if mean_dproj > 0.0 {
        1.0
    } else if mean_dproj < 0.0 {
        -1.0
    } else {
        0.0
    };
    let moved = |gamma: f64| -> Vec<f64> {
        theta
            .iter()
            .zip(alpha)
            .map(|(t, a)| t - gamma * sign * a)
            .collect()
    };
    match rule {
        StepRule::Fixed { gamma } => {
            let next = moved(gamma);
            let candidate = evaluate(&next)?;
            Ok(StepOutcome::Accepted {
                theta: next,
                gamma,
                candidate,
            })
        }
        StepRule::LineSearch { gamma0, halvings } => {
            let mut best: Option<(f64, Candidate)> = None;
            for j in 0..=halvings {
                let gamma = gamma0 * 0.5f64.powi(j as i32);
                let cand = evaluate(&moved(gamma))?;
                let ok = cand.loss.is_finite()
                    && cand.loss <= current.loss + LOSS_SLACK
                    && cand.criterion <= current.criterion;
                if ok && best.is_none_or(|(_, b)| cand.loss < b.loss) {
                    best = Some((gamma, cand));
                }
            }
            Ok(match best {
                Some((gamma, candidate)) => StepOutcome::Accepted {
                    theta: moved(gamma),
                    gamma,
                    candidate,
                },
                None => StepOutcome::NoLossImprovement,
            })
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖(α_kᵀ g)_k‖₂` where `g` is the mean score.
fn criterion(alphas: &[Vec<f64>], mean_score: &[f64]) -> f64 {
    let g = ArrayView1::from(mean_score);
    alphas
        .iter()
        .map(|a| ArrayView1::from(a.as_slice()).dot(&g).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn evaluate_at<M: Submodel + ?Sized>(model: &mut M, theta: &[f64], alphas: &[Vec<f64>]) -> Result<Candidate> {
    model.set_theta(theta)?;
    let loss = model.mean_loss()?;
    let g = model.mean_score()?;
    Ok(Candidate {
        loss,
        criterion: criterion(alphas, &g),
    })
}

fn run<M, I>(
    model: &mut M,
    influence: &mut I,
    cfg: &TargetingConfig,
    expect_single: bool,
) -> TargetingReport
where
    M: Submodel + ?Sized,
    I: InfluenceSource<M> + ?Sized,
{
    let mut report = TargetingReport::new(*cfg);
    if let Err(e) = cfg.validate() {
        report.reason = StopReason::Failed;
        report.error = Some(e.to_string());
        return report;
    }
    if let Err(e) = iterate(model, influence, cfg, expect_single, &mut report) {
        report.reason = StopReason::Failed;
        report.converged = false;
        report.error = Some(e.to_string());
    }
    report
}

fn iterate<M, I>(
    model: &mut M,
    influence: &mut I,
    cfg: &TargetingConfig,
    expect_single: bool,
    report: &mut TargetingReport,
) -> Result<()>
where
    M: Submodel + ?Sized,
    I: InfluenceSource<M> + ?Sized,
{
    let n = model.n_samples();
    for t in 0..=cfg.max_iters {
        let ds = influence.influence(model)?;
        if ds.is_empty() || (expect_single && ds.len() != 1) {
            return Err(TdaError::Domain(format!(
                "influence source returned {} vectors",
                ds.len()
            )));
        }
        let scores = model.scores()?;
        let projector = Projector::new(&scores, cfg)?;
        let mut alphas = Vec::with_capacity(ds.len());
        let mut d = Vec::with_capacity(ds.len());
        let mut eta = Vec::with_capacity(ds.len());
        let mut sds = Vec::with_capacity(ds.len());
        let mut resid = Vec::with_capacity(ds.len());
        for dk in &ds {
            if dk.iter().any(|v| !v.is_finite()) {
                return Err(TdaError::NonFinite {
                    sample: dk.iter().position(|v| !v.is_finite()).unwrap_or(0),
                    what: "influence value".into(),
                });
            }
            let p = projector.project(dk)?;
            let (mean, sd) = mean_sd(&p.projected);
            d.push(mean);
            eta.push(stopping_threshold(sd, n)?);
            sds.push(sd);
            resid.push(p.residual_norm);
            alphas.push(p.alpha);
        }
        let loss = model.mean_loss()?;
        let direction = combine_directions(&alphas, &d)?;
        report.iterations.push(IterationRecord {
            iter: t,
            mean_dproj: d.clone(),
            sd_dproj: sds,
            eta_n: eta.clone(),
            gamma: None,
            alpha_norm: direction.as_deref().map_or(0.0, norm),
            projection_residual_norm: resid,
            train_loss: loss,
        });
        if d.iter().zip(&eta).all(|(dk, ek)| dk.abs() <= *ek) {
            report.converged = true;
            report.reason = StopReason::ToleranceMet;
            return Ok(());
        }
        if t >= cfg.max_iters {
            report.reason = StopReason::MaxIters;
            return Ok(());
        }
        let direction = direction.expect("some d_k is nonzero");
        let theta = model.theta();
        let current = Candidate {
            loss,
            criterion: norm(&d),
        };
        // The combined direction already carries the sign through w_k, so
        // the step is taken with a positive multiplier.
        let outcome = targeting_step(&theta, &direction, 1.0, current, cfg.step_rule, |cand| {
            evaluate_at(model, cand, &alphas)
        })?;
        match outcome {
            StepOutcome::Accepted { theta: next, gamma, .. } => {
                model.set_theta(&next)?;
                report.iterations.last_mut().expect("pushed").gamma = Some(gamma);
            }
            StepOutcome::NoLossImprovement => {
                model.set_theta(&theta)?;
                report.reason = StopReason::NoLossImprovement;
                return Ok(());
            }
        }
    }
    Ok(())
}

/// Single-parameter targeting loop. Errors end the run and are recorded
/// in the report together with the partial trace.
pub fn tda_run<M, I>(model: &mut M, influence: &mut I, cfg: &TargetingConfig) -> TargetingReport
where
    M: Submodel + ?Sized,
    I: InfluenceSource<M> + ?Sized,
{
    run(model, influence, cfg, true)
}

/// Multi-parameter targeting along the combined direction; converged
/// once every parameter meets its own tolerance.
pub fn tda_run_multi<M, I>(model: &mut M, influence: &mut I, cfg: &TargetingConfig) -> TargetingReport
where
    M: Submodel + ?Sized,
    I: InfluenceSource<M> + ?Sized,
{
    run(model, influence, cfg, false)
}

/// A `DenseNet` targeted on a fixed batch through a parameter partition.
pub struct NetSubmodel {
    pub net: DenseNet,
    pub partition: ParamPartition,
    pub loss: LossKind,
    pub batch: Batch,
}

impl NetSubmodel {
    pub fn new(net: DenseNet, partition: ParamPartition, loss: LossKind, batch: Batch) -> Result<Self> {
        if partition.n_params() != net.n_params() {
            return Err(TdaError::Partition("partition does not match network".into()));
        }
        Ok(NetSubmodel {
            net,
            partition,
            loss,
            batch,
        })
    }
}

impl Submodel for NetSubmodel {
    fn n_samples(&self) -> usize {
        self.batch.len()
    }

    fn theta(&self) -> Vec<f64> {
        self.partition.gather(&self.net.flat_params())
    }

    fn set_theta(&mut self, theta: &[f64]) -> Result<()> {
        let mut flat = self.net.flat_params();
        self.partition.scatter(&mut flat, theta);
        self.net.set_flat_params(&flat)
    }

    fn scores(&self) -> Result<ScoreMatrix> {
        per_sample_scores(&self.net, &self.partition, self.loss, &self.batch)
    }

    fn mean_loss(&self) -> Result<f64> {
        mean_loss(&self.net, self.loss, &self.batch)
    }

    fn mean_score(&self) -> Result<Vec<f64>> {
        let (_, g) = batch_loss_gradient(&self.net, self.loss, &self.batch)?;
        Ok(self.partition.gather(&g))
    }
}
