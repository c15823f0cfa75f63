use ndarray::{Array1, Array2};

use super::loss::{Batch, LossKind};
use super::net::DenseNet;
use crate::error::{Result, TdaError};

/// Split of a flat parameter vector into targeted and frozen indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamPartition {
    targ: Vec<usize>,
    fix: Vec<usize>,
}

impl ParamPartition {
    /// Builds a partition of `0..n_params`; `targ` is sorted and deduplicated.
    pub fn new(mut targ: Vec<usize>, n_params: usize) -> Result<Self> {
        targ.sort_unstable();
        targ.dedup();
        if targ.is_empty() {
            return Err(TdaError::Partition("targeting set is empty".into()));
        }
        if let Some(&bad) = targ.iter().find(|&&i| i >= n_params) {
            return Err(TdaError::Partition(format!(
                "index {bad} out of range for {n_params} parameters"
            )));
        }
        let mut fix = Vec::with_capacity(n_params - targ.len());
        let mut it = targ.iter().peekable();
        for i in 0..n_params {
            if it.peek() == Some(&&i) {
                it.next();
            } else {
                fix.push(i);
            }
        }
        Ok(ParamPartition { targ, fix })
    }

    /// Targets every parameter of the listed layers.
    pub fn layers(net: &DenseNet, layers: &[usize]) -> Result<Self> {
        let spans = net.layer_spans();
        let mut targ = Vec::new();
        for &l in layers {
            let span = spans
                .get(l)
                .ok_or_else(|| TdaError::Partition(format!("no layer {l}")))?;
            targ.extend(span.all());
        }
        ParamPartition::new(targ, net.n_params())
    }

    pub fn last_layer(net: &DenseNet) -> Self {
        ParamPartition::layers(net, &[net.layers().len() - 1]).expect("last layer exists")
    }

    pub fn targ(&self) -> &[usize] {
        &self.targ
    }

    pub fn fix(&self) -> &[usize] {
        &self.fix
    }

    pub fn n_params(&self) -> usize {
        self.targ.len() + self.fix.len()
    }

    pub fn gather(&self, flat: &[f64]) -> Vec<f64> {
        self.targ.iter().map(|&i| flat[i]).collect()
    }

    pub fn scatter(&self, flat: &mut [f64], theta_targ: &[f64]) {
        for (&i, &v) in self.targ.iter().zip(theta_targ) {
            flat[i] = v;
        }
    }
}

/// Per-sample loss gradients with respect to the targeted parameters.
#[derive(Clone, Debug)]
pub struct ScoreMatrix {
    pub values: Array2<f64>,
    pub sample_ids: Vec<usize>,
    pub param_indices: Vec<usize>,
}

impl ScoreMatrix {
    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.values.ncols()
    }

    pub fn column_means(&self) -> Array1<f64> {
        self.values
            .mean_axis(ndarray::Axis(0))
            .unwrap_or_else(|| Array1::zeros(self.n_params()))
    }
}

fn check_scalar(net: &DenseNet) -> Result<()> {
    if net.output_dim() != 1 {
        return Err(TdaError::Shape {
            expected: 1,
            actual: net.output_dim(),
        });
    }
    Ok(())
}

/// Row `i` is the gradient of sample `i`'s loss with respect to the
/// targeted parameters, from an individual backward pass in inference mode.
pub fn per_sample_scores(
    net: &DenseNet,
    partition: &ParamPartition,
    loss: LossKind,
    batch: &Batch,
) -> Result<ScoreMatrix> {
    check_scalar(net)?;
    if batch.is_empty() {
        return Err(TdaError::Domain("empty batch".into()));
    }
    if partition.n_params() != net.n_params() {
        return Err(TdaError::Partition(format!(
            "partition covers {} parameters, network has {}",
            partition.n_params(),
            net.n_params()
        )));
    }
    let spans = net.layer_spans();
    let first = partition.targ()[0];
    let stop_layer = spans
        .iter()
        .position(|s| s.all().contains(&first))
        .expect("index inside some layer");
    let cache = net.forward_batch(batch.inputs.view(), None)?;
    let out = cache.output();
    let k = partition.targ().len();
    let mut values = Array2::zeros((batch.len(), k));
    let mut grad = vec![0.0; net.n_params()];
    for i in 0..batch.len() {
        let d = loss.derivative(out[[i, 0]], batch.targets[i], batch.exposure[i]);
        let seed = Array1::from_elem(1, d);
        net.backward_row(&cache, i, seed.view(), stop_layer, &spans, &mut grad);
        let mut row = values.row_mut(i);
        for (dst, &j) in row.iter_mut().zip(partition.targ()) {
            let g = grad[j];
            if !g.is_finite() {
                return Err(TdaError::NonFinite {
                    sample: batch.ids[i],
                    what: format!("score for parameter {j}"),
                });
            }
            *dst = g;
        }
    }
    Ok(ScoreMatrix {
        values,
        sample_ids: batch.ids.clone(),
        param_indices: partition.targ().to_vec(),
    })
}

/// Mean loss over the batch and its gradient with respect to all
/// parameters, from one batched backward pass.
pub fn batch_loss_gradient(
    net: &DenseNet,
    loss: LossKind,
    batch: &Batch,
) -> Result<(f64, Vec<f64>)> {
    check_scalar(net)?;
    let cache = net.forward_batch(batch.inputs.view(), None)?;
    let (value, grad_out) = loss_and_seed(loss, cache.output(), batch);
    let (grad, _) = net.backward_batch(&cache, grad_out.view());
    Ok((value, grad))
}

/// Mean loss and the `d loss / d output` seed (already divided by batch size).
pub(crate) fn loss_and_seed(loss: LossKind, out: &Array2<f64>, batch: &Batch) -> (f64, Array2<f64>) {
    let n = batch.len() as f64;
    let mut total = 0.0;
    let mut seed = Array2::zeros((batch.len(), 1));
    for i in 0..batch.len() {
        let f = out[[i, 0]];
        total += loss.value(f, batch.targets[i], batch.exposure[i]);
        seed[[i, 0]] = loss.derivative(f, batch.targets[i], batch.exposure[i]) / n;
    }
    (total / n, seed)
}

pub fn mean_loss(net: &DenseNet, loss: LossKind, batch: &Batch) -> Result<f64> {
    check_scalar(net)?;
    let cache = net.forward_batch(batch.inputs.view(), None)?;
    Ok(loss_and_seed(loss, cache.output(), batch).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::net::{Activation, Dense};
    use crate::rng::seeded;
    use ndarray::array;

    #[test]
    fn linear_mse_score_by_hand() {
        let net = DenseNet::new(
            vec![Dense::new(array![[1.0]], array![0.0], Activation::Identity).unwrap()],
            0.0,
        )
        .unwrap();
        let part = ParamPartition::new(vec![0], 2).unwrap();
        let batch = Batch::new(array![[1.0]], vec![0.0]).unwrap();
        let s = per_sample_scores(&net, &part, LossKind::Mse, &batch).unwrap();
        assert_eq!(s.values, array![[2.0]]);
    }

    #[test]
    fn repeated_sample_gives_identical_rows() {
        let mut rng = seeded(2);
        let net = DenseNet::init(&[3, 5, 1], Activation::Elu, Activation::Identity, 0.0, &mut rng)
            .unwrap();
        let part = ParamPartition::new((0..net.n_params()).collect(), net.n_params()).unwrap();
        let x = ndarray::Array2::from_shape_fn((4, 3), |(_, j)| j as f64 * 0.3 - 0.2);
        let batch = Batch::new(x, vec![0.7; 4]).unwrap();
        let s = per_sample_scores(&net, &part, LossKind::Mse, &batch).unwrap();
        for i in 1..4 {
            assert_eq!(s.values.row(i), s.values.row(0));
        }
    }

    #[test]
    fn partition_validation() {
        assert!(ParamPartition::new(vec![], 4).is_err());
        assert!(ParamPartition::new(vec![4], 4).is_err());
        let p = ParamPartition::new(vec![3, 1, 1], 5).unwrap();
        assert_eq!(p.targ(), &[1, 3]);
        assert_eq!(p.fix(), &[0, 2, 4]);
    }
}
