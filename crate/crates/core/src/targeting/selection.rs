use ndarray::Array2;

use crate::error::{Result, TdaError};
use crate::nn::DenseNet;

/// Default relative improvement a tracked bound must show to count as
/// progress in [`plateau_select`].
pub const PLATEAU_REL_TOL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct RankedBlock {
    /// Position of the block in the caller's candidate list.
    pub index: usize,
    pub norm: f64,
}

/// Ranks candidate parameter blocks by the Euclidean norm of the
/// estimand gradient restricted to each block, largest first. Ties keep
/// the lower index first.
pub fn block_gradients(blocks: &[Vec<usize>], psi_grad: &[f64]) -> Result<Vec<RankedBlock>> {
    let mut ranked = Vec::with_capacity(blocks.len());
    for (index, block) in blocks.iter().enumerate() {
        let mut sq = 0.0;
        for &j in block {
            let g = psi_grad.get(j).ok_or_else(|| {
                TdaError::Partition(format!("block {index} references parameter {j} out of range"))
            })?;
            sq += g * g;
        }
        ranked.push(RankedBlock {
            index,
            norm: sq.sqrt(),
        });
    }
    ranked.sort_by(|a, b| b.norm.total_cmp(&a.norm).then(a.index.cmp(&b.index)));
    Ok(ranked)
}

/// Gradient with respect to all flat parameters of the mean of one
/// network output over the rows of `x`.
pub fn mean_output_gradient(net: &DenseNet, x: &Array2<f64>, output: usize) -> Result<Vec<f64>> {
    if output >= net.output_dim() {
        return Err(TdaError::Shape {
            expected: net.output_dim(),
            actual: output + 1,
        });
    }
    let n = x.nrows();
    if n == 0 {
        return Err(TdaError::Domain("mean output gradient needs at least one row".into()));
    }
    let cache = net.forward_batch(x.view(), None)?;
    let mut seed = Array2::zeros((n, net.output_dim()));
    seed.column_mut(output).fill(1.0 / n as f64);
    let (grad, _) = net.backward_batch(&cache, seed.view());
    Ok(grad)
}

/// Chooses among nested submodels, ordered by increasing size, from
/// their `(estimate, standard error)` pairs.
///
/// The tracked bound is the lower 95% limit when the estimates trend
/// upward and the upper one otherwise. The returned index is the last
/// submodel before the tracked bound first fails to move further in the
/// trend direction by more than `rel_tol` (relative).
pub fn plateau_select(reports: &[(f64, f64)], rel_tol: f64) -> usize {
    if reports.len() <= 1 {
        return 0;
    }
    let increasing = reports[reports.len() - 1].0 >= reports[0].0;
    let bound = |&(psi, se): &(f64, f64)| {
        if increasing {
            psi - 1.96 * se
        } else {
            -(psi + 1.96 * se)
        }
    };
    let mut prev = bound(&reports[0]);
    for (k, r) in reports.iter().enumerate().skip(1) {
        let b = bound(r);
        let needed = rel_tol * prev.abs().max(f64::MIN_POSITIVE);
        if !(b - prev > needed) {
            return k - 1;
        }
        prev = b;
    }
    reports.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense};
    use ndarray::{array, Array1};

    #[test]
    fn dead_block_ranks_last_and_ties_are_stable() {
        let grad = [0.0, 0.0, 3.0, 4.0, 3.0, 4.0];
        let blocks = vec![vec![0, 1], vec![2, 3], vec![4, 5]];
        let r = block_gradients(&blocks, &grad).unwrap();
        assert_eq!(r.iter().map(|b| b.index).collect::<Vec<_>>(), vec![1, 2, 0]);
        assert_eq!(r[0].norm, 5.0);
        assert_eq!(r[2].norm, 0.0);
        assert!(block_gradients(&[vec![9]], &grad).is_err());
    }

    #[test]
    fn linear_mean_prediction_gradient_is_mean_input() {
        let layer = Dense::new(array![[0.3, -0.7]], Array1::from(vec![0.1]), Activation::Identity).unwrap();
        let net = DenseNet::new(vec![layer], 0.0).unwrap();
        let x = array![[1.0, 2.0], [3.0, -4.0], [2.0, 5.0]];
        let g = mean_output_gradient(&net, &x, 0).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-14);
        assert!((g[1] - 1.0).abs() < 1e-14);
        assert!((g[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn plateau_examples() {
        // Lower bounds 0.0, 1.0, 1.5, 1.5 with an upward trend.
        let se = 1.0 / 1.96;
        let flat = [(1.0, se), (2.0, se), (2.5, se), (2.5, se)];
        assert_eq!(plateau_select(&flat, PLATEAU_REL_TOL), 2);
        let worse = [(1.0, 0.1), (0.5, 0.5), (0.2, 0.6)];
        assert_eq!(plateau_select(&worse, PLATEAU_REL_TOL), 0);
        let same = [(1.0, 0.1); 4];
        assert_eq!(plateau_select(&same, PLATEAU_REL_TOL), 0);
        assert_eq!(plateau_select(&[(3.0, 1.0)], PLATEAU_REL_TOL), 0);
        // Downward trend tracks the upper bound.
        let down = [(5.0, 0.5), (4.0, 0.5), (3.0, 0.5), (2.0, 0.5)];
        assert_eq!(plateau_select(&down, PLATEAU_REL_TOL), 3);
    }
}
