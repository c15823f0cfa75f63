use serde::{Deserialize, Serialize};

use crate::error::{Result, TdaError};

/// Evaluation times plus the refinement used for hazard integration.
///
/// Cell `j` is the interval `(t_{j-1}, t_j]` with `t_{-1} = 0`. Each cell
/// is split into `substeps` equal pieces for trapezoidal integration, so
/// the integration nodes are `0` followed by `substeps` nodes per cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    points: Vec<f64>,
    substeps: usize,
}

/// Number of evaluation times on the standard grid.
pub const GRID_POINTS: usize = 50;
/// Right end of the standard grid.
pub const GRID_HORIZON: f64 = 16.0;
/// Integration substeps per cell on the standard grid (200 in total).
pub const GRID_SUBSTEPS: usize = 4;

impl TimeGrid {
    pub fn new(points: Vec<f64>, substeps: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(TdaError::Config("time grid needs at least one point".into()));
        }
        if substeps == 0 {
            return Err(TdaError::Config("time grid needs at least one substep".into()));
        }
        if !(points[0] > 0.0) || points.iter().any(|t| !t.is_finite()) {
            return Err(TdaError::Config("grid points must be finite and start above 0".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(TdaError::Config("grid points must be strictly increasing".into()));
        }
        Ok(TimeGrid { points, substeps })
    }

    /// `k` equally spaced points `horizon·j/k`, `j = 1..k`.
    pub fn uniform(k: usize, horizon: f64, substeps: usize) -> Result<Self> {
        if k == 0 || !(horizon > 0.0) {
            return Err(TdaError::Config(format!("invalid uniform grid ({k} points to {horizon})")));
        }
        TimeGrid::new((1..=k).map(|j| horizon * j as f64 / k as f64).collect(), substeps)
    }

    /// 50 points on (0, 16] with 4 substeps per cell.
    pub fn standard() -> Self {
        TimeGrid::uniform(GRID_POINTS, GRID_HORIZON, GRID_SUBSTEPS).expect("valid constants")
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn horizon(&self) -> f64 {
        *self.points.last().expect("nonempty grid")
    }

    /// Left end of cell `j`.
    pub fn cell_start(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.points[j - 1]
        }
    }

    pub fn cell_mid(&self, j: usize) -> f64 {
        0.5 * (self.cell_start(j) + self.points[j])
    }

    /// Integration nodes: `0`, then `substeps` equally spaced nodes ending
    /// at each grid point.
    pub fn nodes(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_nodes());
        out.push(0.0);
        for j in 0..self.len() {
            let (a, b) = (self.cell_start(j), self.points[j]);
            for s in 1..=self.substeps {
                out.push(if s == self.substeps {
                    b
                } else {
                    a + (b - a) * s as f64 / self.substeps as f64
                });
            }
        }
        out
    }

    pub fn n_nodes(&self) -> usize {
        self.len() * self.substeps + 1
    }

    /// Position of grid point `j` within [`TimeGrid::nodes`].
    pub fn node_of_point(&self, j: usize) -> usize {
        (j + 1) * self.substeps
    }

    /// Time-feature scaling applied to network inputs.
    pub fn time_feature(&self, t: f64) -> f64 {
        t / self.horizon()
    }

    /// Cumulative trapezoidal integrals of `values` (given at the nodes),
    /// read off at the grid points.
    pub fn integrate_to_points(&self, values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(values.len(), self.n_nodes());
        let nodes = self.nodes();
        let mut out = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        for m in 1..nodes.len() {
            acc += 0.5 * (values[m] + values[m - 1]) * (nodes[m] - nodes[m - 1]);
            if m % self.substeps == 0 {
                out.push(acc);
            }
        }
        out
    }
}
