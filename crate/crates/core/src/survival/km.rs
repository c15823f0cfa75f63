use serde::{Deserialize, Serialize};

use super::grid::TimeGrid;
use crate::error::{Result, TdaError};

/// Kaplan–Meier curve and Greenwood variance on a time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KmEstimate {
    pub survival: Vec<f64>,
    pub variance: Vec<f64>,
    /// Set when some event time had every subject at risk failing
    /// (`n_j = d_j`); that term uses `d_j / (n_j·max(n_j − d_j, 1))`.
    pub degenerate: bool,
}

/// Product-limit estimator over the distinct event times, evaluated as a
/// right-continuous step function at each grid point.
pub fn km_estimate(time: &[f64], event: &[bool], grid: &TimeGrid) -> Result<KmEstimate> {
    if time.len() != event.len() {
        return Err(TdaError::Shape {
            expected: time.len(),
            actual: event.len(),
        });
    }
    if time.is_empty() {
        return Err(TdaError::Domain("Kaplan–Meier needs at least one subject".into()));
    }
    let mut order: Vec<usize> = (0..time.len()).collect();
    order.sort_by(|&a, &b| time[a].total_cmp(&time[b]));
    // (time, events, at risk) for each distinct event time.
    let mut steps: Vec<(f64, usize, usize)> = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let t = time[order[i]];
        let at_risk = order.len() - i;
        let mut d = 0;
        while i < order.len() && time[order[i]] == t {
            d += usize::from(event[order[i]]);
            i += 1;
        }
        if d > 0 {
            steps.push((t, d, at_risk));
        }
    }
    let mut survival = Vec::with_capacity(grid.len());
    let mut variance = Vec::with_capacity(grid.len());
    let (mut s, mut gw, mut next) = (1.0, 0.0, 0);
    let mut degenerate = false;
    for &t in grid.points() {
        while next < steps.len() && steps[next].0 <= t {
            let (_, d, n) = steps[next];
            let (d, n) = (d as f64, n as f64);
            s *= (n - d) / n;
            if n == d {
                degenerate = true;
            }
            gw += d / (n * (n - d).max(1.0));
            next += 1;
        }
        survival.push(s);
        variance.push(s * s * gw);
    }
    Ok(KmEstimate {
        survival,
        variance,
        degenerate,
    })
}

impl KmEstimate {
    /// Pointwise Wald interval `S ± 1.96·√var`.
    pub fn ci(&self, z: f64) -> (Vec<f64>, Vec<f64>) {
        self.survival
            .iter()
            .zip(&self.variance)
            .map(|(s, v)| (s - z * v.sqrt(), s + z * v.sqrt()))
            .unzip()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(points: &[f64]) -> TimeGrid {
        TimeGrid::new(points.to_vec(), 1).unwrap()
    }

    #[test]
    fn all_censored_is_flat() {
        let km = km_estimate(&[1.0, 2.0, 3.0], &[false; 3], &grid(&[0.5, 1.5, 5.0])).unwrap();
        assert_eq!(km.survival, vec![1.0; 3]);
        assert_eq!(km.variance, vec![0.0; 3]);
    }

    #[test]
    fn three_events_no_censoring() {
        let km = km_estimate(&[1.0, 2.0, 3.0], &[true; 3], &grid(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(km.survival, vec![2.0 / 3.0, 1.0 / 3.0, 0.0]);
        assert!(km.degenerate);
    }

    #[test]
    fn censoring_hand_example() {
        let km = km_estimate(
            &[1.0, 1.5, 2.0, 3.0],
            &[true, false, true, false],
            &grid(&[1.0, 2.0]),
        )
        .unwrap();
        assert_eq!(km.survival, vec![3.0 / 4.0, 3.0 / 8.0]);
        // Greenwood: 1/(4·3) then + 1/(2·1).
        let expected = [0.5625 * (1.0 / 12.0), (9.0 / 64.0) * (1.0 / 12.0 + 0.5)];
        for (v, e) in km.variance.iter().zip(expected) {
            assert!((v - e).abs() < 1e-15);
        }
        assert!(!km.degenerate);
    }

    #[test]
    fn greenwood_zero_before_first_event() {
        let km = km_estimate(&[2.0, 3.0], &[true, true], &grid(&[1.0, 2.5])).unwrap();
        assert_eq!(km.survival[0], 1.0);
        assert_eq!(km.variance[0], 0.0);
    }

    #[test]
    fn no_censoring_equals_empirical_survival() {
        let times = [0.4, 1.1, 1.1, 2.7, 3.0, 5.5, 0.9];
        let g = grid(&[0.5, 1.0, 1.1, 2.0, 3.0, 6.0]);
        let km = km_estimate(&times, &[true; 7], &g).unwrap();
        for (t, s) in g.points().iter().zip(&km.survival) {
            let emp = times.iter().filter(|&&x| x > *t).count() as f64 / 7.0;
            assert!((s - emp).abs() < 1e-15, "t={t}: {s} vs {emp}");
        }
    }
}
