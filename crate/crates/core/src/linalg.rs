//! Regularised least-squares solvers for the projection step.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Result, TdaError};

/// In-place Cholesky factorisation `A = L Lᵀ`; the lower triangle of `a`
/// is overwritten with `L`.
fn cholesky_in_place(a: &mut Array2<f64>) -> Result<()> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for j in 0..n {
        let mut d = a[[j, j]];
        for p in 0..j {
            d -= a[[j, p]] * a[[j, p]];
        }
        if !(d > 1e-13 * scale) {
            return Err(TdaError::Singular(format!(
                "pivot {j} is {d:.3e} (matrix scale {scale:.3e})"
            )));
        }
        let d = d.sqrt();
        a[[j, j]] = d;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for p in 0..j {
                s -= a[[i, p]] * a[[j, p]];
            }
            a[[i, j]] = s / d;
        }
    }
    Ok(())
}

fn cholesky_solve(l: &Array2<f64>, b: &[f64]) -> Vec<f64> {
    let n = l.nrows();
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for p in 0..i {
            s -= l[[i, p]] * y[p];
        }
        y[i] = s / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for p in i + 1..n {
            s -= l[[p, i]] * y[p];
        }
        y[i] = s / l[[i, i]];
    }
    y
}

/// Solves the symmetric positive-definite system `a x = b` with one step of
/// iterative refinement.
pub fn spd_solve(a: &Array2<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let mut l = a.clone();
    cholesky_in_place(&mut l)?;
    let mut x = cholesky_solve(&l, b);
    let ax = a.dot(&ArrayView1::from(&x));
    let resid: Vec<f64> = b.iter().zip(ax.iter()).map(|(bi, ai)| bi - ai).collect();
    let dx = cholesky_solve(&l, &resid);
    x.iter_mut().zip(dx).for_each(|(xi, d)| *xi += d);
    Ok(x)
}

/// Factorised ridge system for a fixed design, reusable across responses.
///
/// Solves `(GᵀG + λI) α = Gᵀr`. When `G` has more columns than rows the
/// equivalent dual system `α = Gᵀ (GGᵀ + λI)⁻¹ r` is factorised instead,
/// which needs `λ > 0`.
#[derive(Clone, Debug)]
pub struct RidgeFactor {
    design: Array2<f64>,
    system: Array2<f64>,
    chol: Array2<f64>,
    dual: bool,
}

impl RidgeFactor {
    pub fn new(g: ArrayView2<'_, f64>, lambda: f64) -> Result<Self> {
        let (n, k) = g.dim();
        if n == 0 || k == 0 {
            return Err(TdaError::Domain("empty design".into()));
        }
        if !(lambda >= 0.0) {
            return Err(TdaError::Domain(format!("ridge penalty {lambda} must be nonnegative")));
        }
        let dual = k > n;
        let mut system = if dual {
            if lambda == 0.0 {
                return Err(TdaError::Singular(format!(
                    "{k} columns exceed {n} rows and the penalty is zero"
                )));
            }
            g.dot(&g.t())
        } else {
            g.t().dot(&g)
        };
        for i in 0..system.nrows() {
            system[[i, i]] += lambda;
        }
        let mut chol = system.clone();
        cholesky_in_place(&mut chol)?;
        Ok(RidgeFactor {
            design: g.to_owned(),
            system,
            chol,
            dual,
        })
    }

    fn refined(&self, b: &[f64]) -> Vec<f64> {
        let mut x = cholesky_solve(&self.chol, b);
        let ax = self.system.dot(&ArrayView1::from(&x));
        let resid: Vec<f64> = b.iter().zip(ax.iter()).map(|(bi, ai)| bi - ai).collect();
        let dx = cholesky_solve(&self.chol, &resid);
        x.iter_mut().zip(dx).for_each(|(xi, d)| *xi += d);
        x
    }

    pub fn solve(&self, r: &[f64]) -> Result<Vec<f64>> {
        let n = self.design.nrows();
        if r.len() != n {
            return Err(TdaError::Shape {
                expected: n,
                actual: r.len(),
            });
        }
        if self.dual {
            let c = self.refined(r);
            Ok(self.design.t().dot(&Array1::from(c)).to_vec())
        } else {
            let b = self.design.t().dot(&ArrayView1::from(r));
            Ok(self.refined(b.as_slice().expect("contiguous")))
        }
    }
}

/// Minimiser of `‖r − Gα‖² + λ‖α‖²`, i.e. the solution of
/// `(GᵀG + λI) α = Gᵀr`, by Cholesky factorisation.
pub fn ridge_solve(g: ArrayView2<'_, f64>, r: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if r.len() != g.nrows() {
        return Err(TdaError::Shape {
            expected: g.nrows(),
            actual: r.len(),
        });
    }
    RidgeFactor::new(g, lambda)?.solve(r)
}

/// Quadratic summary of a least-squares problem in standardised coordinates.
///
/// Columns of the design are scaled to unit empirical second moment
/// `mean_i G_ij² = 1`; all-zero columns are dropped from the fit and get a
/// zero coefficient.
#[derive(Clone, Debug)]
pub struct LassoGram {
    n: usize,
    scale: Vec<f64>,
    gram: Array2<f64>,
}

#[derive(Clone, Debug)]
pub struct LassoFit {
    pub alpha: Vec<f64>,
    pub sweeps: usize,
    /// Objective value after each sweep, in standardised coordinates.
    pub objective_trace: Vec<f64>,
}

pub const LASSO_TOL: f64 = 1e-12;
pub const LASSO_MAX_SWEEPS: usize = 100_000;

impl LassoGram {
    pub fn new(g: ArrayView2<'_, f64>) -> Result<Self> {
        let (n, k) = g.dim();
        if n == 0 || k == 0 {
            return Err(TdaError::Domain("empty design".into()));
        }
        let scale: Vec<f64> = g
            .columns()
            .into_iter()
            .map(|c| (c.dot(&c) / n as f64).sqrt())
            .collect();
        let mut gram = g.t().dot(&g) / n as f64;
        for i in 0..k {
            for j in 0..k {
                let s = scale[i] * scale[j];
                gram[[i, j]] = if s > 0.0 { gram[[i, j]] / s } else { 0.0 };
            }
        }
        Ok(LassoGram { n, scale, gram })
    }

    /// `(1/n) G̃ᵀ r` for a response vector.
    pub fn correlations(&self, g: ArrayView2<'_, f64>, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.n {
            return Err(TdaError::Shape {
                expected: self.n,
                actual: r.len(),
            });
        }
        let c = g.t().dot(&ArrayView1::from(r));
        Ok(c.iter()
            .zip(&self.scale)
            .map(|(ci, s)| if *s > 0.0 { ci / (s * self.n as f64) } else { 0.0 })
            .collect())
    }

    /// Coordinate descent on `(1/n)‖r − G̃β‖² + λ‖β‖₁` with soft
    /// thresholding; returns `α = β / scale` on the original columns.
    pub fn solve(&self, corr: &[f64], rr: f64, lambda: f64) -> Result<LassoFit> {
        let k = self.scale.len();
        let mut beta = vec![0.0; k];
        let mut trace = Vec::new();
        let objective = |beta: &[f64]| {
            let mut q = rr;
            for i in 0..k {
                q -= 2.0 * beta[i] * corr[i];
                for j in 0..k {
                    q += beta[i] * self.gram[[i, j]] * beta[j];
                }
            }
            q + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
        };
        for sweep in 1..=LASSO_MAX_SWEEPS {
            let mut max_delta = 0.0f64;
            let mut max_beta = 0.0f64;
            for j in 0..k {
                if self.scale[j] == 0.0 {
                    continue;
                }
                let mut rho = corr[j];
                for l in 0..k {
                    if l != j {
                        rho -= self.gram[[j, l]] * beta[l];
                    }
                }
                let new = soft_threshold(rho, lambda / 2.0) / self.gram[[j, j]];
                max_delta = max_delta.max((new - beta[j]).abs());
                beta[j] = new;
                max_beta = max_beta.max(new.abs());
            }
            trace.push(objective(&beta));
            if max_delta <= LASSO_TOL * max_beta.max(1.0) {
                let alpha = beta
                    .iter()
                    .zip(&self.scale)
                    .map(|(b, s)| if *s > 0.0 { b / s } else { 0.0 })
                    .collect();
                return Ok(LassoFit {
                    alpha,
                    sweeps: sweep,
                    objective_trace: trace,
                });
            }
        }
        let resid = (objective(&beta) - lambda * beta.iter().map(|b| b.abs()).sum::<f64>())
            .max(0.0)
            .sqrt();
        Err(TdaError::Convergence {
            sweeps: LASSO_MAX_SWEEPS,
            residual_norm: resid * (self.n as f64).sqrt(),
        })
    }
}

pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Minimiser of `(1/n)‖r − Gα‖² + λ‖α‖₁` after internal column
/// standardisation (the penalty acts on the standardised coefficients).
pub fn lasso_solve(g: ArrayView2<'_, f64>, r: &[f64], lambda: f64) -> Result<Vec<f64>> {
    Ok(lasso_fit(g, r, lambda)?.alpha)
}

pub fn lasso_fit(g: ArrayView2<'_, f64>, r: &[f64], lambda: f64) -> Result<LassoFit> {
    if !(lambda > 0.0) {
        return Err(TdaError::Domain(format!("lasso penalty {lambda} must be positive")));
    }
    let gram = LassoGram::new(g)?;
    let corr = gram.correlations(g, r)?;
    let rr = r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64;
    gram.solve(&corr, rr, lambda)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and the matrix whose columns are eigenvectors.
pub fn symmetric_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum();
        let diag: f64 = (0..n).map(|i| m[[i, i]] * m[[i, i]]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[[i, i]]).collect(), v)
}

/// Ordinary least squares of `y` on the columns of `x`. Falls back to the
/// minimum-norm solution when `xᵀx` is numerically singular; the flag
/// reports whether the fallback was used.
pub fn least_squares(x: ArrayView2<'_, f64>, y: &[f64]) -> Result<(Vec<f64>, bool)> {
    if y.len() != x.nrows() {
        return Err(TdaError::Shape {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    let a = x.t().dot(&x);
    let b = x.t().dot(&ArrayView1::from(y));
    let b = b.as_slice().expect("contiguous");
    match spd_solve(&a, b) {
        Ok(sol) => Ok((sol, false)),
        Err(_) => {
            let (vals, vecs) = symmetric_eigen(&a);
            let top = vals.iter().cloned().fold(0.0, f64::max);
            let cut = top * 1e-12 * a.nrows() as f64;
            let mut sol = vec![0.0; a.nrows()];
            for (j, &lam) in vals.iter().enumerate() {
                if lam > cut {
                    let v = vecs.column(j);
                    let coef = v.dot(&ArrayView1::from(b)) / lam;
                    sol.iter_mut().zip(v.iter()).for_each(|(s, vi)| *s += coef * vi);
                }
            }
            Ok((sol, true))
        }
    }
}
