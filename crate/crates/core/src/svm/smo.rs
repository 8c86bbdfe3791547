//! Binary soft-margin SVM trained by sequential minimal optimization.
//!
//! Solves `min ½ αᵀQα − eᵀα` s.t. `0 ≤ α ≤ C`, `yᵀα = 0` with
//! `Q_ij = y_i y_j k(x_i, x_j)`, using second-order working-set selection
//! and a full precomputed Gram matrix.

use super::kernel::{kernel, KernelSpec};
use crate::error::{Error, Result};

/// Curvature floor for non-PSD kernels.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoParams {
    pub c: f64,
    /// Stop once the maximal KKT violation `m(α) − M(α)` drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SmoParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-3,
            max_iter: 10_000,
        }
    }
}

/// Full dual solution of a binary problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
    pub iterations: usize,
    /// `Σα − ½ αᵀQα` at the returned point.
    pub dual_objective: f64,
}

impl BinarySolution {
    /// `f(x) = Σ αᵢ yᵢ k(xᵢ, x) + b` over the training points.
    pub fn decision(&self, x: &[Vec<f64>], y: &[f64], spec: &KernelSpec, z: &[f64]) -> Result<f64> {
        let mut f = self.bias;
        for ((xi, yi), a) in x.iter().zip(y).zip(&self.alpha) {
            if *a > 0.0 {
                f += a * yi * kernel(xi, z, spec)?;
            }
        }
        Ok(f)
    }
}

pub fn gram(x: &[Vec<f64>], spec: &KernelSpec) -> Result<Vec<Vec<f64>>> {
    let n = x.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = kernel(&x[i], &x[j], spec)?;
            k[i][j] = v;
            k[j][i] = v;
        }
    }
    Ok(k)
}

pub fn train_binary(
    x: &[Vec<f64>],
    y: &[f64],
    spec: &KernelSpec,
    params: &SmoParams,
) -> Result<BinarySolution> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::dim(format!("{n} codes but {} labels", y.len())));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::Data("binary labels must be -1 or +1".into()));
    }
    if !y.contains(&1.0) || !y.contains(&-1.0) {
        return Err(Error::DegenerateData(
            "binary SVM needs at least one example of each sign".into(),
        ));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite code value".into()));
    }
    if !(params.c > 0.0) || !(params.tol > 0.0) {
        return Err(Error::config("SVM needs C > 0 and tol > 0"));
    }
    let c = params.c;
    let k = gram(x, spec)?;
    let q = |i: usize, j: usize| y[i] * y[j] * k[i][j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iter {
        // i: maximal violator in I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut gmax_idx = None;
        for t in 0..n {
            let cand = if y[t] > 0.0 {
                (!upper(alpha[t])).then_some(-grad[t])
            } else {
                (!lower(alpha[t])).then_some(grad[t])
            };
            if let Some(v) = cand {
                if v >= gmax {
                    gmax = v;
                    gmax_idx = Some(t);
                }
            }
        }
        // j: largest objective decrease in I_low
        let mut gmax2 = f64::NEG_INFINITY;
        let mut gmin_idx = None;
        let mut obj_min = f64::INFINITY;
        if let Some(i) = gmax_idx {
            for t in 0..n {
                let (ok, g, quad) = if y[t] > 0.0 {
                    (!lower(alpha[t]), grad[t], k[i][i] + k[t][t] - 2.0 * y[i] * q(i, t))
                } else {
                    (!upper(alpha[t]), -grad[t], k[i][i] + k[t][t] + 2.0 * y[i] * q(i, t))
                };
                if !ok {
                    continue;
                }
                gmax2 = gmax2.max(g);
                let diff = gmax + g;
                if diff > 0.0 {
                    let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= obj_min {
                        obj_min = obj;
                        gmin_idx = Some(t);
                    }
                }
            }
        }
        let (Some(i), Some(j)) = (gmax_idx, gmin_idx) else {
            converged = true;
            break;
        };
        if gmax + gmax2 < params.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = k[i][i] + k[j][j] + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = k[i][i] + k[j][j] - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(i, t) * di + q(j, t) * dj;
        }
    }

    let bias = -rho(&alpha, &grad, y, c);
    let dual_objective = alpha
        .iter()
        .zip(&grad)
        .map(|(a, g)| a - 0.5 * a * (g + 1.0))
        .sum();
    Ok(BinarySolution {
        alpha,
        bias,
        converged,
        iterations,
        dual_objective,
    })
}

fn rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum) = (0usize, 0.0);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}
