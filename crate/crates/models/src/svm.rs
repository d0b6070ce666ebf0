//! C-support vector classification with an RBF kernel.
//!
//! Binary problems are solved by SMO with second-order working-set
//! selection; multiclass prediction is one-vs-one voting.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmOptions {
    pub c: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub tolerance: f64,
    /// `None` picks `1 / (d * var(X))`.
    pub gamma: Option<f64>,
    pub min_iterations_cap: usize,
}

impl Default for SvmOptions {
    fn default() -> Self {
        Self {
            c: 1.0,
            tolerance: 1e-3,
            gamma: None,
            min_iterations_cap: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub positive: usize,
    pub negative: usize,
    /// Indices into `SvmModel::support` with their `alpha * y` coefficients.
    pub coef: Vec<(usize, f64)>,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub gamma: f64,
    pub support: Array2<f64>,
    pub machines: Vec<BinarySvm>,
    pub n_classes: usize,
}

fn rbf(a: ArrayView1<f64>, b: ArrayView1<f64>, gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// Solve the dual on the rows `idx` of a precomputed kernel matrix.
/// Returns (alpha, rho, iterations, converged).
fn smo(kernel: &Array2<f64>, idx: &[usize], y: &[f64], opts: &SvmOptions) -> (Vec<f64>, f64, usize, bool) {
    let l = idx.len();
    let c = opts.c;
    let eps = opts.tolerance;
    let tau = 1e-12;
    let k = |i: usize, j: usize| kernel[[idx[i], idx[j]]];
    let mut alpha = vec![0.0; l];
    let mut grad = vec![-1.0; l];
    let max_iter = opts.min_iterations_cap.max(100 * l);
    let mut iter = 0;
    let mut converged = false;

    while iter < max_iter {
        // first index: maximal violating
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..l {
            let up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
            if up && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i_sel = t;
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j_sel = usize::MAX;
        let mut obj_min = f64::INFINITY;
        for t in 0..l {
            let low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);
            if !low {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            if i_sel != usize::MAX && v < gmax {
                let b = gmax - v;
                let mut a = k(i_sel, i_sel) + k(t, t) - 2.0 * k(i_sel, t);
                if a <= 0.0 {
                    a = tau;
                }
                let obj = -(b * b) / a;
                if obj <= obj_min {
                    obj_min = obj;
                    j_sel = t;
                }
            }
        }
        if gmax - gmin < eps || i_sel == usize::MAX || j_sel == usize::MAX {
            converged = true;
            break;
        }
        iter += 1;
        let (i, j) = (i_sel, j_sel);
        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        let kij = k(i, j);
        if y[i] != y[j] {
            let mut quad = k(i, i) + k(j, j) - 2.0 * kij;
            quad = quad.max(tau);
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
            let mut quad = k(i, i) + k(j, j) - 2.0 * kij;
            quad = quad.max(tau);
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
        let (dai, daj) = (alpha[i] - old_ai, alpha[j] - old_aj);
        for t in 0..l {
            // Q_ti = y_t y_i K_ti
            grad[t] += y[t] * (y[i] * k(t, i) * dai + y[j] * k(t, j) * daj);
        }
    }

    // offset from free vectors, else the midpoint of the feasible interval
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut sum_free = 0.0;
    let mut n_free = 0;
    for t in 0..l {
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
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { 0.5 * (ub + lb) };
    (alpha, rho, iter, converged)
}

impl SvmModel {
    /// Train on already-scaled features.
    pub fn fit(data: &Dataset, opts: &SvmOptions) -> Self {
        let x = data.x.view();
        let n = data.len();
        let gamma = opts.gamma.unwrap_or_else(|| {
            let count = x.len() as f64;
            let mean = x.sum() / count;
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
            if var > 0.0 {
                1.0 / (data.width() as f64 * var)
            } else {
                1.0
            }
        });
        let mut kernel = Array2::zeros((n, n));
        for i in 0..n {
            kernel[[i, i]] = 1.0;
            for j in 0..i {
                let v = rbf(x.row(i), x.row(j), gamma);
                kernel[[i, j]] = v;
                kernel[[j, i]] = v;
            }
        }

        let mut support_rows: Vec<usize> = Vec::new();
        let mut support_slot = vec![usize::MAX; n];
        let mut machines = Vec::new();
        for a in 0..data.n_classes {
            for b in (a + 1)..data.n_classes {
                let idx: Vec<usize> = (0..n).filter(|&r| data.y[r] == a || data.y[r] == b).collect();
                if !idx.iter().any(|&r| data.y[r] == a) || !idx.iter().any(|&r| data.y[r] == b) {
                    continue;
                }
                let yy: Vec<f64> = idx.iter().map(|&r| if data.y[r] == a { 1.0 } else { -1.0 }).collect();
                let (alpha, rho, iterations, converged) = smo(&kernel, &idx, &yy, opts);
                let mut coef = Vec::new();
                for (t, &r) in idx.iter().enumerate() {
                    if alpha[t] > 0.0 {
                        if support_slot[r] == usize::MAX {
                            support_slot[r] = support_rows.len();
                            support_rows.push(r);
                        }
                        coef.push((support_slot[r], alpha[t] * yy[t]));
                    }
                }
                machines.push(BinarySvm {
                    positive: a,
                    negative: b,
                    coef,
                    rho,
                    iterations,
                    converged,
                });
            }
        }
        Self {
            gamma,
            support: x.select(Axis(0), &support_rows),
            machines,
            n_classes: data.n_classes,
        }
    }

    pub fn converged(&self) -> bool {
        self.machines.iter().all(|m| m.converged)
    }

    pub fn decision_values(&self, row: ArrayView1<f64>) -> Vec<f64> {
        let kernels: Array1<f64> = self.support.axis_iter(Axis(0)).map(|s| rbf(s, row, self.gamma)).collect();
        self.machines
            .iter()
            .map(|m| m.coef.iter().map(|&(s, w)| w * kernels[s]).sum::<f64>() - m.rho)
            .collect()
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        for (m, dec) in self.machines.iter().zip(self.decision_values(row)) {
            if dec > 0.0 {
                votes[m.positive] += 1;
            } else {
                votes[m.negative] += 1;
            }
        }
        let mut best = 0;
        for c in 1..self.n_classes {
            if votes[c] > votes[best] {
                best = c;
            }
        }
        best
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<usize> {
        x.axis_iter(Axis(0)).map(|r| self.predict_row(r)).collect()
    }
}
