//! Multinomial logistic regression with an L2 penalty on the weights
//! (intercepts unpenalized), minimized by L-BFGS.
//!
//! Objective: `sum_i CE_i + 0.5 / C * ||W||^2`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticOptions {
    /// Inverse regularization strength.
    pub c: f64,
    pub max_iter: usize,
    /// Stop when the largest absolute gradient component drops below this.
    pub gtol: f64,
    /// Stop when the relative objective decrease drops below this.
    pub ftol: f64,
    pub history: usize,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            c: 1.0,
            max_iter: 2000,
            gtol: 1e-4,
            ftol: 2.220446049250313e-9,
            history: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// `d x K`
    pub weights: Array2<f64>,
    pub intercept: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct Problem<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [usize],
    n_classes: usize,
    alpha: f64,
}

impl Problem<'_> {
    fn dim(&self) -> usize {
        (self.x.ncols() + 1) * self.n_classes
    }

    fn unpack(&self, theta: &[f64]) -> (Array2<f64>, Array1<f64>) {
        let d = self.x.ncols();
        let k = self.n_classes;
        let w = Array2::from_shape_vec((d, k), theta[..d * k].to_vec()).expect("shape");
        let b = Array1::from_vec(theta[d * k..].to_vec());
        (w, b)
    }

    fn value_and_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let (w, b) = self.unpack(theta);
        let mut z = self.x.dot(&w) + &b;
        let mut loss = 0.0;
        for (i, mut row) in z.axis_iter_mut(Axis(0)).enumerate() {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[self.y[i]];
            row.mapv_inplace(|v| (v - lse).exp());
            row[self.y[i]] -= 1.0;
        }
        let gw = self.x.t().dot(&z) + &(&w * self.alpha);
        let gb = z.sum_axis(Axis(0));
        loss += 0.5 * self.alpha * w.iter().map(|v| v * v).sum::<f64>();
        let mut grad = gw.into_raw_vec_and_offset().0;
        grad.extend(gb.iter());
        (loss, grad)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Train on already-scaled features.
pub fn fit(data: &Dataset, opts: &LogisticOptions) -> LogisticModel {
    let problem = Problem {
        x: data.x.view(),
        y: &data.y,
        n_classes: data.n_classes,
        alpha: 1.0 / opts.c,
    };
    let n = problem.dim();
    let mut theta = vec![0.0; n];
    let (mut f, mut g) = problem.value_and_grad(&theta);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut converged = max_abs(&g) <= opts.gtol;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = vec![0.0; s_hist.len()];
        for i in (0..s_hist.len()).rev() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            alphas[i] = rho * dot(&s_hist[i], &q);
            for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
                *qj -= alphas[i] * yj;
            }
        }
        let gamma = match (s_hist.last(), y_hist.last()) {
            (Some(s), Some(y)) => dot(s, y) / dot(y, y),
            _ => 1.0 / dot(&g, &g).sqrt().max(1e-300),
        };
        for v in &mut q {
            *v *= gamma;
        }
        for i in 0..s_hist.len() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            let beta = rho * dot(&y_hist[i], &q);
            for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
                *qj += sj * (alphas[i] - beta);
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&dir, &g);
        if slope >= 0.0 {
            // lost descent; restart from steepest descent
            s_hist.clear();
            y_hist.clear();
            dir = g.iter().map(|v| -v / dot(&g, &g).sqrt()).collect();
            slope = dot(&dir, &g);
        }

        // backtracking Armijo line search
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
            let (fc, gc) = problem.value_and_grad(&cand);
            if fc <= f + 1e-4 * step * slope {
                accepted = Some((cand, fc, gc));
                break;
            }
            step *= 0.5;
        }
        let Some((new_theta, new_f, new_g)) = accepted else {
            converged = max_abs(&g) <= opts.gtol;
            break;
        };

        let s: Vec<f64> = new_theta.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = new_g.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &yv) > 1e-12 {
            if s_hist.len() == opts.history {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(yv);
        }
        let rel = (f - new_f) / f.abs().max(new_f.abs()).max(1.0);
        theta = new_theta;
        f = new_f;
        g = new_g;
        if max_abs(&g) <= opts.gtol || rel <= opts.ftol {
            converged = true;
        }
    }

    let (weights, intercept) = problem.unpack(&theta);
    LogisticModel {
        weights,
        intercept,
        iterations,
        converged,
    }
}

impl LogisticModel {
    pub fn decision(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.intercept
    }
}
