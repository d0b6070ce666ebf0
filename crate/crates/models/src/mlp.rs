//! Fully connected perceptron: ReLU hidden layers, softmax output, full-batch
//! Adam on mean cross-entropy, early stopping on a stratified validation split
//! with restoration of the best epoch's parameters.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{stratified_holdout, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `fan_in x fan_out`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpOptions {
    pub hidden: Vec<usize>,
    pub adam: AdamParams,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct MlpFit {
    pub model: Mlp,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Validation loss after each epoch's update.
    pub val_history: Vec<f64>,
}

struct Gradients {
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

fn one_hot(y: &[usize], n_classes: usize) -> Array2<f64> {
    let mut out = Array2::zeros((y.len(), n_classes));
    for (i, &c) in y.iter().enumerate() {
        out[[i, c]] = 1.0;
    }
    out
}

/// Row-wise softmax in place; returns the per-row log-sum-exp.
fn softmax_rows(z: &mut Array2<f64>) -> Array1<f64> {
    let mut lse = Array1::zeros(z.nrows());
    for (i, mut row) in z.axis_iter_mut(Axis(0)).enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        lse[i] = max + sum.ln();
        row.mapv_inplace(|v| (v - lse[i]).exp());
    }
    lse
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn init(n_inputs: usize, hidden: &[usize], n_outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut widths = vec![n_inputs];
        widths.extend_from_slice(hidden);
        widths.push(n_outputs);
        let layers = widths
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Dense {
                    weights: Array2::from_shape_fn((w[0], w[1]), |_| rng.gen_range(-limit..limit)),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(n_inputs: usize, hidden: &[usize], n_outputs: usize) -> Self {
        let mut widths = vec![n_inputs];
        widths.extend_from_slice(hidden);
        widths.push(n_outputs);
        Self {
            layers: widths
                .windows(2)
                .map(|w| Dense {
                    weights: Array2::zeros((w[0], w[1])),
                    bias: Array1::zeros(w[1]),
                })
                .collect(),
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Activations of every layer; the last entry holds softmax probabilities.
    fn forward(&self, x: ArrayView2<f64>) -> (Vec<Array2<f64>>, Array1<f64>) {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        let last = self.layers.len() - 1;
        let mut lse = Array1::zeros(0);
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = acts[k].dot(&layer.weights) + &layer.bias;
            if k == last {
                lse = softmax_rows(&mut z);
            } else {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        (acts, lse)
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let (mut acts, _) = self.forward(x);
        acts.pop().expect("network has an output layer")
    }

    /// Mean cross-entropy, computed through log-sum-exp so it stays finite.
    pub fn loss(&self, x: ArrayView2<f64>, y: &[usize]) -> f64 {
        if y.is_empty() {
            return 0.0;
        }
        let mut z = x.to_owned();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            z = z.dot(&layer.weights) + &layer.bias;
            if k < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
        }
        let mut total = 0.0;
        for (row, &c) in z.axis_iter(Axis(0)).zip(y) {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[c];
        }
        total / y.len() as f64
    }

    fn gradients(&self, x: ArrayView2<f64>, targets: &Array2<f64>) -> Gradients {
        let n = x.nrows() as f64;
        let (acts, _) = self.forward(x);
        let depth = self.layers.len();
        let mut weights = vec![Array2::zeros((0, 0)); depth];
        let mut biases = vec![Array1::zeros(0); depth];
        let mut delta = (&acts[depth] - targets) / n;
        for k in (0..depth).rev() {
            weights[k] = acts[k].t().dot(&delta);
            biases[k] = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut back = delta.dot(&self.layers[k].weights.t());
                Zip::from(&mut back).and(&acts[k]).for_each(|b, &a| {
                    if a <= 0.0 {
                        *b = 0.0;
                    }
                });
                delta = back;
            }
        }
        Gradients { weights, biases }
    }

    fn get_param(&self, idx: usize) -> f64 {
        let mut idx = idx;
        for l in &self.layers {
            if idx < l.weights.len() {
                return l.weights.as_slice().expect("standard layout")[idx];
            }
            idx -= l.weights.len();
            if idx < l.bias.len() {
                return l.bias[idx];
            }
            idx -= l.bias.len();
        }
        panic!("parameter index out of range")
    }

    fn set_param(&mut self, idx: usize, value: f64) {
        let mut idx = idx;
        for l in &mut self.layers {
            if idx < l.weights.len() {
                l.weights.as_slice_mut().expect("standard layout")[idx] = value;
                return;
            }
            idx -= l.weights.len();
            if idx < l.bias.len() {
                l.bias[idx] = value;
                return;
            }
            idx -= l.bias.len();
        }
        panic!("parameter index out of range")
    }

    fn flat_gradients(g: &Gradients) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in g.weights.iter().zip(&g.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }
}

struct AdamState {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    step: i32,
}

impl AdamState {
    fn new(model: &Mlp) -> Self {
        Self {
            m_w: model.layers.iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect(),
            v_w: model.layers.iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect(),
            m_b: model.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
            v_b: model.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
            step: 0,
        }
    }

    fn apply(&mut self, model: &mut Mlp, grads: &Gradients, p: &AdamParams) {
        self.step += 1;
        let t = self.step;
        let lr_t = p.learning_rate * (1.0 - p.beta2.powi(t)).sqrt() / (1.0 - p.beta1.powi(t));
        let (b1, b2, eps) = (p.beta1, p.beta2, p.epsilon);
        for k in 0..model.layers.len() {
            Zip::from(&mut model.layers[k].weights)
                .and(&mut self.m_w[k])
                .and(&mut self.v_w[k])
                .and(&grads.weights[k])
                .for_each(|w, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *w -= lr_t * *m / (v.sqrt() + eps);
                });
            Zip::from(&mut model.layers[k].bias)
                .and(&mut self.m_b[k])
                .and(&mut self.v_b[k])
                .and(&grads.biases[k])
                .for_each(|w, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *w -= lr_t * *m / (v.sqrt() + eps);
                });
        }
    }
}

/// Train on already-scaled features.
pub fn fit(data: &Dataset, opts: &MlpOptions, rng: &mut ChaCha8Rng) -> MlpFit {
    let (train_idx, val_idx) = stratified_holdout(&data.y, data.n_classes, opts.validation_fraction, rng);
    let train = data.subset(&train_idx);
    // Without a validation side (tiny inputs) the training loss drives stopping.
    let valid = if val_idx.is_empty() { train.clone() } else { data.subset(&val_idx) };
    let targets = one_hot(&train.y, data.n_classes);

    let mut model = Mlp::init(data.width(), &opts.hidden, data.n_classes, rng);
    let mut adam = AdamState::new(&model);
    let mut best = model.clone();
    let mut best_loss = model.loss(valid.x.view(), &valid.y);
    let mut best_epoch = 0;
    let mut wait = 0;
    let mut epochs_run = 0;
    let mut stopped_early = false;
    let mut val_history = Vec::new();

    for epoch in 1..=opts.max_epochs {
        let grads = model.gradients(train.x.view(), &targets);
        adam.apply(&mut model, &grads, &opts.adam);
        epochs_run = epoch;
        let val_loss = model.loss(valid.x.view(), &valid.y);
        val_history.push(val_loss);
        if val_loss < best_loss {
            best_loss = val_loss;
            best = model.clone();
            best_epoch = epoch;
            wait = 0;
        } else {
            wait += 1;
            if wait >= opts.patience {
                stopped_early = true;
                break;
            }
        }
    }

    MlpFit {
        model: best,
        epochs_run,
        stopped_early,
        best_epoch,
        best_val_loss: best_loss,
        val_history,
    }
}

/// Largest relative discrepancy between backpropagated and central-difference
/// gradients of the mean cross-entropy over a sample of at most `max_params`
/// parameters.
pub fn gradient_check(model: &Mlp, data: &Dataset, max_params: usize, step: f64, rng: &mut ChaCha8Rng) -> f64 {
    let targets = one_hot(&data.y, data.n_classes);
    let analytic = Mlp::flat_gradients(&model.gradients(data.x.view(), &targets));
    let total = model.n_params();
    let picks: Vec<usize> = if total <= max_params {
        (0..total).collect()
    } else {
        rand::seq::index::sample(rng, total, max_params).into_vec()
    };
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for idx in picks {
        let orig = probe.get_param(idx);
        probe.set_param(idx, orig + step);
        let plus = probe.loss(data.x.view(), &data.y);
        probe.set_param(idx, orig - step);
        let minus = probe.loss(data.x.view(), &data.y);
        probe.set_param(idx, orig);
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic[idx];
        let scale = a.abs().max(numeric.abs());
        if scale > 1e-10 {
            worst = worst.max((a - numeric).abs() / scale);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, StandardNormal};

    fn random_data(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = stream(seed, &[]);
        let x = Array2::from_shape_fn((n, d), |_| StandardNormal.sample(&mut rng));
        let y = (0..n).map(|i| i % 3).collect();
        Dataset::new(x, y, 3).unwrap()
    }

    #[test]
    fn zero_network_loss_is_ln3() {
        let data = random_data(9, 4, 1);
        let model = Mlp::zeros(4, &[5], 3);
        assert_abs_diff_eq!(model.loss(data.x.view(), &data.y), 3f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let data = random_data(12, 3, 2);
        let mut rng = stream(2, &[1]);
        let model = Mlp::init(3, &[50, 10], 3, &mut rng);
        for row in model.predict_proba(data.x.view()).axis_iter(Axis(0)) {
            assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_check_softmax_regression() {
        let data = random_data(4, 3, 3);
        let mut rng = stream(3, &[1]);
        let model = Mlp::init(3, &[], 3, &mut rng);
        let err = gradient_check(&model, &data, 50, 1e-5, &mut rng);
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn gradient_check_one_hidden_layer() {
        let data = random_data(8, 4, 4);
        let mut rng = stream(4, &[1]);
        let model = Mlp::init(4, &[20], 3, &mut rng);
        let err = gradient_check(&model, &data, 50, 1e-5, &mut rng);
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn early_stopping_restores_minimum_validation_loss() {
        let data = random_data(60, 5, 5);
        let opts = MlpOptions {
            hidden: vec![20],
            adam: AdamParams::default(),
            max_epochs: 3000,
            patience: 50,
            validation_fraction: 0.2,
        };
        let mut rng = stream(5, &[]);
        let fit = fit(&data, &opts, &mut rng);
        assert!(fit.epochs_run <= 3000);
        assert!(fit.stopped_early, "noise labels should stop early");
        let min = fit.val_history.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(fit.best_val_loss <= min);
        assert_eq!(fit.epochs_run - fit.best_epoch, 50);
    }
}
