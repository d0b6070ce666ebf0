//! Gradient-boosted regression trees on the multiclass softmax objective.
//!
//! Each round fits one depth-limited tree per class to the first and second
//! derivatives of the softmax cross-entropy at the current margins, using the
//! exact greedy split search over presorted feature columns.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{argmax, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostOptions {
    pub rounds: usize,
    pub max_depth: usize,
    /// Shrinkage applied to every leaf weight.
    pub eta: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Minimum loss reduction for a split.
    pub gamma: f64,
    /// Minimum hessian mass on each side of a split.
    pub min_child_weight: f64,
    pub base_score: f64,
}

impl BoostOptions {
    pub fn with_rounds(rounds: usize) -> Self {
        Self {
            rounds,
            max_depth: 6,
            eta: 0.3,
            lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
            base_score: 0.5,
        }
    }
}

/// Gains at or below this are treated as no improvement.
const MIN_SPLIT_GAIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegNode {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTree {
    pub nodes: Vec<RegNode>,
}

impl RegTree {
    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                RegNode::Leaf { value } => return value,
                RegNode::Split { feature, threshold, left, right } => {
                    id = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    /// `rounds[r][k]` is round r's tree for class k.
    pub rounds: Vec<Vec<RegTree>>,
    pub base_score: f64,
    pub n_classes: usize,
}

#[derive(Clone, Copy)]
struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct Scan {
    gl: f64,
    hl: f64,
    last: Option<f64>,
}

fn leaf_weight(g: f64, h: f64, opts: &BoostOptions) -> f64 {
    -g / (h + opts.lambda) * opts.eta
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

fn build_tree(x: ArrayView2<f64>, sorted: &[Vec<(u32, f64)>], grad: &[f64], hess: &[f64], opts: &BoostOptions) -> RegTree {
    let n = grad.len();
    let mut nodes = vec![RegNode::Leaf { value: 0.0 }];
    let mut stats = vec![(grad.iter().sum::<f64>(), hess.iter().sum::<f64>())];
    let mut node_of: Vec<usize> = vec![0; n];
    // slot index of each node within the current frontier, usize::MAX if closed
    let mut slot_of: Vec<usize> = vec![0];
    let mut frontier: Vec<usize> = vec![0];

    for _depth in 0..opts.max_depth {
        if frontier.is_empty() {
            break;
        }
        let row_slot: Vec<usize> = node_of.iter().map(|&id| slot_of[id]).collect();
        let mut best: Vec<Option<Best>> = vec![None; frontier.len()];
        let mut scans: Vec<Scan> = (0..frontier.len()).map(|_| Scan { gl: 0.0, hl: 0.0, last: None }).collect();
        for (f, order) in sorted.iter().enumerate() {
            for s in &mut scans {
                *s = Scan { gl: 0.0, hl: 0.0, last: None };
            }
            for &(r, v) in order {
                let r = r as usize;
                let slot = row_slot[r];
                if slot == usize::MAX {
                    continue;
                }
                let scan = &mut scans[slot];
                if let Some(last) = scan.last {
                    if v != last {
                        let (g_tot, h_tot) = stats[frontier[slot]];
                        let (gl, hl) = (scan.gl, scan.hl);
                        let (gr, hr) = (g_tot - gl, h_tot - hl);
                        if hl >= opts.min_child_weight && hr >= opts.min_child_weight {
                            let gain = 0.5
                                * (score(gl, hl, opts.lambda) + score(gr, hr, opts.lambda)
                                    - score(g_tot, h_tot, opts.lambda))
                                - opts.gamma;
                            if best[slot].map_or(true, |b| gain > b.gain) {
                                let mut threshold = 0.5 * (last + v);
                                if threshold == v {
                                    threshold = last;
                                }
                                best[slot] = Some(Best { gain, feature: f, threshold });
                            }
                        }
                    }
                }
                scan.gl += grad[r];
                scan.hl += hess[r];
                scan.last = Some(v);
            }
        }

        let mut next = Vec::new();
        for (slot, &id) in frontier.iter().enumerate() {
            match best[slot] {
                Some(b) if b.gain > MIN_SPLIT_GAIN => {
                    let left = nodes.len();
                    nodes.push(RegNode::Leaf { value: 0.0 });
                    nodes.push(RegNode::Leaf { value: 0.0 });
                    stats.push((0.0, 0.0));
                    stats.push((0.0, 0.0));
                    slot_of.push(usize::MAX);
                    slot_of.push(usize::MAX);
                    nodes[id] = RegNode::Split {
                        feature: b.feature,
                        threshold: b.threshold,
                        left,
                        right: left + 1,
                    };
                    next.push(left);
                    next.push(left + 1);
                }
                _ => {
                    let (g, h) = stats[id];
                    nodes[id] = RegNode::Leaf { value: leaf_weight(g, h, opts) };
                }
            }
            slot_of[id] = usize::MAX;
        }
        for r in 0..n {
            if let RegNode::Split { feature, threshold, left, right } = nodes[node_of[r]] {
                let child = if x[[r, feature]] <= threshold { left } else { right };
                node_of[r] = child;
                stats[child].0 += grad[r];
                stats[child].1 += hess[r];
            }
        }
        for (slot, &id) in next.iter().enumerate() {
            slot_of[id] = slot;
        }
        frontier = next;
    }
    for &id in &frontier {
        let (g, h) = stats[id];
        nodes[id] = RegNode::Leaf { value: leaf_weight(g, h, opts) };
    }
    RegTree { nodes }
}

impl GradientBoosting {
    pub fn fit(data: &Dataset, opts: &BoostOptions) -> Self {
        let n = data.len();
        let k = data.n_classes;
        let x = data.x.view();
        let sorted: Vec<Vec<(u32, f64)>> = (0..data.width())
            .map(|f| {
                let mut col: Vec<(u32, f64)> = (0..n).map(|r| (r as u32, x[[r, f]])).collect();
                col.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                col
            })
            .collect();
        let mut margins = Array2::from_elem((n, k), opts.base_score);
        let mut rounds = Vec::with_capacity(opts.rounds);
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        for _ in 0..opts.rounds {
            let probs = softmax(&margins);
            let mut round = Vec::with_capacity(k);
            for class in 0..k {
                for i in 0..n {
                    let p = probs[[i, class]];
                    let target = if data.y[i] == class { 1.0 } else { 0.0 };
                    grad[i] = p - target;
                    hess[i] = (2.0 * p * (1.0 - p)).max(1e-16);
                }
                round.push(build_tree(x, &sorted, &grad, &hess, opts));
            }
            for (i, row) in x.axis_iter(Axis(0)).enumerate() {
                for (class, tree) in round.iter().enumerate() {
                    margins[[i, class]] += tree.predict_row(row);
                }
            }
            rounds.push(round);
        }
        Self {
            rounds,
            base_score: opts.base_score,
            n_classes: k,
        }
    }

    pub fn margins_row(&self, row: ArrayView1<f64>) -> Vec<f64> {
        let mut m = vec![self.base_score; self.n_classes];
        for round in &self.rounds {
            for (class, tree) in round.iter().enumerate() {
                m[class] += tree.predict_row(row);
            }
        }
        m
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<usize> {
        x.axis_iter(Axis(0)).map(|r| argmax(&self.margins_row(r))).collect()
    }
}

fn softmax(margins: &Array2<f64>) -> Array2<f64> {
    let mut p = margins.clone();
    for mut row in p.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row /= s;
    }
    p
}
