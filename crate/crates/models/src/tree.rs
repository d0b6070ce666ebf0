//! CART classification trees grown on Gini impurity.

use ndarray::{ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { class: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TreeOptions {
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
    pub max_depth: Option<usize>,
}

/// Column-major copy of a feature matrix, the layout every split search wants.
pub struct Columns(pub Vec<Vec<f64>>);

impl Columns {
    pub fn from_rows(x: ArrayView2<f64>) -> Self {
        Columns(x.axis_iter(Axis(1)).map(|c| c.to_vec()).collect())
    }

    pub fn width(&self) -> usize {
        self.0.len()
    }
}

struct SplitCandidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate().skip(1) {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

/// Best threshold on one feature, scored by `sum_side sum_c n_c^2 / n_side`
/// (larger is purer). `None` if the feature is constant on these rows.
fn best_threshold(
    column: &[f64],
    y: &[usize],
    rows: &[usize],
    parent_counts: &[usize],
    scratch: &mut Vec<(f64, usize)>,
) -> Option<(f64, f64)> {
    scratch.clear();
    scratch.extend(rows.iter().map(|&r| (column[r], y[r])));
    scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    if scratch[0].0 == scratch[scratch.len() - 1].0 {
        return None;
    }
    let n = scratch.len();
    let k = parent_counts.len();
    let mut left = vec![0usize; k];
    let mut left_sq: f64 = 0.0;
    let mut right_sq: f64 = parent_counts.iter().map(|&c| (c * c) as f64).sum();
    let mut best: Option<(f64, f64)> = None;
    for i in 0..n - 1 {
        let c = scratch[i].1;
        // incremental update of sum of squared counts on each side
        let lc = left[c] as f64;
        let rc = (parent_counts[c] - left[c]) as f64;
        left_sq += 2.0 * lc + 1.0;
        right_sq -= 2.0 * rc - 1.0;
        left[c] += 1;
        let (lo, hi) = (scratch[i].0, scratch[i + 1].0);
        if lo == hi {
            continue;
        }
        let n_left = (i + 1) as f64;
        let score = left_sq / n_left + right_sq / (n as f64 - n_left);
        if best.map_or(true, |(s, _)| score > s) {
            let mut threshold = 0.5 * (lo + hi);
            if threshold == hi || !threshold.is_finite() {
                threshold = lo;
            }
            best = Some((score, threshold));
        }
    }
    best
}

impl Tree {
    /// Grow a tree on `sample` (row indices, duplicates allowed for bootstraps).
    pub fn fit(
        columns: &Columns,
        y: &[usize],
        n_classes: usize,
        sample: Vec<usize>,
        opts: &TreeOptions,
        rng: &mut ChaCha8Rng,
    ) -> Tree {
        let d = columns.width();
        let mut nodes = vec![Node::Leaf { class: 0 }];
        let mut stack = vec![(0usize, sample, 0usize)];
        let mut scratch = Vec::new();
        let mut features: Vec<usize> = (0..d).collect();

        while let Some((id, rows, depth)) = stack.pop() {
            let mut counts = vec![0usize; n_classes];
            for &r in &rows {
                counts[y[r]] += 1;
            }
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let depth_capped = opts.max_depth.is_some_and(|m| depth >= m);
            if pure || rows.len() < 2 || depth_capped {
                nodes[id] = Node::Leaf { class: majority(&counts) };
                continue;
            }

            let budget = match opts.max_features {
                Some(m) if m < d => {
                    features.shuffle(rng);
                    m
                }
                _ => d,
            };
            let mut best: Option<SplitCandidate> = None;
            for (visited, &f) in features.iter().enumerate() {
                // keep drawing past the budget until one valid split exists
                if visited >= budget && best.is_some() {
                    break;
                }
                if let Some((score, threshold)) = best_threshold(&columns.0[f], y, &rows, &counts, &mut scratch) {
                    if best.as_ref().map_or(true, |b| score > b.score) {
                        best = Some(SplitCandidate { feature: f, threshold, score });
                    }
                }
            }

            let Some(split) = best else {
                nodes[id] = Node::Leaf { class: majority(&counts) };
                continue;
            };
            let col = &columns.0[split.feature];
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&r| col[r] <= split.threshold);
            let left = nodes.len();
            let right = left + 1;
            nodes.push(Node::Leaf { class: 0 });
            nodes.push(Node::Leaf { class: 0 });
            nodes[id] = Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left,
                right,
            };
            stack.push((right, right_rows, depth + 1));
            stack.push((left, left_rows, depth + 1));
        }
        Tree { nodes }
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> usize {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf { class } => return class,
                Node::Split { feature, threshold, left, right } => {
                    id = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use ndarray::array;

    #[test]
    fn unpruned_tree_memorizes_distinct_rows() {
        let x = array![[0.0, 1.0], [1.0, 0.0], [2.0, 2.0], [3.0, 1.0], [4.0, 5.0], [5.0, 3.0]];
        let y = vec![0, 2, 1, 0, 2, 1];
        let cols = Columns::from_rows(x.view());
        let mut rng = stream(0, &[]);
        let tree = Tree::fit(&cols, &y, 3, (0..6).collect(), &TreeOptions::default(), &mut rng);
        for (i, row) in x.axis_iter(Axis(0)).enumerate() {
            assert_eq!(tree.predict_row(row), y[i]);
        }
    }

    #[test]
    fn single_threshold_split() {
        let x = array![[1.0], [2.0], [3.0], [10.0], [11.0]];
        let y = vec![0, 0, 0, 1, 1];
        let cols = Columns::from_rows(x.view());
        let mut rng = stream(0, &[]);
        let tree = Tree::fit(&cols, &y, 2, (0..5).collect(), &TreeOptions::default(), &mut rng);
        assert_eq!(tree.depth(), 1);
        match tree.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 6.5);
            }
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn conflicting_duplicates_become_majority_leaf() {
        let x = array![[1.0], [1.0], [1.0]];
        let y = vec![1, 0, 1];
        let cols = Columns::from_rows(x.view());
        let mut rng = stream(0, &[]);
        let tree = Tree::fit(&cols, &y, 2, (0..3).collect(), &TreeOptions::default(), &mut rng);
        assert_eq!(tree.nodes, vec![Node::Leaf { class: 1 }]);
    }
}
