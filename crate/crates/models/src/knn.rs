use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{class_counts, Dataset};

/// Euclidean k-nearest-neighbour vote.
///
/// Distance ties resolve to the lower training row index. Vote ties resolve
/// to the class with more training instances, then to the lower class index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KNearest {
    pub k: usize,
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub class_totals: Vec<usize>,
}

impl KNearest {
    pub fn fit(data: &Dataset, k: usize) -> Self {
        Self {
            k: k.max(1),
            x: data.x.clone(),
            y: data.y.clone(),
            class_totals: class_counts(&data.y, data.n_classes),
        }
    }

    /// Training row indices of the `k` nearest neighbours, nearest first.
    pub fn neighbours(&self, row: ArrayView1<f64>) -> Vec<usize> {
        let mut dist: Vec<(f64, usize)> = self
            .x
            .axis_iter(Axis(0))
            .enumerate()
            .map(|(i, t)| (t.iter().zip(row.iter()).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        let k = self.k.min(dist.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
            dist.truncate(k);
        }
        dist.sort_unstable_by(cmp);
        dist.into_iter().map(|(_, i)| i).collect()
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> usize {
        let mut votes = vec![0usize; self.class_totals.len()];
        for i in self.neighbours(row) {
            votes[self.y[i]] += 1;
        }
        let mut best = 0;
        for c in 1..votes.len() {
            let better = votes[c] > votes[best]
                || (votes[c] == votes[best] && self.class_totals[c] > self.class_totals[best]);
            if better {
                best = c;
            }
        }
        best
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<usize> {
        x.axis_iter(Axis(0)).map(|r| self.predict_row(r)).collect()
    }
}
