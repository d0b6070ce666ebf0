use ndarray::{ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::rng::stream;
use crate::tree::{Columns, Tree, TreeOptions};

/// Bagged CART trees with `floor(sqrt(d))` candidate features per split,
/// combined by majority vote (vote ties go to the lowest class index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
    pub n_classes: usize,
}

pub fn max_features_for(width: usize) -> usize {
    ((width as f64).sqrt().floor() as usize).max(1)
}

impl RandomForest {
    pub fn fit(data: &Dataset, n_trees: usize, seed: u64) -> Self {
        let columns = Columns::from_rows(data.x.view());
        let n = data.len();
        let opts = TreeOptions {
            max_features: Some(max_features_for(data.width())),
            max_depth: None,
        };
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = stream(seed, &[t as u64]);
                let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                Tree::fit(&columns, &data.y, data.n_classes, sample, &opts, &mut rng)
            })
            .collect();
        Self {
            trees,
            n_classes: data.n_classes,
        }
    }

    /// Each member tree's vote for one row, in tree order.
    pub fn tree_predictions(&self, row: ArrayView1<f64>) -> Vec<usize> {
        self.trees.iter().map(|t| t.predict_row(row)).collect()
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        for t in &self.trees {
            votes[t.predict_row(row)] += 1;
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
