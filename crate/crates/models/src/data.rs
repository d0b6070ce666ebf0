use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Dense training set: one row per instance, integer class labels in `0..n_classes`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Vec<usize>, n_classes: usize) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(ModelError::LengthMismatch {
                rows: x.nrows(),
                labels: y.len(),
            });
        }
        if let Some(&label) = y.iter().find(|&&l| l >= n_classes) {
            return Err(ModelError::LabelOutOfRange { label, n_classes });
        }
        Ok(Self { x, y, n_classes })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<usize>, n_classes: usize) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        let mut x = Array2::zeros((rows.len(), width));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(ModelError::WidthMismatch {
                    expected: width,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                x[[i, j]] = v;
            }
        }
        Self::new(x, y, n_classes)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn width(&self) -> usize {
        self.x.ncols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        class_counts(&self.y, self.n_classes)
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), rows),
            y: rows.iter().map(|&r| self.y[r]).collect(),
            n_classes: self.n_classes,
        }
    }

    /// Checks shared by every family: non-empty, finite, two or more classes.
    pub(crate) fn validate_for_training(&self) -> Result<()> {
        if self.is_empty() {
            return Err(ModelError::Empty);
        }
        check_finite(self.x.view())?;
        let counts = self.class_counts();
        let present: Vec<usize> = (0..self.n_classes).filter(|&c| counts[c] > 0).collect();
        if present.len() < 2 {
            return Err(ModelError::SingleClass(present.first().copied().unwrap_or(0)));
        }
        Ok(())
    }
}

pub fn class_counts(y: &[usize], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; n_classes];
    for &c in y {
        counts[c] += 1;
    }
    counts
}

pub(crate) fn check_finite(x: ArrayView2<f64>) -> Result<()> {
    for ((row, col), v) in x.indexed_iter() {
        if !v.is_finite() {
            return Err(ModelError::NonFinite { row, col });
        }
    }
    Ok(())
}

/// Index of the largest value; ties resolve to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Zero-mean, unit-variance scaling fitted on training rows only.
///
/// Uses the population variance; constant columns keep a unit scale so they
/// map to zero instead of dividing by zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean = x.sum_axis(Axis(0)) / n;
        let mut scale = Array1::zeros(x.ncols());
        for (j, col) in x.axis_iter(Axis(1)).enumerate() {
            let var = col.iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            scale[j] = if sd > 0.0 { sd } else { 1.0 };
        }
        Self { mean, scale }
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.axis_iter_mut(Axis(0)) {
            row -= &self.mean;
            row /= &self.scale;
        }
        out
    }
}

/// Stratified hold-out: per class, `round(fraction * n_c)` members go to the
/// validation side, always leaving at least one member for training.
pub fn stratified_holdout<R: Rng>(
    y: &[usize],
    n_classes: usize,
    fraction: f64,
    rng: &mut R,
) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        members.shuffle(rng);
        let n_val = ((fraction * members.len() as f64).round() as usize)
            .min(members.len().saturating_sub(1));
        valid.extend_from_slice(&members[..n_val]);
        train.extend_from_slice(&members[n_val..]);
    }
    train.sort_unstable();
    valid.sort_unstable();
    (train, valid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use ndarray::array;

    #[test]
    fn standardizer_centers_and_scales() {
        let x = array![[1.0, 5.0], [3.0, 5.0], [5.0, 5.0]];
        let s = Standardizer::fit(x.view());
        let z = s.transform(x.view());
        assert!((z[[0, 0]] + 1.224_744_871_391_589).abs() < 1e-12);
        assert_eq!(z[[1, 0]], 0.0);
        // constant column maps to zero
        assert!(z.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn holdout_is_stratified_and_disjoint() {
        let y: Vec<usize> = (0..50).map(|i| if i < 40 { 1 } else if i < 45 { 0 } else { 2 }).collect();
        let mut rng = stream(3, &[]);
        let (train, valid) = stratified_holdout(&y, 3, 0.2, &mut rng);
        assert_eq!(train.len() + valid.len(), 50);
        assert_eq!(class_counts(&valid.iter().map(|&i| y[i]).collect::<Vec<_>>(), 3), vec![1, 8, 1]);
        assert!(valid.iter().all(|v| !train.contains(v)));
    }

    #[test]
    fn single_class_is_rejected() {
        let d = Dataset::from_rows(&[vec![0.0], vec![1.0]], vec![2, 2], 3).unwrap();
        assert!(matches!(d.validate_for_training(), Err(ModelError::SingleClass(2))));
    }

    #[test]
    fn non_finite_is_rejected() {
        let d = Dataset::from_rows(&[vec![0.0], vec![f64::NAN]], vec![0, 1], 3).unwrap();
        assert!(matches!(
            d.validate_for_training(),
            Err(ModelError::NonFinite { row: 1, col: 0 })
        ));
    }
}
