//! Rough per-fit timing of every canonical model on a 511 x 82 table.

use std::time::Instant;

use facegrowth_models::{rng::stream, train, Dataset, ModelSpec, TrainConfig};
use ndarray::Array2;
use rand::Rng;

fn main() {
    let width: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(82);
    let mut rng = stream(1, &[]);
    let n = 511;
    let x = Array2::from_shape_fn((n, width), |_| rng.gen_range(-1.0..1.0));
    let y: Vec<usize> = (0..n)
        .map(|i| {
            let s = x[[i, 0]] + 0.5 * rng.gen_range(-1.0..1.0);
            if s < -0.6 { 0 } else if s > 0.6 { 2 } else { 1 }
        })
        .collect();
    let data = Dataset::new(x, y, 3).unwrap();
    for spec in ModelSpec::canonical() {
        let start = Instant::now();
        let model = train(&spec, &data, &TrainConfig { seed: 3, ..TrainConfig::default() }).unwrap();
        let pred = model.predict(data.x.view()).unwrap();
        let acc = pred.iter().zip(&data.y).filter(|(a, b)| a == b).count() as f64 / n as f64;
        println!("{:<12} {:>8.3}s train_acc={acc:.3} epochs={:?}", spec.to_string(), start.elapsed().as_secs_f64(), model.meta.epochs_run);
    }
}
