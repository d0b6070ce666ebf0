use facegrowth_models::mlp::{self, gradient_check, Mlp, MlpOptions};
use facegrowth_models::{train, Dataset, ModelSpec, Params, TrainConfig, TrainedModel};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn blobs(n: usize, width: usize, spread: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 3;
        rows.push((0..width).map(|j| if j == 0 { c as f64 } else { 0.0 } + rng.gen_range(-spread..spread)).collect());
        y.push(c);
    }
    Dataset::from_rows(&rows, y, 3).unwrap()
}

fn fit(spec: ModelSpec, data: &Dataset) -> TrainedModel {
    train(&spec, data, &TrainConfig::default()).unwrap()
}

#[test]
fn knn_matches_exhaustive_sort() {
    let data = blobs(150, 4, 1.5, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let queries = Array2::from_shape_fn((200, 4), |_| rng.gen_range(-2.0..4.0));
    for k in [3, 5] {
        let model = fit(ModelSpec::Knn { k }, &data);
        let Params::Knn(knn) = &model.params else { panic!("not a k-NN model") };
        let scaled = model.standardizer.as_ref().map_or(queries.clone(), |s| s.transform(queries.view()));
        let predicted = model.predict(queries.view()).unwrap();
        for (q, pred) in scaled.outer_iter().zip(predicted) {
            let mut order: Vec<(f64, usize)> = knn
                .x
                .outer_iter()
                .enumerate()
                .map(|(i, t)| (t.iter().zip(q.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), i))
                .collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let nearest: Vec<usize> = order[..k].iter().map(|p| p.1).collect();
            assert_eq!(knn.neighbours(q), nearest);
            let mut votes = [0usize; 3];
            for &i in &nearest {
                votes[knn.y[i]] += 1;
            }
            let top = *votes.iter().max().unwrap();
            // ties go to the class with more training rows (all 50 here), then the lower index
            let expected = (0..3).find(|&c| votes[c] == top).unwrap();
            assert_eq!(pred, expected);
        }
    }
}

#[test]
fn forest_vote_is_recomputable() {
    let data = blobs(120, 5, 1.2, 3);
    let model = fit(ModelSpec::Rf { trees: 100 }, &data);
    let Params::Rf(forest) = &model.params else { panic!("not a forest") };
    assert_eq!(forest.trees.len(), 100);
    let predicted = model.predict(data.x.view()).unwrap();
    let probe = blobs(60, 5, 2.0, 4);
    let probe_pred = model.predict(probe.x.view()).unwrap();
    for (x, pred) in data.x.outer_iter().chain(probe.x.outer_iter()).zip(predicted.into_iter().chain(probe_pred)) {
        let mut votes = [0usize; 3];
        for t in forest.tree_predictions(x) {
            votes[t] += 1;
        }
        let top = *votes.iter().max().unwrap();
        let expected = (0..3).find(|&c| votes[c] == top).unwrap();
        assert_eq!(pred, expected);
    }
}

#[test]
fn early_stopping_restores_best_epoch() {
    let data = blobs(90, 3, 2.0, 5);
    let opts = MlpOptions {
        hidden: vec![20],
        adam: Default::default(),
        max_epochs: 10_000,
        patience: 50,
        validation_fraction: 0.2,
    };
    let fit = mlp::fit(&data, &opts, &mut ChaCha8Rng::seed_from_u64(6));
    assert!(fit.epochs_run <= 10_000);
    let min = fit.val_history.iter().copied().fold(f64::INFINITY, f64::min);
    if fit.stopped_early {
        assert_eq!(fit.epochs_run, fit.best_epoch + 50);
        assert_eq!(fit.best_val_loss, min);
        assert_eq!(fit.val_history[fit.best_epoch - 1], min);
    }
    assert!(fit.best_val_loss <= min);
}

#[test]
fn gradient_check_and_uniform_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let small = blobs(4, 3, 1.0, 8);
    let soft = Mlp::init(3, &[], 3, &mut rng);
    assert!(gradient_check(&soft, &small, 50, 1e-5, &mut rng) < 1e-4);
    let eight = blobs(8, 3, 1.0, 9);
    let hidden = Mlp::init(3, &[20], 3, &mut rng);
    assert!(gradient_check(&hidden, &eight, 50, 1e-5, &mut rng) < 1e-4);
    let zero = Mlp::zeros(3, &[20], 3);
    let balanced = blobs(9, 3, 1.0, 10);
    assert!((zero.loss(balanced.x.view(), &balanced.y) - 3f64.ln()).abs() < 1e-9);
}

#[test]
fn dumps_round_trip_for_every_family() {
    let data = blobs(60, 3, 1.0, 11);
    let mut specs = ModelSpec::canonical();
    specs.push(ModelSpec::ZeroRule);
    for spec in specs {
        let model = fit(spec.clone(), &data);
        let text = model.to_json().unwrap();
        let back = TrainedModel::from_json(&text).unwrap();
        assert_eq!(back.spec, spec);
        assert_eq!(
            back.predict(data.x.view()).unwrap(),
            model.predict(data.x.view()).unwrap(),
            "{spec}"
        );
    }
    assert!(TrainedModel::from_json("{\"format\":\"other\",\"version\":1}").is_err());
}

#[test]
fn boosting_rounds_do_not_hurt_training_fit() {
    let data = blobs(90, 4, 1.5, 12);
    let acc = |rounds| {
        let m = fit(ModelSpec::Xgb { rounds }, &data);
        let p = m.predict(data.x.view()).unwrap();
        p.iter().zip(&data.y).filter(|(a, b)| a == b).count()
    };
    assert!(acc(300) >= acc(100));
}
