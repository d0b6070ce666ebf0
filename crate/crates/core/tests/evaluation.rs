use facegrowth_core::analysis::{GrowthClass, Target};
use facegrowth_core::evaluation::{mfc_baseline, run_cv, run_grid, stratified_folds, CvPlan};
use facegrowth_core::features::{DataType, FeatureTable, PeriodVariant, Scenario};
use facegrowth_core::stats::{mean, sample_std};
use facegrowth_models::{ModelSpec, TrainConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cohort_labels() -> Vec<usize> {
    let mut y = vec![1; 436];
    y.extend(vec![0; 102]);
    y.extend(vec![2; 101]);
    y
}

fn table(labels: &[usize], signal: f64, seed: u64) -> FeatureTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = labels
        .iter()
        .map(|&c| vec![signal * c as f64 + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
        .collect();
    FeatureTable {
        scenario: Scenario {
            target: Target::SnMp,
            variant: PeriodVariant::Diff,
            data_type: DataType::Ceph,
        },
        feature_names: vec!["a".into(), "b".into()],
        patient_ids: (0..labels.len()).map(|i| format!("P{i:04}")).collect(),
        rows,
        labels: labels.iter().map(|&c| GrowthClass::from_index(c).unwrap()).collect(),
        excluded: vec![],
    }
}

#[test]
fn folds_keep_class_proportions() {
    let y = cohort_labels();
    let global = 436.0 / 639.0;
    for seed in 0..5 {
        let a = stratified_folds(&y, 3, 5, seed).unwrap();
        for f in 0..5 {
            let members: Vec<usize> = (0..y.len()).filter(|&i| a[i] == f).collect();
            let majority = members.iter().filter(|&&i| y[i] == 1).count() as f64;
            assert!((majority - global * members.len() as f64).abs() <= 1.0);
            for c in 0..3 {
                let in_fold = members.iter().filter(|&&i| y[i] == c).count();
                let total = y.iter().filter(|&&l| l == c).count();
                assert!(in_fold == total / 5 || in_fold == total.div_ceil(5));
            }
        }
    }
}

#[test]
fn zero_rule_sits_on_the_baseline() {
    let y = cohort_labels();
    let t = table(&y, 0.0, 1);
    let plan = CvPlan {
        repeats: 3,
        ..CvPlan::default()
    };
    let r = run_cv(&t, &ModelSpec::ZeroRule, &plan, &TrainConfig::default()).unwrap();
    assert_eq!(r.accuracies.len(), 15);
    assert!((r.baseline - mfc_baseline(&y)).abs() < 1e-15);
    assert!((r.mean - r.baseline).abs() < 0.01);
    assert!(!r.significant);
    assert!((mean(&r.accuracies) - r.mean).abs() < 1e-12);
    assert!((sample_std(&r.accuracies) - r.std).abs() < 1e-12);
}

#[test]
fn separable_table_is_significant() {
    let y = cohort_labels();
    let t = table(&y, 5.0, 2);
    let plan = CvPlan {
        repeats: 2,
        ..CvPlan::default()
    };
    let r = run_cv(&t, &ModelSpec::Lr, &plan, &TrainConfig::default()).unwrap();
    assert!(r.mean >= 0.9 && r.significant, "{r:?}");
}

#[test]
fn permuted_labels_rarely_significant() {
    let mut y = cohort_labels();
    let mut significant = 0;
    for seed in 0..20 {
        y.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let t = table(&y, 0.0, seed + 100);
        let plan = CvPlan {
            repeats: 2,
            master_seed: seed,
            ..CvPlan::default()
        };
        let r = run_cv(&t, &ModelSpec::Knn { k: 5 }, &plan, &TrainConfig::default()).unwrap();
        significant += r.significant as usize;
    }
    assert!(significant <= 2, "{significant}/20 significant");
}

#[test]
fn thread_count_does_not_change_records() {
    let y = cohort_labels();
    let tables = vec![table(&y, 1.0, 3), table(&y, 0.5, 4)];
    let specs = vec![ModelSpec::Dt, ModelSpec::Rf { trees: 10 }, ModelSpec::Knn { k: 3 }];
    let plan = CvPlan {
        repeats: 2,
        master_seed: 9,
        ..CvPlan::default()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_grid(&tables, &specs, &plan, &TrainConfig::default()).unwrap())
    };
    let one = run(1);
    assert_eq!(one.len(), 6);
    assert_eq!(one, run(4));
}
