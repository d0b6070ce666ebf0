use facegrowth_core::cephalometrics::{fa, measure_panel, pn_an, sn_mp, MeasurementPanel};
use facegrowth_core::data_model::{Cephalogram, LandmarkSchema, Point2};
use facegrowth_core::geometry::SimilarityTransform;
use facegrowth_core::synthgen::{generate, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sample_cephalograms() -> Vec<Cephalogram> {
    let cfg = SynthConfig {
        n_patients: 5,
        seed: 21,
        ..SynthConfig::default()
    };
    generate(&cfg, &LandmarkSchema::default()).unwrap().cohort.cephalograms().cloned().collect()
}

fn random_transform(rng: &mut ChaCha8Rng) -> SimilarityTransform {
    SimilarityTransform::new(
        rng.gen_range(0.2..5.0),
        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
        Point2::new(rng.gen_range(-1000.0..1000.0), rng.gen_range(-1000.0..1000.0)),
    )
    .unwrap()
}

#[test]
fn angles_survive_similarity_transforms() {
    let cephs = sample_cephalograms();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..1000 {
        let ceph = &cephs[i % cephs.len()];
        let t = random_transform(&mut rng);
        let moved = t.apply_cephalogram(ceph);
        assert!((sn_mp(ceph).unwrap() - sn_mp(&moved).unwrap()).abs() < 1e-9);
        assert!((fa(ceph).unwrap() - fa(&moved).unwrap()).abs() < 1e-9);
        let expected = pn_an(ceph).unwrap() * t.scale;
        assert!((pn_an(&moved).unwrap() - expected).abs() < 1e-9 * t.scale.max(1.0));
    }
}

#[test]
fn pn_an_scales_linearly() {
    let cephs = sample_cephalograms();
    let ceph = cephs.iter().max_by(|a, b| pn_an(a).unwrap().abs().total_cmp(&pn_an(b).unwrap().abs())).unwrap();
    let base = pn_an(ceph).unwrap();
    assert!(base.abs() > 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let s = rng.gen_range(0.1..10.0);
        let scaled = SimilarityTransform::new(s, 0.0, Point2::ORIGIN).unwrap().apply_cephalogram(ceph);
        let v = pn_an(&scaled).unwrap();
        assert!(((v - s * base) / (s * base)).abs() < 1e-12);
    }
    // the hazard: a twice-as-large radiograph doubles PN-AN but leaves the angles alone
    let doubled = SimilarityTransform::new(2.0, 0.0, Point2::ORIGIN).unwrap().apply_cephalogram(ceph);
    assert!((pn_an(&doubled).unwrap() - 2.0 * base).abs() < 1e-12 * base.abs());
    assert_eq!(sn_mp(&doubled).unwrap().to_bits(), sn_mp(ceph).unwrap().to_bits());
}

#[test]
fn panel_scale_invariant_entries_do_not_move() {
    let panel = MeasurementPanel::default();
    let cephs = sample_cephalograms();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for ceph in &cephs {
        let t = random_transform(&mut rng);
        let a = measure_panel(ceph, &panel).unwrap();
        let b = measure_panel(&t.apply_cephalogram(ceph), &panel).unwrap();
        for ((m, x), y) in panel.entries.iter().zip(&a.values).zip(&b.values) {
            if m.formula.scale_invariant() {
                assert!((x - y).abs() < 1e-8, "{} moved: {x} vs {y}", m.name);
            }
        }
    }
}
