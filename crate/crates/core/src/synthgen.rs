//! Synthetic longitudinal growth cohorts.
//!
//! Each patient starts from a perturbed template face. With age the face is
//! enlarged about Sella and the chin landmarks drift along a patient-specific
//! direction. The total 9→18 chin displacement `T` is drawn first; the 9→12
//! increment is `s·f·T + (1−s)·f·R` with `R` an independent draw of the same
//! law, `f = 1/3` and `s` the class signal, and the remainder `T − d₉₁₂` is
//! split evenly over 12→15 and 15→18. Every cephalogram is then placed with
//! the patient's image scale, its own rotation and translation, and pixel
//! noise.

use std::collections::BTreeMap;

use facegrowth_models::rng::stream;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{Cephalogram, Cohort, LandmarkName, LandmarkSchema, PatientSeries, Point2, Stage};
use crate::error::{CoreError, Result};
use crate::geometry::SimilarityTransform;

/// Template face in millimetre-like units: Sella at the origin, anterior +x, superior +y.
pub const TEMPLATE: [(&str, f64, f64); 20] = [
    ("Sella", 0.0, 0.0),
    ("Nasion", 68.0, 12.0),
    ("Basion", -5.0, -45.0),
    ("Porion", -25.0, -20.0),
    ("Orbitale", 50.0, -8.0),
    ("Pterygomaxillare", 25.0, -35.0),
    ("PointA", 65.0, -50.0),
    ("Pogonion", 74.0, -105.0),
    ("Gnathion", 66.0, -112.0),
    ("Menton", 52.0, -115.0),
    ("GonionInferior", -10.0, -85.0),
    ("Articulare", -12.0, -30.0),
    ("GonionPosterior", -15.0, -75.0),
    ("PosteriorNasalSpine", 15.0, -42.0),
    ("AnteriorNasalSpine", 72.0, -42.0),
    ("PointB", 66.0, -88.0),
    ("Condylion", -8.0, -22.0),
    ("Glabella", 70.0, 25.0),
    ("SoftPogonion", 86.0, -106.0),
    ("Ramus", -12.0, -55.0),
];

/// Landmarks carried by the chin drift, with their share of the displacement.
pub const CHIN_LANDMARKS: [(&str, f64); 5] = [
    ("Pogonion", 1.0),
    ("Gnathion", 1.0),
    ("Menton", 1.0),
    ("PointB", 0.6),
    ("SoftPogonion", 1.0),
];

/// Template units to pixels before the image scale is applied.
pub const PIXELS_PER_UNIT: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgeModel {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl AgeModel {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.std == 0.0 {
            return self.mean.clamp(self.min, self.max);
        }
        let normal = Normal::new(self.mean, self.std).expect("validated std");
        for _ in 0..10_000 {
            let a = normal.sample(rng);
            if a >= self.min && a <= self.max {
                return a;
            }
        }
        self.mean.clamp(self.min, self.max)
    }
}

pub fn default_age_models() -> BTreeMap<Stage, AgeModel> {
    BTreeMap::from([
        (Stage::S9, AgeModel { mean: 9.06, std: 0.45, min: 6.00, max: 10.92 }),
        (Stage::S12, AgeModel { mean: 12.07, std: 0.39, min: 10.00, max: 13.75 }),
        (Stage::S15, AgeModel { mean: 15.0, std: 0.6, min: 13.0, max: 17.0 }),
        (Stage::S18, AgeModel { mean: 17.41, std: 1.71, min: 15.00, max: 28.42 }),
    ])
}

/// Prototype trajectories, ordered horizontal, mixed, vertical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthModel {
    pub weights: [f64; 3],
    /// Chin drift direction per prototype, degrees from +x (anterior).
    pub prototype_angles_deg: [f64; 3],
    pub angle_spread_deg: f64,
    /// 9→18 chin displacement length, template units.
    pub magnitude_mean: f64,
    pub magnitude_std: f64,
    /// Uniform enlargement about Sella per year past age 9.
    pub enlargement_per_year: f64,
}

impl Default for GrowthModel {
    fn default() -> Self {
        Self {
            weights: [0.25, 0.5, 0.25],
            prototype_angles_deg: [-20.0, -50.0, -80.0],
            angle_spread_deg: 10.0,
            magnitude_mean: 8.0,
            magnitude_std: 2.0,
            enlargement_per_year: 0.01,
        }
    }
}

impl GrowthModel {
    /// No drift and no enlargement.
    pub fn none() -> Self {
        Self {
            magnitude_mean: 0.0,
            magnitude_std: 0.0,
            enlargement_per_year: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Placement {
    /// Scale from `scale_levels`, rotation uniform in ±`max_rotation_deg`,
    /// translation uniform in ±`max_translation` pixels per axis.
    Random { max_rotation_deg: f64, max_translation: f64 },
    /// Scale only: no rotation or translation.
    Identity,
}

impl Default for Placement {
    fn default() -> Self {
        Placement::Random {
            max_rotation_deg: 10.0,
            max_translation: 200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub seed: u64,
    pub stage_age_models: BTreeMap<Stage, AgeModel>,
    pub scale_levels: Vec<f64>,
    pub landmark_noise_std: f64,
    /// Per-landmark std of each patient's deviation from the template, template units.
    pub shape_variation_std: f64,
    /// Relative std of each patient's overall face size.
    pub size_variation_std: f64,
    pub growth_model: GrowthModel,
    pub class_signal: f64,
    pub placement: Placement,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_patients: 639,
            seed: 0,
            stage_age_models: default_age_models(),
            scale_levels: vec![1.0, 1.3, 1.6, 2.0],
            landmark_noise_std: 0.5,
            shape_variation_std: 2.0,
            size_variation_std: 0.05,
            growth_model: GrowthModel::default(),
            class_signal: 0.5,
            placement: Placement::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::InvalidConfig(m));
        if self.n_patients == 0 {
            return bad("n_patients must be at least 1".into());
        }
        if self.scale_levels.is_empty() || self.scale_levels.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("scale_levels must be non-empty and all positive".into());
        }
        if !(0.0..=1.0).contains(&self.class_signal) {
            return bad(format!("class_signal {} outside [0, 1]", self.class_signal));
        }
        let non_negative = [
            ("landmark_noise_std", self.landmark_noise_std),
            ("shape_variation_std", self.shape_variation_std),
            ("size_variation_std", self.size_variation_std),
            ("magnitude_mean", self.growth_model.magnitude_mean),
            ("magnitude_std", self.growth_model.magnitude_std),
            ("angle_spread_deg", self.growth_model.angle_spread_deg),
            ("enlargement_per_year", self.growth_model.enlargement_per_year),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        let w = &self.growth_model.weights;
        if w.iter().any(|x| !(*x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
            return bad("growth_model.weights must be non-negative with a positive sum".into());
        }
        for stage in Stage::ALL {
            match self.stage_age_models.get(&stage) {
                Some(m) if m.min <= m.mean && m.mean <= m.max && m.std >= 0.0 && m.min > 0.0 => {}
                Some(_) => return bad(format!("age model for stage {stage} is inconsistent")),
                None => return bad(format!("age model for stage {stage} missing")),
            }
        }
        if let Placement::Random {
            max_rotation_deg,
            max_translation,
        } = self.placement
        {
            if !(max_rotation_deg >= 0.0 && max_translation >= 0.0) {
                return bad("placement ranges must be non-negative".into());
            }
        }
        Ok(())
    }
}

/// Per-patient generative parameters, kept for diagnostics and tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientTruth {
    pub patient_id: String,
    /// 0 horizontal, 1 mixed, 2 vertical.
    pub prototype: usize,
    pub direction_deg: f64,
    /// Cumulative chin displacement at each stage, template units.
    pub displacement: BTreeMap<Stage, Point2>,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCohort {
    pub cohort: Cohort,
    pub truth: Vec<PatientTruth>,
}

fn template_for(schema: &LandmarkSchema) -> Result<Vec<Point2>> {
    schema
        .names()
        .iter()
        .map(|n| {
            TEMPLATE
                .iter()
                .find(|t| t.0 == n.as_str())
                .map(|t| Point2::new(t.1, t.2))
                .ok_or_else(|| CoreError::InvalidConfig(format!("no template position for landmark `{n}`")))
        })
        .collect()
}

fn choose(weights: &[f64; 3], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

fn gaussian(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    if std == 0.0 {
        0.0
    } else {
        Normal::new(0.0, std).expect("validated std").sample(rng)
    }
}

fn magnitude(g: &GrowthModel, rng: &mut ChaCha8Rng) -> f64 {
    (g.magnitude_mean + gaussian(rng, g.magnitude_std)).max(0.0)
}

fn patient_id(index: usize, n: usize) -> String {
    let width = n.to_string().len().max(4);
    format!("P{:0width$}", index + 1)
}

fn generate_patient(
    config: &SynthConfig,
    schema: &LandmarkSchema,
    template: &[Point2],
    index: usize,
) -> (PatientSeries, PatientTruth) {
    let mut rng = stream(config.seed, &[index as u64]);
    let g = &config.growth_model;
    let id = patient_id(index, config.n_patients);
    let level = rng.gen_range(0..config.scale_levels.len());
    let scale = config.scale_levels[level];
    let study = format!("study{}", level + 1);

    let size = (1.0 + gaussian(&mut rng, config.size_variation_std)).max(0.5);
    let base: Vec<Point2> = template
        .iter()
        .map(|p| {
            let dx = gaussian(&mut rng, config.shape_variation_std);
            let dy = gaussian(&mut rng, config.shape_variation_std);
            p.scale(size).add(Point2::new(dx, dy))
        })
        .collect();

    let prototype = choose(&g.weights, &mut rng);
    let direction_deg = g.prototype_angles_deg[prototype] + gaussian(&mut rng, g.angle_spread_deg);
    let (sin, cos) = direction_deg.to_radians().sin_cos();
    let total = Point2::new(cos, sin).scale(magnitude(g, &mut rng));
    let r_angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = Point2::new(r_angle.cos(), r_angle.sin()).scale(magnitude(g, &mut rng));
    let f = 1.0 / 3.0;
    let s = config.class_signal;
    let first = total.scale(s * f).add(r.scale((1.0 - s) * f));
    let rest = total.sub(first);
    let displacement = BTreeMap::from([
        (Stage::S9, Point2::ORIGIN),
        (Stage::S12, first),
        (Stage::S15, first.add(rest.scale(0.5))),
        (Stage::S18, total),
    ]);

    let chin: Vec<f64> = schema
        .names()
        .iter()
        .map(|n| CHIN_LANDMARKS.iter().find(|c| c.0 == n.as_str()).map_or(0.0, |c| c.1))
        .collect();
    let sella = schema.index_of("Sella").expect("schema has Sella");

    let mut by_stage = BTreeMap::new();
    for stage in Stage::ALL {
        let age = config.stage_age_models[&stage].sample(&mut rng);
        let (rotation, translation) = match config.placement {
            Placement::Identity => (0.0, Point2::ORIGIN),
            Placement::Random {
                max_rotation_deg,
                max_translation,
            } => {
                let mut uniform = |half: f64| if half > 0.0 { rng.gen_range(-half..=half) } else { 0.0 };
                let rot = uniform(max_rotation_deg).to_radians();
                (rot, Point2::new(uniform(max_translation), uniform(max_translation)))
            }
        };
        let placement = SimilarityTransform {
            scale: scale * PIXELS_PER_UNIT,
            rotation,
            translation,
        };
        let grow = 1.0 + g.enlargement_per_year * (age - 9.0).max(0.0);
        let origin = base[sella];
        let shift = displacement[&stage];
        let mut landmarks = BTreeMap::new();
        for (i, name) in schema.names().iter().enumerate() {
            let p = origin.add(base[i].sub(origin).scale(grow)).add(shift.scale(chin[i]));
            let placed = placement.apply(p);
            let noisy = Point2::new(
                placed.x + gaussian(&mut rng, config.landmark_noise_std),
                placed.y + gaussian(&mut rng, config.landmark_noise_std),
            );
            landmarks.insert(LandmarkName::new(name.as_str()), noisy);
        }
        by_stage.insert(
            stage,
            Cephalogram {
                patient_id: id.clone(),
                study: study.clone(),
                stage,
                age_years: age,
                landmarks,
            },
        );
    }
    let truth = PatientTruth {
        patient_id: id.clone(),
        prototype,
        direction_deg,
        displacement,
        scale,
    };
    (PatientSeries { patient_id: id, by_stage }, truth)
}

/// Generate a cohort; patients are independent streams, so the result does
/// not depend on the rayon thread count.
pub fn generate(config: &SynthConfig, schema: &LandmarkSchema) -> Result<SynthCohort> {
    config.validate()?;
    let template = template_for(schema)?;
    let (series, truth): (Vec<_>, Vec<_>) = (0..config.n_patients)
        .into_par_iter()
        .map(|i| generate_patient(config, schema, &template, i))
        .unzip();
    Ok(SynthCohort {
        cohort: Cohort::new(series, schema.clone())?,
        truth,
    })
}
