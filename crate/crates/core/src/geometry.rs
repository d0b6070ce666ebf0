//! Shape alignment: generalized Procrustes, the Sella–Nasion frame, and
//! centroid-size diagnostics for detecting mixed image scales.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{Cephalogram, Cohort, LandmarkSchema, Point2, Stage};
use crate::error::{CoreError, Result};

/// Landmark coordinates in schema order for one cephalogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeMatrix {
    pub patient_id: String,
    pub stage: Stage,
    pub points: Vec<Point2>,
}

impl ShapeMatrix {
    pub fn from_cephalogram(ceph: &Cephalogram, schema: &LandmarkSchema) -> Result<Self> {
        Ok(Self {
            patient_id: ceph.patient_id.clone(),
            stage: ceph.stage,
            points: ceph.points(schema)?,
        })
    }

    pub fn label(&self) -> String {
        format!("{}@S{}", self.patient_id, self.stage)
    }

    pub fn centroid(&self) -> Point2 {
        centroid(&self.points)
    }

    /// Flattened `x0, y0, x1, y1, ...`.
    pub fn flatten(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| [p.x, p.y]).collect()
    }
}

pub fn centroid(points: &[Point2]) -> Point2 {
    let n = points.len() as f64;
    let s = points.iter().fold(Point2::ORIGIN, |a, &p| a.add(p));
    Point2::new(s.x / n, s.y / n)
}

/// Σ‖pᵢ − centroid‖ — the size measure used throughout (not root-sum-square).
pub fn centroid_size(points: &[Point2]) -> f64 {
    let c = centroid(points);
    points.iter().map(|p| p.distance(c)).sum()
}

fn rotate(p: Point2, cos: f64, sin: f64) -> Point2 {
    Point2::new(cos * p.x - sin * p.y, sin * p.x + cos * p.y)
}

/// x ↦ scale·R(θ)·x + translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: f64,
    pub translation: Point2,
}

impl SimilarityTransform {
    pub const IDENTITY: SimilarityTransform = SimilarityTransform {
        scale: 1.0,
        rotation: 0.0,
        translation: Point2::ORIGIN,
    };

    pub fn new(scale: f64, rotation: f64, translation: Point2) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) || !rotation.is_finite() || !translation.is_finite() {
            return Err(CoreError::InvalidConfig(format!(
                "similarity transform needs a positive finite scale, got {scale}"
            )));
        }
        Ok(Self { scale, rotation, translation })
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let (sin, cos) = self.rotation.sin_cos();
        rotate(p, cos, sin).scale(self.scale).add(self.translation)
    }

    pub fn apply_cephalogram(&self, ceph: &Cephalogram) -> Cephalogram {
        ceph.map_points(|p| self.apply(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    /// Radians in (−π, π].
    pub angle: f64,
    /// Set when Σ cross and Σ dot both vanish and any angle is optimal.
    pub degenerate: bool,
}

/// Angle θ minimizing Σ‖R(θ)aᵢ − bᵢ‖² for centered `a`, `b`.
pub fn optimal_rotation(a: &[Point2], b: &[Point2]) -> Rotation {
    let (mut cross, mut dot) = (0.0, 0.0);
    for (p, q) in a.iter().zip(b) {
        cross += p.cross(*q);
        dot += p.dot(*q);
    }
    if cross == 0.0 && dot == 0.0 {
        return Rotation { angle: 0.0, degenerate: true };
    }
    Rotation {
        angle: cross.atan2(dot),
        degenerate: false,
    }
}

/// Translate to the origin and scale to Σ‖pᵢ‖ = 1.
pub fn normalize(shape: &ShapeMatrix) -> Result<ShapeMatrix> {
    let c = shape.centroid();
    let centered: Vec<Point2> = shape.points.iter().map(|p| p.sub(c)).collect();
    let size: f64 = centered.iter().map(|p| p.norm()).sum();
    if !(size > 0.0) || !size.is_finite() {
        return Err(CoreError::DegenerateShape(shape.label()));
    }
    Ok(ShapeMatrix {
        points: centered.iter().map(|p| p.scale(1.0 / size)).collect(),
        ..shape.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpaOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for GpaOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub shapes: Vec<ShapeMatrix>,
    pub mean: Vec<Point2>,
    /// Σ over shapes and landmarks of ‖shape − mean‖².
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Shapes whose final rotation fit was ambiguous.
    pub degenerate_rotations: usize,
}

fn mean_shape(shapes: &[ShapeMatrix]) -> Vec<Point2> {
    let k = shapes[0].points.len();
    let n = shapes.len() as f64;
    (0..k)
        .map(|i| {
            let s = shapes.iter().fold(Point2::ORIGIN, |a, sh| a.add(sh.points[i]));
            Point2::new(s.x / n, s.y / n)
        })
        .collect()
}

fn residual(shapes: &[ShapeMatrix], mean: &[Point2]) -> f64 {
    shapes
        .iter()
        .map(|s| s.points.iter().zip(mean).map(|(p, m)| p.sub(*m).dot(p.sub(*m))).sum::<f64>())
        .sum()
}

/// Generalized Procrustes alignment with rotation-only fits to the running
/// mean. The first shape (after normalization) seeds the mean, which fixes
/// the global orientation of the result.
pub fn procrustes_align(shapes: &[ShapeMatrix], opts: &GpaOptions) -> Result<Alignment> {
    if shapes.is_empty() {
        return Err(CoreError::NotEnoughData("procrustes_align needs at least one shape".into()));
    }
    let k = shapes[0].points.len();
    if let Some(bad) = shapes.iter().find(|s| s.points.len() != k) {
        return Err(CoreError::InvalidConfig(format!(
            "shape {} has {} points, expected {k}",
            bad.label(),
            bad.points.len()
        )));
    }
    let base: Vec<ShapeMatrix> = shapes.par_iter().map(normalize).collect::<Result<_>>()?;
    let mut mean = base[0].points.clone();
    let mut current = base.clone();
    let mut iterations = 0;
    let mut converged = false;
    let mut degenerate = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let fitted: Vec<(ShapeMatrix, bool)> = base
            .par_iter()
            .map(|s| {
                let rot = optimal_rotation(&s.points, &mean);
                let (sin, cos) = rot.angle.sin_cos();
                let points = s.points.iter().map(|&p| rotate(p, cos, sin)).collect();
                (ShapeMatrix { points, ..s.clone() }, rot.degenerate)
            })
            .collect();
        degenerate = fitted.iter().filter(|f| f.1).count();
        current = fitted.into_iter().map(|f| f.0).collect();
        // keep the mean from drifting in orientation between iterations
        let next = mean_shape(&current);
        let drift = optimal_rotation(&next, &mean);
        let (sin, cos) = drift.angle.sin_cos();
        for s in &mut current {
            for p in &mut s.points {
                *p = rotate(*p, cos, sin);
            }
        }
        let next: Vec<Point2> = next.iter().map(|&p| rotate(p, cos, sin)).collect();
        let shift = next.iter().zip(&mean).map(|(a, b)| a.distance(*b)).fold(0.0, f64::max);
        mean = next;
        if shift < opts.tolerance {
            converged = true;
            break;
        }
    }
    Ok(Alignment {
        residual: residual(&current, &mean),
        shapes: current,
        mean,
        iterations,
        converged,
        degenerate_rotations: degenerate,
    })
}

/// Rigid motion putting Sella at the origin and Nasion on the positive y axis.
pub fn transform_to_sn_frame(ceph: &Cephalogram, schema: &LandmarkSchema) -> Result<ShapeMatrix> {
    let s = ceph.landmark("Sella")?;
    let n = ceph.landmark("Nasion")?;
    let v = n.sub(s);
    let d = v.norm();
    if !(d > 0.0) {
        return Err(CoreError::CoincidentLandmarks("Sella".into(), "Nasion".into()));
    }
    // rotation taking v to (0, d): cos = vy/d, sin = vx/d
    let (cos, sin) = (v.y / d, v.x / d);
    let mut points = Vec::with_capacity(schema.len());
    for name in schema.names() {
        let p = match name.as_str() {
            "Sella" => Point2::ORIGIN,
            "Nasion" => Point2::new(0.0, d),
            other => rotate(ceph.landmark(other)?.sub(s), cos, sin),
        };
        points.push(p);
    }
    Ok(ShapeMatrix {
        patient_id: ceph.patient_id.clone(),
        stage: ceph.stage,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeRecord {
    pub patient_id: String,
    pub stage: Stage,
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let bins = bins.max(1);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let mut counts = vec![0; bins];
        for &v in values {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Self { lo, width, counts }
    }
}

/// A group of sizes separated from its neighbours by a wide gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeCluster {
    pub center: f64,
    pub count: usize,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkCloud {
    pub landmark: String,
    pub points: Vec<Point2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleDiagnostics {
    pub sizes: Vec<SizeRecord>,
    pub histogram: Histogram,
    /// Clusters in ascending size order; more than one indicates mixed scales.
    pub clusters: Vec<SizeCluster>,
    pub clouds: Vec<LandmarkCloud>,
}

impl ScaleDiagnostics {
    /// Ratios of consecutive cluster centers.
    pub fn mode_ratios(&self) -> Vec<f64> {
        self.clusters.windows(2).map(|w| w[1].center / w[0].center).collect()
    }
}

pub const CLOUD_LANDMARKS: [&str; 5] = ["Sella", "Nasion", "PointA", "Pogonion", "Menton"];

/// Split sorted sizes wherever consecutive log-sizes differ by more than `log_gap`.
pub fn cluster_sizes(sizes: &[f64], log_gap: f64) -> Vec<SizeCluster> {
    let mut sorted: Vec<f64> = sizes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut clusters = Vec::new();
    let mut start = 0;
    for i in 1..=sorted.len() {
        if i == sorted.len() || sorted[i].ln() - sorted[i - 1].ln() > log_gap {
            let group = &sorted[start..i];
            if !group.is_empty() {
                clusters.push(SizeCluster {
                    center: group[group.len() / 2],
                    count: group.len(),
                    min: group[0],
                    max: group[group.len() - 1],
                });
            }
            start = i;
        }
    }
    clusters
}

pub fn scale_diagnostics(cohort: &Cohort, bins: usize, log_gap: f64) -> Result<ScaleDiagnostics> {
    if cohort.is_empty() {
        return Err(CoreError::EmptyCohort);
    }
    let mut sizes = Vec::new();
    for c in cohort.cephalograms() {
        sizes.push(SizeRecord {
            patient_id: c.patient_id.clone(),
            stage: c.stage,
            size: centroid_size(&c.points(&cohort.schema)?),
        });
    }
    let values: Vec<f64> = sizes.iter().map(|s| s.size).collect();
    let clouds = CLOUD_LANDMARKS
        .iter()
        .map(|name| {
            Ok(LandmarkCloud {
                landmark: name.to_string(),
                points: cohort.cephalograms().map(|c| c.landmark(name)).collect::<Result<_>>()?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ScaleDiagnostics {
        histogram: Histogram::new(&values, bins),
        clusters: cluster_sizes(&values, log_gap),
        sizes,
        clouds,
    })
}
