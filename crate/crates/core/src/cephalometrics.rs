//! Cephalometric angles, distances and ratios computed from raw landmarks.
//!
//! Angles use `atan2(|a×b|, a·b)`, which equals the arccosine of the
//! normalized dot product but keeps full precision near 0° and 180°.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{Cephalogram, Cohort, Point2, Stage};
use crate::error::{CoreError, Result};

pub const SN_MP: &str = "SN-MP";
pub const FA: &str = "FA";
pub const PN_AN: &str = "PN-AN";

/// Angle in degrees between directed vectors p1→p2 and q1→q2, in [0, 180].
pub fn line_angle(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> Result<f64> {
    let a = p2.sub(p1);
    let b = q2.sub(q1);
    if a.norm() == 0.0 || b.norm() == 0.0 {
        return Err(CoreError::ZeroLengthVector);
    }
    Ok(a.cross(b).abs().atan2(a.dot(b)).to_degrees())
}

/// Undirected-line angle: folds [0, 180] onto [0, 90].
pub fn fold(deg: f64) -> f64 {
    deg.min(180.0 - deg)
}

fn named(name: &str, r: Result<f64>) -> Result<f64> {
    r.map_err(|e| CoreError::Measurement {
        name: name.to_string(),
        source: Box::new(e),
    })
}

/// Sella–Nasion vs GonionInferior–Menton, folded.
pub fn sn_mp(ceph: &Cephalogram) -> Result<f64> {
    Formula::folded("Sella", "Nasion", "GonionInferior", "Menton").eval(ceph)
}

/// Basion–Nasion vs Pterygomaxillare–Gnathion, folded.
pub fn fa(ceph: &Cephalogram) -> Result<f64> {
    Formula::folded("Basion", "Nasion", "Pterygomaxillare", "Gnathion").eval(ceph)
}

/// Signed distance of Pogonion minus that of PointA from the
/// Nasion-perpendicular to the Frankfort line, positive anteriorly.
pub fn pn_an(ceph: &Cephalogram) -> Result<f64> {
    Formula::PnAn {
        porion: "Porion".into(),
        orbitale: "Orbitale".into(),
        nasion: "Nasion".into(),
        point_a: "PointA".into(),
        pogonion: "Pogonion".into(),
    }
    .eval(ceph)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Formula {
    /// Angle between lines p1→p2 and q1→q2, folded to [0, 90] when `fold`.
    LineAngle {
        p1: String,
        p2: String,
        q1: String,
        q2: String,
        fold: bool,
    },
    /// Angle at `vertex` between rays to `a` and `b`, in [0, 180].
    VertexAngle { a: String, vertex: String, b: String },
    /// ‖a1 − a2‖ / ‖b1 − b2‖.
    DistanceRatio {
        a1: String,
        a2: String,
        b1: String,
        b2: String,
    },
    PnAn {
        porion: String,
        orbitale: String,
        nasion: String,
        point_a: String,
        pogonion: String,
    },
}

impl Formula {
    pub fn folded(p1: &str, p2: &str, q1: &str, q2: &str) -> Self {
        Formula::LineAngle {
            p1: p1.into(),
            p2: p2.into(),
            q1: q1.into(),
            q2: q2.into(),
            fold: true,
        }
    }

    pub fn vertex(a: &str, vertex: &str, b: &str) -> Self {
        Formula::VertexAngle {
            a: a.into(),
            vertex: vertex.into(),
            b: b.into(),
        }
    }

    pub fn ratio(a1: &str, a2: &str, b1: &str, b2: &str) -> Self {
        Formula::DistanceRatio {
            a1: a1.into(),
            a2: a2.into(),
            b1: b1.into(),
            b2: b2.into(),
        }
    }

    pub fn landmarks(&self) -> Vec<&str> {
        match self {
            Formula::LineAngle { p1, p2, q1, q2, .. } => vec![p1, p2, q1, q2],
            Formula::VertexAngle { a, vertex, b } => vec![a, vertex, b],
            Formula::DistanceRatio { a1, a2, b1, b2 } => vec![a1, a2, b1, b2],
            Formula::PnAn {
                porion,
                orbitale,
                nasion,
                point_a,
                pogonion,
            } => vec![porion, orbitale, nasion, point_a, pogonion],
        }
        .into_iter()
        .map(String::as_str)
        .collect()
    }

    /// Whether the value is invariant to image scale (angles and ratios).
    pub fn scale_invariant(&self) -> bool {
        !matches!(self, Formula::PnAn { .. })
    }

    pub fn eval(&self, ceph: &Cephalogram) -> Result<f64> {
        let p = |n: &str| ceph.landmark(n);
        match self {
            Formula::LineAngle { p1, p2, q1, q2, fold: f } => {
                let deg = line_angle(p(p1)?, p(p2)?, p(q1)?, p(q2)?)?;
                Ok(if *f { fold(deg) } else { deg })
            }
            Formula::VertexAngle { a, vertex, b } => {
                let v = p(vertex)?;
                line_angle(v, p(a)?, v, p(b)?)
            }
            Formula::DistanceRatio { a1, a2, b1, b2 } => {
                let den = p(b1)?.distance(p(b2)?);
                if den == 0.0 {
                    return Err(CoreError::ZeroLengthVector);
                }
                Ok(p(a1)?.distance(p(a2)?) / den)
            }
            Formula::PnAn {
                porion,
                orbitale,
                nasion,
                point_a,
                pogonion,
            } => {
                let axis = p(orbitale)?.sub(p(porion)?);
                let len = axis.norm();
                if len == 0.0 {
                    return Err(CoreError::CoincidentLandmarks(porion.clone(), orbitale.clone()));
                }
                let u = axis.scale(1.0 / len);
                let n = p(nasion)?;
                let pn = p(pogonion)?.sub(n).dot(u);
                let an = p(point_a)?.sub(n).dot(u);
                Ok(pn - an)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Measurement {
    pub name: String,
    pub formula: Formula,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementPanel {
    pub entries: Vec<Measurement>,
}

impl MeasurementPanel {
    pub fn new(entries: Vec<Measurement>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.name.as_str()) {
                return Err(CoreError::InvalidConfig(format!("duplicate measurement `{}`", e.name)));
            }
        }
        for required in [SN_MP, FA, PN_AN] {
            if !seen.contains(required) {
                return Err(CoreError::InvalidConfig(format!("panel lacks `{required}`")));
            }
        }
        Ok(Self { entries })
    }

    /// SN-MP, FA and PN-AN only.
    pub fn central() -> Self {
        let mut p = Self::default();
        p.entries.truncate(3);
        p
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }
}

impl Default for MeasurementPanel {
    fn default() -> Self {
        let m = |name: &str, formula: Formula| Measurement {
            name: name.to_string(),
            formula,
        };
        let entries = vec![
            m(SN_MP, Formula::folded("Sella", "Nasion", "GonionInferior", "Menton")),
            m(FA, Formula::folded("Basion", "Nasion", "Pterygomaxillare", "Gnathion")),
            m(
                PN_AN,
                Formula::PnAn {
                    porion: "Porion".into(),
                    orbitale: "Orbitale".into(),
                    nasion: "Nasion".into(),
                    point_a: "PointA".into(),
                    pogonion: "Pogonion".into(),
                },
            ),
            m("SNA", Formula::vertex("Sella", "Nasion", "PointA")),
            m("SNPog", Formula::vertex("Sella", "Nasion", "Pogonion")),
            m("NSBa", Formula::vertex("Nasion", "Sella", "Basion")),
            m("N-A-Pog", Formula::vertex("Nasion", "PointA", "Pogonion")),
            m("FMA", Formula::folded("Porion", "Orbitale", "GonionInferior", "Menton")),
            m("Y-axis", Formula::folded("Sella", "Gnathion", "Porion", "Orbitale")),
            m("SN-FH", Formula::folded("Sella", "Nasion", "Porion", "Orbitale")),
            m("BaN-FH", Formula::folded("Basion", "Nasion", "Porion", "Orbitale")),
            m("PTM-A-FH", Formula::folded("Pterygomaxillare", "PointA", "Porion", "Orbitale")),
            m("S-Go/N-Me", Formula::ratio("Sella", "GonionInferior", "Nasion", "Menton")),
            m("Go-Me/S-N", Formula::ratio("GonionInferior", "Menton", "Sella", "Nasion")),
            m("Pog-Gn-Me", Formula::vertex("Pogonion", "Gnathion", "Menton")),
        ];
        Self { entries }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementVector {
    pub patient_id: String,
    pub stage: Stage,
    /// Values in panel order.
    pub values: Vec<f64>,
}

pub fn measure_panel(ceph: &Cephalogram, panel: &MeasurementPanel) -> Result<MeasurementVector> {
    let values = panel
        .entries
        .iter()
        .map(|e| named(&e.name, e.formula.eval(ceph)))
        .collect::<Result<Vec<_>>>()?;
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(CoreError::Measurement {
            name: panel.entries[i].name.clone(),
            source: Box::new(CoreError::ZeroLengthVector),
        });
    }
    Ok(MeasurementVector {
        patient_id: ceph.patient_id.clone(),
        stage: ceph.stage,
        values,
    })
}

/// Measure every cephalogram, in cohort order.
pub fn measure_cohort(cohort: &Cohort, panel: &MeasurementPanel) -> Result<Vec<MeasurementVector>> {
    let cephs: Vec<&Cephalogram> = cohort.cephalograms().collect();
    cephs.par_iter().map(|c| measure_panel(c, panel)).collect()
}
