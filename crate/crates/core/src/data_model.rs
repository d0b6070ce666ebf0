//! Longitudinal cephalometric records and the landmark CSV format.
//!
//! CSV contract: UTF-8, header `patient_id,study,stage,age_years,landmark,x,y`,
//! stage one of `9,12,15,18`, one landmark per row. Rows are grouped into
//! cephalograms by `(patient_id, stage)`; a patient enters the cohort only if
//! the S9, S12 and S18 cephalograms all pass validation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub const CSV_HEADER: [&str; 7] = ["patient_id", "study", "stage", "age_years", "landmark", "x", "y"];

/// Landmarks every schema must contain; the three growth measurements use them.
pub const REQUIRED_LANDMARKS: [&str; 11] = [
    "Sella",
    "Nasion",
    "Basion",
    "Porion",
    "Orbitale",
    "Pterygomaxillare",
    "PointA",
    "Pogonion",
    "Gnathion",
    "Menton",
    "GonionInferior",
];

/// Placeholder names completing the default 20-landmark schema.
pub const DEFAULT_AUXILIARY_LANDMARKS: [&str; 9] = [
    "Articulare",
    "GonionPosterior",
    "PosteriorNasalSpine",
    "AnteriorNasalSpine",
    "PointB",
    "Condylion",
    "Glabella",
    "SoftPogonion",
    "Ramus",
];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LandmarkName(pub String);

impl LandmarkName {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LandmarkName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Ordered landmark names; the order fixes coordinate layout in shape matrices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LandmarkSchema {
    names: Vec<LandmarkName>,
}

impl LandmarkSchema {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let names: Vec<LandmarkName> = names.iter().map(|n| LandmarkName::new(n.as_ref())).collect();
        let mut seen = BTreeSet::new();
        for n in &names {
            if n.0.is_empty() || n.0.contains(',') {
                return Err(CoreError::Schema(format!("invalid landmark name `{n}`")));
            }
            if !seen.insert(n.clone()) {
                return Err(CoreError::Schema(format!("duplicate landmark `{n}`")));
            }
        }
        for req in REQUIRED_LANDMARKS {
            if !seen.contains(&LandmarkName::new(req)) {
                return Err(CoreError::Schema(format!("required landmark `{req}` missing")));
            }
        }
        Ok(Self { names })
    }

    /// The 11 required names followed by the given auxiliary names.
    pub fn with_auxiliary<S: AsRef<str>>(auxiliary: &[S]) -> Result<Self> {
        let mut all: Vec<String> = REQUIRED_LANDMARKS.iter().map(|s| s.to_string()).collect();
        all.extend(auxiliary.iter().map(|s| s.as_ref().to_string()));
        Self::new(&all)
    }

    pub fn names(&self) -> &[LandmarkName] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n.0 == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index_of(name).is_some()
    }
}

impl Default for LandmarkSchema {
    fn default() -> Self {
        Self::with_auxiliary(&DEFAULT_AUXILIARY_LANDMARKS).expect("default schema is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 2D cross product.
    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Point2) -> f64 {
        self.sub(o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    S9,
    S12,
    S15,
    S18,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::S9, Stage::S12, Stage::S15, Stage::S18];
    /// Stages the prediction pipeline cannot do without.
    pub const MANDATORY: [Stage; 3] = [Stage::S9, Stage::S12, Stage::S18];

    pub fn years(self) -> u32 {
        match self {
            Stage::S9 => 9,
            Stage::S12 => 12,
            Stage::S15 => 15,
            Stage::S18 => 18,
        }
    }

    pub fn from_years(years: u32) -> Option<Stage> {
        match years {
            9 => Some(Stage::S9),
            12 => Some(Stage::S12),
            15 => Some(Stage::S15),
            18 => Some(Stage::S18),
            _ => None,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.years())
    }
}

/// Plausible age range per stage; ages outside only raise warnings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeWindows {
    pub windows: BTreeMap<Stage, (f64, f64)>,
}

impl Default for AgeWindows {
    fn default() -> Self {
        let windows = BTreeMap::from([
            (Stage::S9, (6.00, 10.92)),
            (Stage::S12, (10.00, 13.75)),
            (Stage::S15, (13.00, 17.00)),
            (Stage::S18, (15.00, 28.42)),
        ]);
        Self { windows }
    }
}

impl AgeWindows {
    pub fn contains(&self, stage: Stage, age: f64) -> bool {
        self.windows.get(&stage).map_or(true, |&(lo, hi)| age >= lo && age <= hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cephalogram {
    pub patient_id: String,
    pub study: String,
    pub stage: Stage,
    pub age_years: f64,
    pub landmarks: BTreeMap<LandmarkName, Point2>,
}

impl Cephalogram {
    pub fn landmark(&self, name: &str) -> Result<Point2> {
        self.landmarks
            .get(&LandmarkName::new(name))
            .copied()
            .ok_or_else(|| CoreError::MissingLandmark(name.to_string()))
    }

    /// Coordinates in schema order.
    pub fn points(&self, schema: &LandmarkSchema) -> Result<Vec<Point2>> {
        schema.names().iter().map(|n| self.landmark(n.as_str())).collect()
    }

    /// Apply a point map to every landmark.
    pub fn map_points(&self, f: impl Fn(Point2) -> Point2) -> Cephalogram {
        Cephalogram {
            landmarks: self.landmarks.iter().map(|(k, &p)| (k.clone(), f(p))).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientSeries {
    pub patient_id: String,
    pub by_stage: BTreeMap<Stage, Cephalogram>,
}

impl PatientSeries {
    pub fn get(&self, stage: Stage) -> Option<&Cephalogram> {
        self.by_stage.get(&stage)
    }

    pub fn has_mandatory_stages(&self) -> bool {
        Stage::MANDATORY.iter().all(|s| self.by_stage.contains_key(s))
    }
}

/// Immutable collection of patient series, sorted by patient id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub series: Vec<PatientSeries>,
    pub schema: LandmarkSchema,
}

impl Cohort {
    pub fn new(mut series: Vec<PatientSeries>, schema: LandmarkSchema) -> Result<Self> {
        series.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
        for w in series.windows(2) {
            if w[0].patient_id == w[1].patient_id {
                return Err(CoreError::InvalidConfig(format!("duplicate patient `{}`", w[0].patient_id)));
            }
        }
        for s in &series {
            for c in s.by_stage.values() {
                for name in schema.names() {
                    if !c.landmarks.contains_key(name) {
                        return Err(CoreError::MissingLandmark(name.to_string()));
                    }
                }
            }
        }
        Ok(Self { series, schema })
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn cephalograms(&self) -> impl Iterator<Item = &Cephalogram> {
        self.series.iter().flat_map(|s| s.by_stage.values())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based line numbers of the rows this entry covers.
    pub lines: Vec<u64>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientExclusion {
    pub patient_id: String,
    pub lines: Vec<u64>,
    pub missing_stages: Vec<Stage>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_incorporated: usize,
    pub rejects: Vec<Rejection>,
    pub excluded: Vec<PatientExclusion>,
    pub warnings: Vec<String>,
}

impl IngestReport {
    /// One line per entry, `line N[-M]: reason`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let span = |lines: &[u64]| match (lines.first(), lines.last()) {
            (Some(a), Some(b)) if a != b => format!("lines {a}-{b}"),
            (Some(a), _) => format!("line {a}"),
            _ => "no line".to_string(),
        };
        for r in &self.rejects {
            out.push_str(&format!("{}: {}\n", span(&r.lines), r.reason));
        }
        for e in &self.excluded {
            let stages: Vec<String> = e.missing_stages.iter().map(|s| format!("S{s}")).collect();
            out.push_str(&format!(
                "{}: patient `{}` excluded, missing mandatory stage {}\n",
                span(&e.lines),
                e.patient_id,
                stages.join(", ")
            ));
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

struct RawRow {
    line: u64,
    landmark: String,
    point: Point2,
    study: String,
    age: f64,
}

fn parse_row(record: &csv::StringRecord) -> std::result::Result<(String, Stage, RawRow), String> {
    if record.len() != CSV_HEADER.len() {
        return Err(format!("expected {} columns, found {}", CSV_HEADER.len(), record.len()));
    }
    let field = |i: usize| record.get(i).unwrap_or("").trim();
    let patient = field(0);
    if patient.is_empty() {
        return Err("empty patient_id".into());
    }
    let stage = field(2)
        .parse::<u32>()
        .ok()
        .and_then(Stage::from_years)
        .ok_or_else(|| format!("invalid stage `{}`", field(2)))?;
    let num = |i: usize, what: &str| -> std::result::Result<f64, String> {
        let v: f64 = field(i).parse().map_err(|_| format!("invalid {what} `{}`", field(i)))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("non-finite {what}"))
        }
    };
    let age = num(3, "age_years")?;
    if age <= 0.0 {
        return Err(format!("non-positive age_years `{}`", field(3)));
    }
    let point = Point2::new(num(5, "x")?, num(6, "y")?);
    Ok((
        patient.to_string(),
        stage,
        RawRow {
            line: record.position().map_or(0, |p| p.line()),
            landmark: field(4).to_string(),
            point,
            study: field(1).to_string(),
            age,
        },
    ))
}

/// Parse and validate landmark rows from any reader.
pub fn ingest_reader<R: Read>(reader: R, schema: &LandmarkSchema, ages: &AgeWindows) -> Result<(Cohort, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != CSV_HEADER {
        return Err(CoreError::BadHeader {
            expected: CSV_HEADER.join(","),
            found: found.join(","),
        });
    }

    let mut report = IngestReport::default();
    let mut groups: BTreeMap<(String, Stage), Vec<RawRow>> = BTreeMap::new();
    for record in rdr.records() {
        report.rows_read += 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                report.rejects.push(Rejection {
                    lines: vec![line],
                    reason: format!("malformed row: {e}"),
                });
                continue;
            }
        };
        match parse_row(&record) {
            Ok((patient, stage, row)) => {
                if !schema.contains(&row.landmark) {
                    report.rejects.push(Rejection {
                        lines: vec![row.line],
                        reason: format!("unknown landmark `{}`", row.landmark),
                    });
                    continue;
                }
                groups.entry((patient, stage)).or_default().push(row);
            }
            Err(reason) => report.rejects.push(Rejection {
                lines: vec![record.position().map_or(0, |p| p.line())],
                reason: format!("malformed row: {reason}"),
            }),
        }
    }

    let mut by_patient: BTreeMap<String, (BTreeMap<Stage, Cephalogram>, Vec<u64>)> = BTreeMap::new();
    for ((patient, stage), rows) in groups {
        let mut landmarks = BTreeMap::new();
        let mut kept_lines = Vec::new();
        for row in &rows {
            let name = LandmarkName::new(row.landmark.clone());
            if landmarks.contains_key(&name) {
                report.rejects.push(Rejection {
                    lines: vec![row.line],
                    reason: format!("duplicate landmark `{name}` for patient `{patient}` stage {stage}"),
                });
                continue;
            }
            landmarks.insert(name, row.point);
            kept_lines.push(row.line);
        }
        let first = &rows[0];
        let inconsistent = rows.iter().any(|r| r.study != first.study || r.age != first.age);
        let missing: Vec<&LandmarkName> = schema.names().iter().filter(|n| !landmarks.contains_key(*n)).collect();
        let reason = if inconsistent {
            Some(format!("inconsistent study/age within patient `{patient}` stage {stage}"))
        } else if let Some(req) = missing.iter().find(|n| REQUIRED_LANDMARKS.contains(&n.as_str())) {
            Some(format!("missing required landmark `{req}` for patient `{patient}` stage {stage}"))
        } else {
            missing
                .first()
                .map(|n| format!("missing schema landmark `{n}` for patient `{patient}` stage {stage}"))
        };
        if let Some(reason) = reason {
            report.rejects.push(Rejection {
                lines: kept_lines,
                reason,
            });
            continue;
        }
        if !ages.contains(stage, first.age) {
            report.warnings.push(format!(
                "patient `{patient}` stage {stage}: age {} outside the plausible window",
                first.age
            ));
        }
        let entry = by_patient.entry(patient.clone()).or_default();
        entry.1.extend(kept_lines);
        entry.0.insert(
            stage,
            Cephalogram {
                patient_id: patient,
                study: first.study.clone(),
                stage,
                age_years: first.age,
                landmarks,
            },
        );
    }

    let mut series = Vec::new();
    for (patient_id, (by_stage, mut lines)) in by_patient {
        let missing_stages: Vec<Stage> = Stage::MANDATORY
            .iter()
            .copied()
            .filter(|s| !by_stage.contains_key(s))
            .collect();
        if missing_stages.is_empty() {
            report.rows_incorporated += lines.len();
            series.push(PatientSeries { patient_id, by_stage });
        } else {
            lines.sort_unstable();
            report.excluded.push(PatientExclusion {
                patient_id,
                lines,
                missing_stages,
            });
        }
    }
    for r in &mut report.rejects {
        r.lines.sort_unstable();
    }
    report.rejects.sort_by(|a, b| a.lines.cmp(&b.lines));
    Ok((Cohort::new(series, schema.clone())?, report))
}

pub fn ingest_landmarks(path: &Path, schema: &LandmarkSchema, ages: &AgeWindows) -> Result<(Cohort, IngestReport)> {
    let file = std::fs::File::open(path)?;
    ingest_reader(std::io::BufReader::new(file), schema, ages)
}

/// Write a cohort in the landmark CSV format; patients in id order, stages
/// ascending, landmarks in schema order. Numbers use the shortest
/// representation that parses back to the identical `f64`.
pub fn write_landmarks<W: Write>(cohort: &Cohort, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for s in &cohort.series {
        for (stage, c) in &s.by_stage {
            for name in cohort.schema.names() {
                let p = c.landmark(name.as_str())?;
                w.write_record([
                    c.patient_id.as_str(),
                    c.study.as_str(),
                    &stage.years().to_string(),
                    &c.age_years.to_string(),
                    name.as_str(),
                    &p.x.to_string(),
                    &p.y.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageAgeSummary {
    pub stage: Stage,
    pub count: usize,
    pub mean: f64,
    /// Sample (n - 1) standard deviation; 0 for a single observation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Per-stage age statistics over every cephalogram in the cohort.
pub fn cohort_summary(cohort: &Cohort) -> Result<Vec<StageAgeSummary>> {
    if cohort.is_empty() {
        return Err(CoreError::EmptyCohort);
    }
    let mut ages: HashMap<Stage, Vec<f64>> = HashMap::new();
    for c in cohort.cephalograms() {
        ages.entry(c.stage).or_default().push(c.age_years);
    }
    Ok(Stage::ALL
        .iter()
        .filter_map(|stage| {
            let v = ages.get(stage)?;
            Some(StageAgeSummary {
                stage: *stage,
                count: v.len(),
                mean: crate::stats::mean(v),
                std: if v.len() > 1 { crate::stats::sample_std(v) } else { 0.0 },
                min: v.iter().copied().fold(f64::INFINITY, f64::min),
                max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            })
        })
        .collect())
}
