//! Experiment scenarios and per-scenario feature tables.
//!
//! A scenario picks a data type (cephalometric panel, Procrustes coordinates
//! or Sella–Nasion-frame coordinates), an input period variant and a target.
//! The age at every timestamp used is appended to the features.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use facegrowth_models::Dataset;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{CohortMeasurements, GrowthClass, GrowthLabel, Target};
use crate::cephalometrics::{measure_cohort, MeasurementPanel};
use crate::data_model::{Cohort, Stage};
use crate::error::{CoreError, Result};
use crate::geometry::{procrustes_align, transform_to_sn_frame, Alignment, GpaOptions, ShapeMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DataType {
    Ceph,
    Proc,
    Trans,
}

impl DataType {
    pub const ALL: [DataType; 3] = [DataType::Ceph, DataType::Proc, DataType::Trans];
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataType::Ceph => "ceph",
            DataType::Proc => "proc",
            DataType::Trans => "trans",
        })
    }
}

impl FromStr for DataType {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        DataType::ALL
            .into_iter()
            .find(|d| d.to_string() == s.trim())
            .ok_or_else(|| CoreError::InvalidConfig(format!("unknown data type `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PeriodVariant {
    /// Stage 9 only.
    At9,
    /// Stage 12 only.
    At12,
    /// 12 − 9 differences.
    Diff,
    /// Stage 9 and stage 12 side by side.
    Both,
    /// Stage 9 and the 12 − 9 differences.
    BaseDiff,
}

impl PeriodVariant {
    pub const ALL: [PeriodVariant; 5] = [
        PeriodVariant::At9,
        PeriodVariant::At12,
        PeriodVariant::Diff,
        PeriodVariant::Both,
        PeriodVariant::BaseDiff,
    ];

    pub fn single_timestamp(self) -> bool {
        matches!(self, PeriodVariant::At9 | PeriodVariant::At12)
    }
}

impl fmt::Display for PeriodVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PeriodVariant::At9 => "9",
            PeriodVariant::At12 => "12",
            PeriodVariant::Diff => "12-9",
            PeriodVariant::Both => "(9,12)",
            PeriodVariant::BaseDiff => "(9,12-9)",
        })
    }
}

impl FromStr for PeriodVariant {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        PeriodVariant::ALL
            .into_iter()
            .find(|v| v.to_string() == t)
            .ok_or_else(|| CoreError::InvalidConfig(format!("unknown period variant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Scenario {
    pub target: Target,
    pub variant: PeriodVariant,
    pub data_type: DataType,
}

impl Scenario {
    /// Features per timestamp before ages are appended.
    pub fn base_width(self, panel_len: usize, landmarks: usize) -> usize {
        match self.data_type {
            DataType::Ceph => panel_len,
            DataType::Proc | DataType::Trans => 2 * landmarks,
        }
    }

    pub fn width(self, panel_len: usize, landmarks: usize) -> usize {
        let b = self.base_width(panel_len, landmarks);
        match self.variant {
            PeriodVariant::At9 | PeriodVariant::At12 => b + 1,
            PeriodVariant::Diff => b + 2,
            PeriodVariant::Both | PeriodVariant::BaseDiff => 2 * b + 2,
        }
    }

    /// File-name-safe identifier.
    pub fn slug(self) -> String {
        let period = match self.variant {
            PeriodVariant::At9 => "9",
            PeriodVariant::At12 => "12",
            PeriodVariant::Diff => "12m9",
            PeriodVariant::Both => "9_12",
            PeriodVariant::BaseDiff => "9_12m9",
        };
        format!("{}_{}_{}", self.target.measurement(), period, self.data_type)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} / {} / {}", self.target, self.variant, self.data_type)
    }
}

/// All 45 scenarios, target-major, then period variant, then data type.
pub fn enumerate_scenarios() -> Vec<Scenario> {
    let mut out = Vec::with_capacity(45);
    for target in Target::ALL {
        for variant in PeriodVariant::ALL {
            for data_type in DataType::ALL {
                out.push(Scenario {
                    target,
                    variant,
                    data_type,
                });
            }
        }
    }
    out
}

/// Per-(patient, stage) inputs shared by every scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSources {
    pub panel_names: Vec<String>,
    pub landmark_names: Vec<String>,
    pub ceph: BTreeMap<(String, Stage), Vec<f64>>,
    pub proc: BTreeMap<(String, Stage), Vec<f64>>,
    pub trans: BTreeMap<(String, Stage), Vec<f64>>,
    pub ages: BTreeMap<(String, Stage), f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentScope {
    /// One alignment over every cephalogram in the cohort.
    #[default]
    Joint,
    /// A separate alignment per stage.
    PerStage,
}

fn flat_map(shapes: &[ShapeMatrix]) -> BTreeMap<(String, Stage), Vec<f64>> {
    shapes.iter().map(|s| ((s.patient_id.clone(), s.stage), s.flatten())).collect()
}

/// Procrustes alignment(s) of the cohort under the chosen scope.
pub fn align_cohort(cohort: &Cohort, opts: &GpaOptions, scope: AlignmentScope) -> Result<Vec<Alignment>> {
    let shapes: Vec<ShapeMatrix> = cohort
        .cephalograms()
        .map(|c| ShapeMatrix::from_cephalogram(c, &cohort.schema))
        .collect::<Result<_>>()?;
    match scope {
        AlignmentScope::Joint => Ok(vec![procrustes_align(&shapes, opts)?]),
        AlignmentScope::PerStage => Stage::ALL
            .iter()
            .filter_map(|st| {
                let group: Vec<ShapeMatrix> = shapes.iter().filter(|s| s.stage == *st).cloned().collect();
                (!group.is_empty()).then(|| procrustes_align(&group, opts))
            })
            .collect(),
    }
}

impl FeatureSources {
    pub fn new(
        cohort: &Cohort,
        measurements: &CohortMeasurements,
        alignments: &[Alignment],
        transformed: &[ShapeMatrix],
    ) -> Self {
        let mut ceph = BTreeMap::new();
        for (p, stages) in &measurements.by_patient {
            for (s, v) in stages {
                ceph.insert((p.clone(), *s), v.clone());
            }
        }
        let mut proc = BTreeMap::new();
        for a in alignments {
            proc.extend(flat_map(&a.shapes));
        }
        Self {
            panel_names: measurements.names.clone(),
            landmark_names: cohort.schema.names().iter().map(|n| n.to_string()).collect(),
            ceph,
            proc,
            trans: flat_map(transformed),
            ages: cohort.cephalograms().map(|c| ((c.patient_id.clone(), c.stage), c.age_years)).collect(),
        }
    }

    /// Measure, align and transform a cohort in one go.
    pub fn from_cohort(
        cohort: &Cohort,
        panel: &MeasurementPanel,
        gpa: &GpaOptions,
        scope: AlignmentScope,
    ) -> Result<(Self, CohortMeasurements, Vec<Alignment>)> {
        let vectors = measure_cohort(cohort, panel)?;
        let measurements = CohortMeasurements::new(panel, &vectors);
        let alignments = align_cohort(cohort, gpa, scope)?;
        let cephs: Vec<_> = cohort.cephalograms().collect();
        let transformed: Vec<ShapeMatrix> = cephs
            .par_iter()
            .map(|c| transform_to_sn_frame(c, &cohort.schema))
            .collect::<Result<_>>()?;
        let sources = Self::new(cohort, &measurements, &alignments, &transformed);
        Ok((sources, measurements, alignments))
    }

    fn base(&self, data_type: DataType) -> &BTreeMap<(String, Stage), Vec<f64>> {
        match data_type {
            DataType::Ceph => &self.ceph,
            DataType::Proc => &self.proc,
            DataType::Trans => &self.trans,
        }
    }

    fn base_names(&self, data_type: DataType) -> Vec<String> {
        match data_type {
            DataType::Ceph => self.panel_names.clone(),
            DataType::Proc | DataType::Trans => self
                .landmark_names
                .iter()
                .flat_map(|l| [format!("{data_type}_{l}_x"), format!("{data_type}_{l}_y")])
                .collect(),
        }
    }

    pub fn feature_names(&self, scenario: Scenario) -> Vec<String> {
        let base = self.base_names(scenario.data_type);
        let tag = |suffix: &str| base.iter().map(|n| format!("{n}@{suffix}")).collect::<Vec<_>>();
        let mut names = match scenario.variant {
            PeriodVariant::At9 => tag("9"),
            PeriodVariant::At12 => tag("12"),
            PeriodVariant::Diff => tag("12-9"),
            PeriodVariant::Both => [tag("9"), tag("12")].concat(),
            PeriodVariant::BaseDiff => [tag("9"), tag("12-9")].concat(),
        };
        match scenario.variant {
            PeriodVariant::At9 => names.push("age@9".into()),
            PeriodVariant::At12 => names.push("age@12".into()),
            _ => names.extend(["age@9".to_string(), "age@12".to_string()]),
        }
        names
    }

    fn row(&self, patient: &str, scenario: Scenario) -> Option<Vec<f64>> {
        let base = self.base(scenario.data_type);
        let key = |s: Stage| (patient.to_string(), s);
        let b9 = base.get(&key(Stage::S9));
        let b12 = base.get(&key(Stage::S12));
        let a9 = self.ages.get(&key(Stage::S9)).copied();
        let a12 = self.ages.get(&key(Stage::S12)).copied();
        let diff = || -> Option<Vec<f64>> { Some(b12?.iter().zip(b9?).map(|(x, y)| x - y).collect()) };
        let mut row = match scenario.variant {
            PeriodVariant::At9 => b9?.clone(),
            PeriodVariant::At12 => b12?.clone(),
            PeriodVariant::Diff => diff()?,
            PeriodVariant::Both => [b9?.as_slice(), b12?.as_slice()].concat(),
            PeriodVariant::BaseDiff => [b9?.clone(), diff()?].concat(),
        };
        match scenario.variant {
            PeriodVariant::At9 => row.push(a9?),
            PeriodVariant::At12 => row.push(a12?),
            _ => row.extend([a9?, a12?]),
        }
        Some(row)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub scenario: Scenario,
    pub feature_names: Vec<String>,
    /// Sorted ascending.
    pub patient_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<GrowthClass>,
    /// Labelled patients lacking an input for this scenario.
    pub excluded: Vec<String>,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    pub fn class_indices(&self) -> Vec<usize> {
        self.labels.iter().map(|c| c.index()).collect()
    }

    pub fn to_dataset(&self) -> Result<Dataset> {
        Ok(Dataset::from_rows(&self.rows, self.class_indices(), 3)?)
    }

    /// CSV with `patient_id`, the feature columns and `class`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["patient_id".to_string()];
        header.extend(self.feature_names.iter().cloned());
        header.push("class".into());
        w.write_record(&header)?;
        for ((p, row), class) in self.patient_ids.iter().zip(&self.rows).zip(&self.labels) {
            let mut rec = vec![p.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            rec.push(class.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Build the feature table for one scenario from labels of its target.
pub fn assemble(sources: &FeatureSources, labels: &[GrowthLabel], scenario: Scenario) -> Result<FeatureTable> {
    let mut chosen: Vec<&GrowthLabel> = labels.iter().filter(|l| l.target == scenario.target).collect();
    chosen.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    let mut table = FeatureTable {
        scenario,
        feature_names: sources.feature_names(scenario),
        patient_ids: Vec::new(),
        rows: Vec::new(),
        labels: Vec::new(),
        excluded: Vec::new(),
    };
    for l in chosen {
        match sources.row(&l.patient_id, scenario) {
            Some(row) if row.iter().all(|v| v.is_finite()) => {
                debug_assert_eq!(row.len(), table.feature_names.len());
                table.patient_ids.push(l.patient_id.clone());
                table.rows.push(row);
                table.labels.push(l.class);
            }
            _ => table.excluded.push(l.patient_id.clone()),
        }
    }
    if table.is_empty() {
        return Err(CoreError::NotEnoughData(format!("no patients have inputs for scenario {scenario}")));
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn forty_five_distinct_scenarios() {
        let s = enumerate_scenarios();
        assert_eq!(s.len(), 45);
        assert_eq!(s.iter().collect::<BTreeSet<_>>().len(), 45);
        assert!(s.contains(&Scenario {
            target: Target::SnMp,
            variant: PeriodVariant::Diff,
            data_type: DataType::Ceph
        }));
    }

    #[test]
    fn width_formula() {
        let w = |d, v| {
            Scenario {
                target: Target::Fa,
                variant: v,
                data_type: d,
            }
            .width(15, 20)
        };
        use DataType::*;
        use PeriodVariant::*;
        assert_eq!([w(Ceph, At9), w(Proc, At9), w(Trans, At12)], [16, 41, 41]);
        assert_eq!([w(Ceph, Diff), w(Proc, Diff), w(Trans, Diff)], [17, 42, 42]);
        assert_eq!([w(Ceph, Both), w(Proc, Both), w(Trans, Both)], [32, 82, 82]);
        assert_eq!([w(Ceph, BaseDiff), w(Proc, BaseDiff), w(Trans, BaseDiff)], [32, 82, 82]);
        let widths: Vec<usize> = enumerate_scenarios().iter().map(|s| s.width(15, 20)).collect();
        assert_eq!(widths.iter().min(), Some(&16));
        assert_eq!(widths.iter().max(), Some(&82));
    }

    #[test]
    fn names_parse_back() {
        for v in PeriodVariant::ALL {
            assert_eq!(v.to_string().parse::<PeriodVariant>().unwrap(), v);
        }
        for d in DataType::ALL {
            assert_eq!(d.to_string().parse::<DataType>().unwrap(), d);
        }
        assert_eq!("(9, 12-9)".parse::<PeriodVariant>().unwrap(), PeriodVariant::BaseDiff);
    }
}
