//! Growth deltas, ±1σ growth-direction labels, balanced relabeling, period
//! correlations and group-mean landmark trajectories.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cephalometrics::{MeasurementPanel, MeasurementVector, FA, PN_AN, SN_MP};
use crate::data_model::{Cohort, Point2, Stage};
use crate::error::{CoreError, Result};
use crate::geometry::transform_to_sn_frame;
use crate::stats::{mean, pearson, sample_std};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Target {
    SnMp,
    Fa,
    PnAn,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::SnMp, Target::Fa, Target::PnAn];

    /// Name of the underlying panel measurement.
    pub fn measurement(self) -> &'static str {
        match self {
            Target::SnMp => SN_MP,
            Target::Fa => FA,
            Target::PnAn => PN_AN,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(18-9)", self.measurement())
    }
}

impl FromStr for Target {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        let base = s.trim().trim_end_matches("(18-9)");
        Target::ALL
            .into_iter()
            .find(|t| t.measurement().eq_ignore_ascii_case(base))
            .ok_or_else(|| CoreError::InvalidConfig(format!("unknown target `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GrowthClass {
    Horizontal,
    Mixed,
    Vertical,
}

impl GrowthClass {
    pub const ALL: [GrowthClass; 3] = [GrowthClass::Horizontal, GrowthClass::Mixed, GrowthClass::Vertical];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for GrowthClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GrowthClass::Horizontal => "Horizontal",
            GrowthClass::Mixed => "Mixed",
            GrowthClass::Vertical => "Vertical",
        })
    }
}

/// Measurements indexed by patient and stage, values in panel order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortMeasurements {
    pub names: Vec<String>,
    pub by_patient: BTreeMap<String, BTreeMap<Stage, Vec<f64>>>,
}

impl CohortMeasurements {
    pub fn new(panel: &MeasurementPanel, vectors: &[MeasurementVector]) -> Self {
        let mut by_patient: BTreeMap<String, BTreeMap<Stage, Vec<f64>>> = BTreeMap::new();
        for v in vectors {
            by_patient
                .entry(v.patient_id.clone())
                .or_default()
                .insert(v.stage, v.values.clone());
        }
        Self {
            names: panel.names(),
            by_patient,
        }
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| CoreError::InvalidConfig(format!("measurement `{name}` not in panel")))
    }

    pub fn value(&self, patient: &str, stage: Stage, index: usize) -> Option<f64> {
        self.by_patient.get(patient)?.get(&stage).map(|v| v[index])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthDelta {
    pub patient_id: String,
    pub target: Target,
    pub period: (Stage, Stage),
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub deltas: Vec<GrowthDelta>,
    /// Patients lacking a measurement at either end of the period.
    pub excluded: Vec<String>,
}

/// Change of a measurement over a period, summed left to right over every
/// consecutive pair of stages the patient has inside the period. Sub-period
/// deltas therefore add up to the whole-period delta in a fixed order.
pub fn period_delta(stages: &BTreeMap<Stage, Vec<f64>>, index: usize, start: Stage, end: Stage) -> Option<f64> {
    if start >= end {
        return None;
    }
    stages.get(&start)?;
    stages.get(&end)?;
    let values: Vec<f64> = stages.range(start..=end).map(|(_, v)| v[index]).collect();
    let mut total = 0.0;
    for w in values.windows(2) {
        total += w[1] - w[0];
    }
    Some(total)
}

pub fn growth_deltas(meas: &CohortMeasurements, target: Target, period: (Stage, Stage)) -> Result<DeltaReport> {
    let index = meas.index_of(target.measurement())?;
    let mut report = DeltaReport::default();
    for (patient, stages) in &meas.by_patient {
        match period_delta(stages, index, period.0, period.1) {
            Some(value) => report.deltas.push(GrowthDelta {
                patient_id: patient.clone(),
                target,
                period,
                value,
            }),
            None => report.excluded.push(patient.clone()),
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthLabel {
    pub patient_id: String,
    pub target: Target,
    pub class: GrowthClass,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingStats {
    pub target: Target,
    pub mean: f64,
    /// Sample (n − 1) standard deviation.
    pub std: f64,
    /// Horizontal, Mixed, Vertical.
    pub counts: [usize; 3],
    /// Set when all deltas are equal and every label is Mixed.
    pub zero_spread: bool,
}

impl LabelingStats {
    pub fn fractions(&self) -> [f64; 3] {
        let n: usize = self.counts.iter().sum();
        self.counts.map(|c| c as f64 / n as f64)
    }
}

/// Horizontal below mean − std, Vertical above mean + std, Mixed otherwise
/// (boundaries included in Mixed). Statistics use the whole collection.
pub fn label(deltas: &[GrowthDelta]) -> Result<(Vec<GrowthLabel>, LabelingStats)> {
    if deltas.len() < 2 {
        return Err(CoreError::NotEnoughData(format!("labeling needs at least 2 deltas, got {}", deltas.len())));
    }
    let target = deltas[0].target;
    let values: Vec<f64> = deltas.iter().map(|d| d.value).collect();
    let m = mean(&values);
    let s = sample_std(&values);
    let (lo, hi) = (m - s, m + s);
    let mut counts = [0; 3];
    let labels: Vec<GrowthLabel> = deltas
        .iter()
        .map(|d| {
            let class = if d.value < lo {
                GrowthClass::Horizontal
            } else if d.value > hi {
                GrowthClass::Vertical
            } else {
                GrowthClass::Mixed
            };
            counts[class.index()] += 1;
            GrowthLabel {
                patient_id: d.patient_id.clone(),
                target: d.target,
                class,
                delta: d.value,
            }
        })
        .collect();
    Ok((
        labels,
        LabelingStats {
            target,
            mean: m,
            std: s,
            counts,
            zero_spread: s == 0.0,
        },
    ))
}

/// Check max(Horizontal) < mean − std ≤ Mixed ≤ mean + std < min(Vertical).
pub fn check_boundaries(labels: &[GrowthLabel], stats: &LabelingStats) -> bool {
    let (lo, hi) = (stats.mean - stats.std, stats.mean + stats.std);
    labels.iter().all(|l| match l.class {
        GrowthClass::Horizontal => l.delta < lo,
        GrowthClass::Mixed => lo <= l.delta && l.delta <= hi,
        GrowthClass::Vertical => l.delta > hi,
    })
}

/// Target class sizes for balanced labels: ⌊n/3⌋ each, the first extra
/// member to Mixed and a second one to Horizontal.
pub fn balanced_counts(n: usize) -> [usize; 3] {
    let q = n / 3;
    match n % 3 {
        0 => [q, q, q],
        1 => [q, q + 1, q],
        _ => [q + 1, q + 1, q],
    }
}

/// Move the lowest-valued Mixed members to Horizontal and the highest-valued
/// to Vertical until the class sizes match [`balanced_counts`]. Value ties
/// are broken by input order.
pub fn balanced_relabel(labels: &[GrowthLabel]) -> Result<Vec<GrowthLabel>> {
    let n = labels.len();
    if n < 3 {
        return Err(CoreError::NotEnoughData(format!("balanced relabel needs at least 3 labels, got {n}")));
    }
    let want = balanced_counts(n);
    let mut have = [0usize; 3];
    for l in labels {
        have[l.class.index()] += 1;
    }
    for (class, (h, w)) in [GrowthClass::Horizontal, GrowthClass::Vertical]
        .iter()
        .zip([(have[0], want[0]), (have[2], want[2])])
    {
        if h > w {
            return Err(CoreError::InvalidConfig(format!(
                "{class} already has {h} members, more than the balanced {w}; only Mixed members are re-tagged"
            )));
        }
    }
    let mut mixed: Vec<usize> = (0..n).filter(|&i| labels[i].class == GrowthClass::Mixed).collect();
    mixed.sort_by(|&a, &b| labels[a].delta.total_cmp(&labels[b].delta).then(a.cmp(&b)));
    let mut out = labels.to_vec();
    let to_h = want[0] - have[0];
    let to_v = want[2] - have[2];
    for &i in &mixed[..to_h] {
        out[i].class = GrowthClass::Horizontal;
    }
    for &i in &mixed[mixed.len() - to_v..] {
        out[i].class = GrowthClass::Vertical;
    }
    Ok(out)
}

/// Horizontal ≤ Mixed ≤ Vertical by value.
pub fn check_value_order(labels: &[GrowthLabel]) -> bool {
    let range = |c: GrowthClass| {
        labels.iter().filter(|l| l.class == c).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), l| {
            (lo.min(l.delta), hi.max(l.delta))
        })
    };
    let (h, m, v) = (range(GrowthClass::Horizontal), range(GrowthClass::Mixed), range(GrowthClass::Vertical));
    let below = |a: (f64, f64), b: (f64, f64)| a.1 == f64::NEG_INFINITY || b.0 == f64::INFINITY || a.1 <= b.0;
    below(h, m) && below(m, v) && below(h, v)
}

pub const CORRELATION_PERIODS: [(Stage, Stage); 6] = [
    (Stage::S9, Stage::S12),
    (Stage::S12, Stage::S15),
    (Stage::S15, Stage::S18),
    (Stage::S9, Stage::S15),
    (Stage::S12, Stage::S18),
    (Stage::S9, Stage::S18),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub target: Target,
    pub periods: Vec<(Stage, Stage)>,
    /// `None` where a period has zero variance.
    pub values: Vec<Vec<Option<f64>>>,
    pub n_patients: usize,
}

impl CorrelationMatrix {
    pub fn get(&self, a: (Stage, Stage), b: (Stage, Stage)) -> Option<f64> {
        let i = self.periods.iter().position(|p| *p == a)?;
        let j = self.periods.iter().position(|p| *p == b)?;
        self.values[i][j]
    }

    pub fn has_undefined(&self) -> bool {
        self.values.iter().flatten().any(Option::is_none)
    }
}

/// Pearson correlations of a target's change across the six periods, over
/// patients with all four stages.
pub fn period_correlations(meas: &CohortMeasurements, target: Target) -> Result<CorrelationMatrix> {
    let index = meas.index_of(target.measurement())?;
    let complete: Vec<&BTreeMap<Stage, Vec<f64>>> =
        meas.by_patient.values().filter(|s| Stage::ALL.iter().all(|st| s.contains_key(st))).collect();
    if complete.len() < 3 {
        return Err(CoreError::NotEnoughData(format!(
            "period correlations need at least 3 patients with all stages, got {}",
            complete.len()
        )));
    }
    let series: Vec<Vec<f64>> = CORRELATION_PERIODS
        .iter()
        .map(|&(a, b)| complete.iter().map(|s| period_delta(s, index, a, b).expect("complete series")).collect())
        .collect();
    let k = series.len();
    let mut values = vec![vec![None; k]; k];
    for i in 0..k {
        let var_i = pearson(&series[i], &series[i]).is_some();
        values[i][i] = var_i.then_some(1.0);
        for j in i + 1..k {
            let r = pearson(&series[i], &series[j]);
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        target,
        periods: CORRELATION_PERIODS.to_vec(),
        values,
        n_patients: complete.len(),
    })
}

/// Selects patients whose labels match every listed (target, class) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFilter {
    pub require: Vec<(Target, GrowthClass)>,
}

impl GroupFilter {
    /// The same class under all three targets.
    pub fn unanimous(class: GrowthClass) -> Self {
        Self {
            require: Target::ALL.iter().map(|&t| (t, class)).collect(),
        }
    }

    pub fn describe(&self) -> String {
        let parts: Vec<String> = self.require.iter().map(|(t, c)| format!("{t}={c}")).collect();
        parts.join(" & ")
    }

    pub fn select(&self, labels: &[GrowthLabel]) -> Vec<String> {
        let mut by_patient: BTreeMap<&str, BTreeMap<Target, GrowthClass>> = BTreeMap::new();
        for l in labels {
            by_patient.entry(&l.patient_id).or_default().insert(l.target, l.class);
        }
        by_patient
            .into_iter()
            .filter(|(_, m)| self.require.iter().all(|(t, c)| m.get(t) == Some(c)))
            .map(|(p, _)| p.to_string())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectories {
    pub filter: String,
    pub patients: Vec<String>,
    pub landmarks: Vec<String>,
    /// Mean Sella–Nasion-frame position of every landmark per stage.
    pub mean_positions: BTreeMap<Stage, Vec<Point2>>,
}

impl Trajectories {
    /// Mean displacement of a landmark between two stages.
    pub fn displacement(&self, landmark: &str, from: Stage, to: Stage) -> Option<Point2> {
        let i = self.landmarks.iter().position(|l| l == landmark)?;
        Some(self.mean_positions.get(&to)?[i].sub(self.mean_positions.get(&from)?[i]))
    }
}

pub const TRAJECTORY_STAGES: [Stage; 3] = [Stage::S9, Stage::S12, Stage::S18];

pub fn mean_trajectories(cohort: &Cohort, labels: &[GrowthLabel], filter: &GroupFilter) -> Result<Trajectories> {
    let patients = filter.select(labels);
    if patients.is_empty() {
        return Err(CoreError::EmptyGroup(filter.describe()));
    }
    let schema = &cohort.schema;
    let mut mean_positions = BTreeMap::new();
    for stage in TRAJECTORY_STAGES {
        let mut sums = vec![Point2::ORIGIN; schema.len()];
        let mut count = 0usize;
        for s in cohort.series.iter().filter(|s| patients.binary_search(&s.patient_id).is_ok()) {
            let Some(ceph) = s.get(stage) else { continue };
            let shape = transform_to_sn_frame(ceph, schema)?;
            for (acc, p) in sums.iter_mut().zip(&shape.points) {
                *acc = acc.add(*p);
            }
            count += 1;
        }
        if count == 0 {
            return Err(CoreError::EmptyGroup(format!("{} at stage {stage}", filter.describe())));
        }
        mean_positions.insert(stage, sums.iter().map(|p| p.scale(1.0 / count as f64)).collect());
    }
    Ok(Trajectories {
        filter: filter.describe(),
        patients,
        landmarks: schema.names().iter().map(|n| n.to_string()).collect(),
        mean_positions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deltas(values: &[f64]) -> Vec<GrowthDelta> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| GrowthDelta {
                patient_id: format!("p{i:02}"),
                target: Target::SnMp,
                period: (Stage::S9, Stage::S18),
                value: v,
            })
            .collect()
    }

    fn classes(labels: &[GrowthLabel]) -> Vec<GrowthClass> {
        labels.iter().map(|l| l.class).collect()
    }

    fn meas(rows: &[(&str, &[(Stage, f64)])]) -> CohortMeasurements {
        let panel = MeasurementPanel::central();
        let mut by_patient = BTreeMap::new();
        for (p, stages) in rows {
            let m: BTreeMap<Stage, Vec<f64>> = stages.iter().map(|&(s, v)| (s, vec![v, 0.0, 0.0])).collect();
            by_patient.insert(p.to_string(), m);
        }
        CohortMeasurements {
            names: panel.names(),
            by_patient,
        }
    }

    use GrowthClass::*;

    #[test]
    fn simple_delta() {
        let m = meas(&[("a", &[(Stage::S9, 30.0), (Stage::S18, 33.5)]), ("b", &[(Stage::S9, 30.0), (Stage::S18, 30.0)])]);
        let r = growth_deltas(&m, Target::SnMp, (Stage::S9, Stage::S18)).unwrap();
        assert_eq!(r.deltas[0].value, 3.5);
        assert_eq!(r.deltas[1].value, 0.0);
    }

    #[test]
    fn missing_stage_excludes_patient() {
        let m = meas(&[("a", &[(Stage::S9, 30.0)])]);
        let r = growth_deltas(&m, Target::SnMp, (Stage::S9, Stage::S18)).unwrap();
        assert!(r.deltas.is_empty());
        assert_eq!(r.excluded, vec!["a".to_string()]);
    }

    #[test]
    fn telescoping_is_exact() {
        let m = meas(&[("a", &[(Stage::S9, 30.1), (Stage::S12, 31.7), (Stage::S15, 29.3), (Stage::S18, 33.9)])]);
        let s = &m.by_patient["a"];
        let d = |a, b| period_delta(s, 0, a, b).unwrap();
        let whole = d(Stage::S9, Stage::S18);
        assert_eq!(whole, d(Stage::S9, Stage::S12) + d(Stage::S12, Stage::S15) + d(Stage::S15, Stage::S18));
    }

    #[test]
    fn label_example() {
        let (labels, stats) = label(&deltas(&[-3.0, -1.0, 0.0, 1.0, 3.0])).unwrap();
        assert_eq!(stats.mean, 0.0);
        assert!((stats.std - 5f64.sqrt()).abs() < 1e-12);
        assert_eq!(classes(&labels), vec![Horizontal, Mixed, Mixed, Mixed, Vertical]);
        assert_eq!(stats.counts, [1, 3, 1]);
        assert!(check_boundaries(&labels, &stats));
    }

    #[test]
    fn constant_deltas_are_all_mixed() {
        let (labels, stats) = label(&deltas(&[2.0; 6])).unwrap();
        assert!(stats.zero_spread);
        assert!(labels.iter().all(|l| l.class == Mixed));
    }

    #[test]
    fn boundary_values_are_mixed() {
        // mean 0, sample std 1 exactly
        let (labels, stats) = label(&deltas(&[-1.0, 0.0, 1.0])).unwrap();
        assert_eq!(stats.std, 1.0);
        assert!(labels.iter().all(|l| l.class == Mixed));
    }

    #[test]
    fn too_few_deltas() {
        assert!(label(&deltas(&[1.0])).is_err());
    }

    #[test]
    fn balanced_nine() {
        let values = [-10.0, -2.0, -1.5, -1.0, 0.0, 1.0, 1.5, 2.0, 10.0];
        let (labels, stats) = label(&deltas(&values)).unwrap();
        assert_eq!(stats.counts, [1, 7, 1]);
        let b = balanced_relabel(&labels).unwrap();
        assert_eq!(
            classes(&b),
            vec![Horizontal, Horizontal, Horizontal, Mixed, Mixed, Mixed, Vertical, Vertical, Vertical]
        );
        assert!(check_value_order(&b));
    }

    #[test]
    fn balanced_input_unchanged() {
        let mut labels = label(&deltas(&[-10.0, -2.0, -1.5, -1.0, 0.0, 1.0, 1.5, 2.0, 10.0])).unwrap().0;
        labels = balanced_relabel(&labels).unwrap();
        assert_eq!(balanced_relabel(&labels).unwrap(), labels);
    }

    #[test]
    fn remainders_go_to_mixed_then_horizontal() {
        assert_eq!(balanced_counts(10), [3, 4, 3]);
        assert_eq!(balanced_counts(11), [4, 4, 3]);
        let values: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let b = balanced_relabel(&label(&deltas(&values)).unwrap().0).unwrap();
        let mut counts = [0; 3];
        for l in &b {
            counts[l.class.index()] += 1;
        }
        assert_eq!(counts, [3, 4, 3]);
    }

    #[test]
    fn relabel_needs_three() {
        let labels = label(&deltas(&[1.0, 2.0])).unwrap().0;
        assert!(balanced_relabel(&labels).is_err());
    }

    #[test]
    fn correlations_flag_zero_variance() {
        let rows: Vec<(String, Vec<(Stage, f64)>)> = (0..5)
            .map(|i| {
                (format!("p{i}"), Stage::ALL.iter().map(|&s| (s, 10.0 + s.years() as f64)).collect())
            })
            .collect();
        let refs: Vec<(&str, &[(Stage, f64)])> = rows.iter().map(|(p, v)| (p.as_str(), v.as_slice())).collect();
        let c = period_correlations(&meas(&refs), Target::SnMp).unwrap();
        assert!(c.has_undefined());
        assert!(c.values.iter().flatten().all(Option::is_none));
    }

    #[test]
    fn correlations_need_three_complete_patients() {
        let m = meas(&[("a", &[(Stage::S9, 1.0), (Stage::S12, 2.0), (Stage::S15, 3.0), (Stage::S18, 4.0)])]);
        assert!(period_correlations(&m, Target::SnMp).is_err());
    }

    #[test]
    fn targets_parse_and_print() {
        assert_eq!(Target::SnMp.to_string(), "SN-MP(18-9)");
        assert_eq!("FA(18-9)".parse::<Target>().unwrap(), Target::Fa);
        assert_eq!("pn-an".parse::<Target>().unwrap(), Target::PnAn);
        assert!("XY".parse::<Target>().is_err());
    }

    #[test]
    fn group_filter_selects_unanimous() {
        let mk = |p: &str, t, c| GrowthLabel {
            patient_id: p.into(),
            target: t,
            class: c,
            delta: 0.0,
        };
        let labels = vec![
            mk("a", Target::SnMp, Vertical),
            mk("a", Target::Fa, Vertical),
            mk("a", Target::PnAn, Vertical),
            mk("b", Target::SnMp, Vertical),
            mk("b", Target::Fa, Mixed),
            mk("b", Target::PnAn, Vertical),
        ];
        assert_eq!(GroupFilter::unanimous(Vertical).select(&labels), vec!["a".to_string()]);
        assert!(GroupFilter::unanimous(Horizontal).select(&labels).is_empty());
    }
}
