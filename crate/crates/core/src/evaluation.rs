//! Repeated stratified cross-validation, majority-class baseline, one-sample
//! t-test and Table-3-style aggregation.
//!
//! Every (repeat, fold) cell draws its randomness from seeds derived from the
//! master seed and the cell coordinates, so results do not depend on how
//! cells are scheduled across threads.

use std::collections::BTreeMap;
use std::io::Write;

use facegrowth_models::rng::{derive_seed, stream};
use facegrowth_models::{train, Dataset, ModelSpec, TrainConfig};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::GrowthClass;
use crate::error::{CoreError, Result};
use crate::features::{FeatureTable, PeriodVariant, Scenario};
use crate::stats::{mean, one_sample_t_test, Tail};

const FOLD_DOMAIN: u64 = 0x666f_6c64;
const TRAIN_DOMAIN: u64 = 0x7472_6169_6e;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvPlan {
    pub folds: usize,
    pub repeats: usize,
    pub master_seed: u64,
    pub tail: Tail,
    pub alpha: f64,
}

impl Default for CvPlan {
    fn default() -> Self {
        Self {
            folds: 5,
            repeats: 20,
            master_seed: 0,
            tail: Tail::Upper,
            alpha: 0.05,
        }
    }
}

impl CvPlan {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 || self.repeats < 1 {
            return Err(CoreError::InvalidConfig(format!(
                "cross-validation needs folds >= 2 and repeats >= 1, got {} and {}",
                self.folds, self.repeats
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CoreError::InvalidConfig(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }

    pub fn fold_seed(&self, repeat: usize) -> u64 {
        derive_seed(self.master_seed, &[FOLD_DOMAIN, repeat as u64])
    }

    pub fn train_seed(&self, repeat: usize, fold: usize) -> u64 {
        derive_seed(self.master_seed, &[TRAIN_DOMAIN, repeat as u64, fold as u64])
    }
}

/// Fold index per row. Each class is shuffled, the classes are concatenated
/// in index order and position `i` goes to fold `i mod k`, so every class is
/// spread over the folds with counts differing by at most one.
pub fn stratified_folds(labels: &[usize], n_classes: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(CoreError::InvalidConfig(format!("need at least 2 folds, got {folds}")));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in labels.iter().enumerate() {
        if c >= n_classes {
            return Err(CoreError::InvalidConfig(format!("label {c} out of range")));
        }
        members[c].push(i);
    }
    for (c, m) in members.iter().enumerate() {
        if !m.is_empty() && m.len() < folds {
            let class = GrowthClass::from_index(c).map_or_else(|| c.to_string(), |g| g.to_string());
            return Err(CoreError::ClassTooSmall {
                class,
                count: m.len(),
                folds,
            });
        }
    }
    let mut rng = stream(seed, &[]);
    let mut assignment = vec![0; labels.len()];
    let mut position = 0;
    for m in &mut members {
        m.shuffle(&mut rng);
        for &row in m.iter() {
            assignment[row] = position % folds;
            position += 1;
        }
    }
    Ok(assignment)
}

/// Most-frequent-class fraction.
pub fn mfc_baseline(labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    *counts.values().max().expect("non-empty") as f64 / labels.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub repeat: usize,
    pub fold: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub scenario: Scenario,
    pub model: String,
    /// One accuracy per successful (repeat, fold) cell, repeat-major.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub baseline: f64,
    pub t: f64,
    pub p: f64,
    pub significant: bool,
    pub failures: Vec<CellFailure>,
}

struct Cell {
    repeat: usize,
    fold: usize,
    train: Vec<usize>,
    test: Vec<usize>,
}

fn cells(data: &Dataset, plan: &CvPlan) -> Result<Vec<Cell>> {
    let mut out = Vec::with_capacity(plan.folds * plan.repeats);
    for repeat in 0..plan.repeats {
        let assignment = stratified_folds(&data.y, data.n_classes, plan.folds, plan.fold_seed(repeat))?;
        for fold in 0..plan.folds {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| assignment[i] == fold);
            out.push(Cell {
                repeat,
                fold,
                train,
                test,
            });
        }
    }
    Ok(out)
}

fn run_cell(data: &Dataset, spec: &ModelSpec, config: &TrainConfig, plan: &CvPlan, cell: &Cell) -> std::result::Result<f64, String> {
    let train_set = data.subset(&cell.train);
    let test_set = data.subset(&cell.test);
    let cfg = TrainConfig {
        seed: plan.train_seed(cell.repeat, cell.fold),
        ..config.clone()
    };
    let model = train(spec, &train_set, &cfg).map_err(|e| e.to_string())?;
    let pred = model.predict(test_set.x.view()).map_err(|e| e.to_string())?;
    let hits = pred.iter().zip(&test_set.y).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / test_set.len() as f64)
}

fn summarize(
    scenario: Scenario,
    model: String,
    baseline: f64,
    plan: &CvPlan,
    outcomes: Vec<(usize, usize, std::result::Result<f64, String>)>,
) -> EvalRecord {
    let mut accuracies = Vec::new();
    let mut failures = Vec::new();
    for (repeat, fold, r) in outcomes {
        match r {
            Ok(a) => accuracies.push(a),
            Err(error) => failures.push(CellFailure { repeat, fold, error }),
        }
    }
    let (m, s, t, p) = match one_sample_t_test(&accuracies, baseline, plan.tail) {
        Ok(r) => (r.mean, r.std, r.t, r.p),
        Err(_) => {
            let m = if accuracies.is_empty() { f64::NAN } else { mean(&accuracies) };
            (m, f64::NAN, f64::NAN, 1.0)
        }
    };
    EvalRecord {
        scenario,
        model,
        significant: p < plan.alpha && m > baseline,
        accuracies,
        mean: m,
        std: s,
        baseline,
        t,
        p,
        failures,
    }
}

/// Cross-validate one model on one table.
pub fn run_cv(table: &FeatureTable, spec: &ModelSpec, plan: &CvPlan, config: &TrainConfig) -> Result<EvalRecord> {
    Ok(run_grid(std::slice::from_ref(table), std::slice::from_ref(spec), plan, config)?.remove(0))
}

/// Cross-validate every (table, model) pair. All cells of the grid are
/// scheduled together; records come back table-major, then model order.
pub fn run_grid(tables: &[FeatureTable], specs: &[ModelSpec], plan: &CvPlan, config: &TrainConfig) -> Result<Vec<EvalRecord>> {
    plan.validate()?;
    if specs.is_empty() || tables.is_empty() {
        return Err(CoreError::InvalidConfig("empty scenario or model selection".into()));
    }
    let datasets: Vec<Dataset> = tables.iter().map(FeatureTable::to_dataset).collect::<Result<_>>()?;
    let plans: Vec<Vec<Cell>> = datasets.iter().map(|d| cells(d, plan)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize, usize)> = (0..tables.len())
        .flat_map(|t| (0..specs.len()).flat_map(move |m| (0..plan.folds * plan.repeats).map(move |c| (t, m, c))))
        .collect();
    let outcomes: Vec<std::result::Result<f64, String>> = jobs
        .par_iter()
        .map(|&(t, m, c)| run_cell(&datasets[t], &specs[m], config, plan, &plans[t][c]))
        .collect();
    let per_record = plan.folds * plan.repeats;
    let mut records = Vec::with_capacity(tables.len() * specs.len());
    let mut it = outcomes.into_iter();
    for (t, table) in tables.iter().enumerate() {
        let baseline = mfc_baseline(&datasets[t].y);
        for spec in specs {
            let chunk: Vec<_> = plans[t]
                .iter()
                .map(|cell| (cell.repeat, cell.fold, it.next().expect("one outcome per job")))
                .collect();
            debug_assert_eq!(chunk.len(), per_record);
            records.push(summarize(table.scenario, spec.to_string(), baseline, plan, chunk));
        }
    }
    Ok(records)
}

pub const RESULTS_HEADER: [&str; 10] = [
    "target",
    "period",
    "data_type",
    "model",
    "mean_acc",
    "std_acc",
    "baseline",
    "t",
    "p",
    "significant",
];

pub fn write_results_csv<W: Write>(records: &[EvalRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RESULTS_HEADER)?;
    for r in records {
        w.write_record([
            r.scenario.target.to_string(),
            r.scenario.variant.to_string(),
            r.scenario.data_type.to_string(),
            r.model.clone(),
            r.mean.to_string(),
            r.std.to_string(),
            r.baseline.to_string(),
            r.t.to_string(),
            r.p.to_string(),
            r.significant.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedBlock {
    pub target: crate::analysis::Target,
    pub variant: PeriodVariant,
    pub baseline: f64,
    /// Indices into the record list, best first, at most five.
    pub top: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub records: Vec<EvalRecord>,
    pub blocks: Vec<RankedBlock>,
}

/// Mean descending, then std ascending, then model name.
fn rank_order(a: &EvalRecord, b: &EvalRecord) -> std::cmp::Ordering {
    b.mean
        .total_cmp(&a.mean)
        .then(a.std.total_cmp(&b.std))
        .then_with(|| a.model.cmp(&b.model))
        .then_with(|| a.scenario.data_type.cmp(&b.scenario.data_type))
}

pub fn aggregate(records: Vec<EvalRecord>) -> Result<ResultsTable> {
    if records.is_empty() {
        return Err(CoreError::NotEnoughData("no evaluation records to aggregate".into()));
    }
    let mut groups: BTreeMap<(crate::analysis::Target, PeriodVariant), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry((r.scenario.target, r.scenario.variant)).or_default().push(i);
    }
    let blocks = groups
        .into_iter()
        .map(|((target, variant), mut idx)| {
            idx.sort_by(|&a, &b| rank_order(&records[a], &records[b]));
            let baseline = records[idx[0]].baseline;
            idx.truncate(5);
            RankedBlock {
                target,
                variant,
                baseline,
                top: idx,
            }
        })
        .collect();
    Ok(ResultsTable { records, blocks })
}

impl ResultsTable {
    /// Plain-text report: one block per (target, period), five best entries,
    /// significant results marked with `*`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for b in &self.blocks {
            out.push_str(&format!(
                "{} | period {} | MFC {:.2}%\n",
                b.target,
                b.variant,
                100.0 * b.baseline
            ));
            for &i in &b.top {
                let r = &self.records[i];
                out.push_str(&format!(
                    "  {:<5} {:<14} {:>6.2} ± {:>5.2}  p={:<10.3e}{}\n",
                    r.scenario.data_type.to_string(),
                    r.model,
                    100.0 * r.mean,
                    100.0 * r.std,
                    r.p,
                    if r.significant { " *" } else { "" }
                ));
            }
            out.push('\n');
        }
        out
    }
}
