//! Pipeline stages. Each stage writes its artifacts through an
//! [`ArtifactWriter`] and hands its product to the next one.

use std::io::Write;
use std::path::Path;

use facegrowth_core::analysis::{
    balanced_relabel, check_boundaries, growth_deltas, label, mean_trajectories, period_correlations,
    CohortMeasurements, GroupFilter, GrowthClass, GrowthLabel, LabelingStats, Target, Trajectories,
};
use facegrowth_core::cephalometrics::measure_cohort;
use facegrowth_core::data_model::{ingest_landmarks, write_landmarks, Cohort, Stage};
use facegrowth_core::evaluation::{aggregate, run_grid, write_results_csv, CellFailure, EvalRecord, ResultsTable};
use facegrowth_core::features::{align_cohort, assemble, FeatureSources, FeatureTable, Scenario};
use facegrowth_core::geometry::{scale_diagnostics, transform_to_sn_frame, Alignment, ShapeMatrix};
use facegrowth_core::synthgen::generate;
use facegrowth_core::CoreError;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::artifacts::ArtifactWriter;
use crate::config::{InputSource, RunConfig};
use crate::error::{PipelineError, Result};

/// Growth is labelled over the whole observation window.
pub const LABEL_PERIOD: (Stage, Stage) = (Stage::S9, Stage::S18);

pub const RESULTS_FILE: &str = "results.csv";
pub const REPORT_FILE: &str = "report.txt";

fn csv_err(e: csv::Error) -> CoreError {
    CoreError::Csv(e)
}

/// Synthesize or ingest the cohort named by the configuration.
pub fn stage_input(cfg: &RunConfig, out: &mut ArtifactWriter) -> Result<Cohort> {
    let schema = cfg.landmark_schema()?;
    match cfg.input.source {
        InputSource::Synth => {
            let synth = generate(&cfg.synth_config(), &schema).map_err(PipelineError::stage("synth"))?;
            out.write_with("landmarks.csv", |w| write_landmarks(&synth.cohort, w))?;
            out.write_json("synth_truth.json", &synth.truth)?;
            Ok(synth.cohort)
        }
        InputSource::File => {
            let path = cfg.input.path.as_deref().ok_or_else(|| PipelineError::Config("input.path missing".into()))?;
            let (cohort, report) =
                ingest_landmarks(path, &schema, &cfg.age_windows()).map_err(PipelineError::stage("ingest"))?;
            out.write_bytes("ingest_report.txt", report.render().as_bytes())?;
            out.write_json("ingest_report.json", &report)?;
            out.write_with("landmarks.csv", |w| write_landmarks(&cohort, w))?;
            Ok(cohort)
        }
    }
}

#[derive(Debug, Serialize)]
struct AlignmentSummary {
    iterations: usize,
    converged: bool,
    residual: f64,
    degenerate_rotations: usize,
    shapes: usize,
}

pub fn stage_align(cfg: &RunConfig, cohort: &Cohort, out: &mut ArtifactWriter) -> Result<Vec<Alignment>> {
    let alignments = align_cohort(cohort, &cfg.gpa(), cfg.alignment.scope).map_err(PipelineError::stage("align"))?;
    out.write_with("aligned.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["patient_id", "stage", "landmark", "x", "y"]).map_err(csv_err)?;
        let mut rows: Vec<&ShapeMatrix> = alignments.iter().flat_map(|a| &a.shapes).collect();
        rows.sort_by(|a, b| (&a.patient_id, a.stage).cmp(&(&b.patient_id, b.stage)));
        for s in rows {
            for (name, p) in cohort.schema.names().iter().zip(&s.points) {
                w.write_record([
                    s.patient_id.clone(),
                    s.stage.to_string(),
                    name.to_string(),
                    p.x.to_string(),
                    p.y.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    let diagnostics = scale_diagnostics(cohort, cfg.alignment.histogram_bins, cfg.alignment.cluster_log_gap)
        .map_err(PipelineError::stage("align"))?;
    let summaries: Vec<AlignmentSummary> = alignments
        .iter()
        .map(|a| AlignmentSummary {
            iterations: a.iterations,
            converged: a.converged,
            residual: a.residual,
            degenerate_rotations: a.degenerate_rotations,
            shapes: a.shapes.len(),
        })
        .collect();
    out.write_json(
        "alignment_diagnostics.json",
        &json!({
            "scope": cfg.alignment.scope,
            "alignments": summaries,
            "sizes": diagnostics.sizes,
            "size_histogram": diagnostics.histogram,
            "size_clusters": diagnostics.clusters,
            "mode_ratios": diagnostics.mode_ratios(),
            "landmark_clouds": diagnostics.clouds,
        }),
    )?;
    Ok(alignments)
}

pub fn stage_measure(cfg: &RunConfig, cohort: &Cohort, out: &mut ArtifactWriter) -> Result<CohortMeasurements> {
    let panel = cfg.panel();
    let vectors = measure_cohort(cohort, &panel).map_err(PipelineError::stage("measure"))?;
    out.write_with("measurements.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["patient_id", "stage", "measurement", "value"]).map_err(csv_err)?;
        for v in &vectors {
            for (name, value) in panel.names().iter().zip(&v.values) {
                w.write_record([v.patient_id.clone(), v.stage.to_string(), name.clone(), value.to_string()])
                    .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    Ok(CohortMeasurements::new(&panel, &vectors))
}

#[derive(Debug, Clone, Serialize)]
pub struct TargetLabeling {
    pub target: Target,
    pub stats: LabelingStats,
    pub boundaries_ok: bool,
    pub balanced: bool,
    pub counts: [usize; 3],
    pub excluded: Vec<String>,
}

pub fn stage_label(
    cfg: &RunConfig,
    meas: &CohortMeasurements,
    out: &mut ArtifactWriter,
) -> Result<(Vec<GrowthLabel>, Vec<TargetLabeling>)> {
    let mut all = Vec::new();
    let mut summaries = Vec::new();
    for target in Target::ALL {
        let report = growth_deltas(meas, target, LABEL_PERIOD).map_err(PipelineError::stage("label"))?;
        let (labels, stats) = label(&report.deltas).map_err(PipelineError::stage("label"))?;
        let boundaries_ok = check_boundaries(&labels, &stats);
        let labels = if cfg.labels.balanced {
            balanced_relabel(&labels).map_err(PipelineError::stage("label"))?
        } else {
            labels
        };
        let mut counts = [0; 3];
        for l in &labels {
            counts[l.class.index()] += 1;
        }
        summaries.push(TargetLabeling {
            target,
            stats,
            boundaries_ok,
            balanced: cfg.labels.balanced,
            counts,
            excluded: report.excluded,
        });
        all.extend(labels);
    }
    out.write_with("labels.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["patient_id", "target", "class", "delta"]).map_err(csv_err)?;
        for l in &all {
            w.write_record([l.patient_id.clone(), l.target.to_string(), l.class.to_string(), l.delta.to_string()])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.write_json("labeling.json", &summaries)?;
    Ok((all, summaries))
}

fn period_name(p: (Stage, Stage)) -> String {
    format!("{}-{}", p.0, p.1)
}

pub fn stage_correlate(
    cohort: &Cohort,
    meas: &CohortMeasurements,
    labels: &[GrowthLabel],
    out: &mut ArtifactWriter,
) -> Result<()> {
    for target in Target::ALL {
        let m = period_correlations(meas, target).map_err(PipelineError::stage("correlate"))?;
        out.write_with(&format!("correlations_{}.csv", target.measurement()), |buf| {
            let mut w = csv::Writer::from_writer(buf);
            let mut header = vec!["period".to_string()];
            header.extend(m.periods.iter().map(|p| period_name(*p)));
            w.write_record(&header).map_err(csv_err)?;
            for (p, row) in m.periods.iter().zip(&m.values) {
                let mut rec = vec![period_name(*p)];
                rec.extend(row.iter().map(|v| v.map_or_else(|| "NA".to_string(), |x| x.to_string())));
                w.write_record(&rec).map_err(csv_err)?;
            }
            w.flush()?;
            Ok(())
        })?;
    }
    let mut groups: Vec<serde_json::Value> = Vec::new();
    for class in GrowthClass::ALL {
        let filter = GroupFilter::unanimous(class);
        match mean_trajectories(cohort, labels, &filter) {
            Ok(t) => groups.push(trajectory_json(class, &t)),
            Err(CoreError::EmptyGroup(what)) => groups.push(json!({ "class": class, "filter": what, "empty": true })),
            Err(e) => return Err(PipelineError::stage("correlate")(e)),
        }
    }
    out.write_json("trajectories.json", &groups)?;
    Ok(())
}

fn trajectory_json(class: GrowthClass, t: &Trajectories) -> serde_json::Value {
    json!({
        "class": class,
        "filter": t.filter,
        "n_patients": t.patients.len(),
        "landmarks": t.landmarks,
        "mean_positions": t.mean_positions,
    })
}

pub fn stage_features(
    cohort: &Cohort,
    meas: &CohortMeasurements,
    alignments: &[Alignment],
    labels: &[GrowthLabel],
    scenarios: &[Scenario],
    out: &mut ArtifactWriter,
) -> Result<Vec<FeatureTable>> {
    let cephs: Vec<_> = cohort.cephalograms().collect();
    let transformed: Vec<ShapeMatrix> = cephs
        .par_iter()
        .map(|c| transform_to_sn_frame(c, &cohort.schema))
        .collect::<facegrowth_core::Result<_>>()
        .map_err(PipelineError::stage("features"))?;
    let sources = FeatureSources::new(cohort, meas, alignments, &transformed);
    let mut tables = Vec::with_capacity(scenarios.len());
    for &scenario in scenarios {
        let table = assemble(&sources, labels, scenario).map_err(PipelineError::stage("features"))?;
        out.write_with(&format!("features/{}.csv", scenario.slug()), |w| table.write_csv(w))?;
        tables.push(table);
    }
    Ok(tables)
}

#[derive(Debug, Clone, Serialize)]
struct RecordDump<'a> {
    scenario: String,
    model: &'a str,
    accuracies: &'a [f64],
    failures: &'a [CellFailure],
}

pub fn stage_evaluate(cfg: &RunConfig, tables: &[FeatureTable], out: &mut ArtifactWriter) -> Result<ResultsTable> {
    let specs = cfg.models()?;
    let records = run_grid(tables, &specs, &cfg.cv_plan(), &cfg.train_config()).map_err(PipelineError::stage("evaluate"))?;
    out.write_with(RESULTS_FILE, |w| write_results_csv(&records, w))?;
    let dumps: Vec<RecordDump> = records
        .iter()
        .map(|r| RecordDump {
            scenario: r.scenario.to_string(),
            model: &r.model,
            accuracies: &r.accuracies,
            failures: &r.failures,
        })
        .collect();
    out.write_json("accuracies.json", &dumps)?;
    let table = aggregate(records).map_err(PipelineError::stage("evaluate"))?;
    out.write_bytes(REPORT_FILE, table.render().as_bytes())?;
    Ok(table)
}

fn run_metadata(cfg: &RunConfig, tables: &[FeatureTable], labeling: &[TargetLabeling], results: &ResultsTable) -> Result<serde_json::Value> {
    let train = cfg.train_config();
    let plan = cfg.cv_plan();
    let models: Vec<serde_json::Value> = cfg
        .models()?
        .iter()
        .map(|m| json!({ "model": m.to_string(), "hyperparameters": m.hyperparameters(&train) }))
        .collect();
    let scenarios: Vec<serde_json::Value> = tables
        .iter()
        .map(|t| {
            json!({
                "scenario": t.scenario.to_string(),
                "slug": t.scenario.slug(),
                "width": t.width(),
                "rows": t.len(),
                "excluded": t.excluded,
            })
        })
        .collect();
    let failed: usize = results.records.iter().map(|r| r.failures.len()).sum();
    Ok(json!({
        "config_digest": cfg.digest(),
        "master_seed": cfg.master_seed,
        "config": cfg,
        "label_period": period_name(LABEL_PERIOD),
        "cv_plan": plan,
        "fold_seeds": (0..plan.repeats).map(|r| plan.fold_seed(r)).collect::<Vec<_>>(),
        "train_seed_rule": "derive_seed(master_seed, [train-domain, repeat, fold])",
        "train_config": train,
        "models": models,
        "scenarios": scenarios,
        "labeling": labeling,
        "records": results.records.len(),
        "failed_cells": failed,
        "notes": [
            "ceph features for the 12-9 period carry both ages (panel + 2 columns); a single-age variant would be one column narrower",
            "significance: one-sample t-test of fold accuracies against the full-dataset majority-class rate",
        ],
    }))
}

/// Everything `run` produces, kept in memory for callers that want it.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub results: ResultsTable,
    pub tables: Vec<FeatureTable>,
    pub labeling: Vec<TargetLabeling>,
}

impl RunOutcome {
    pub fn records(&self) -> &[EvalRecord] {
        &self.results.records
    }
}

/// The whole chain: input → align → measure → label → correlate → features → evaluate.
pub fn run_pipeline(cfg: &RunConfig, out: &mut ArtifactWriter) -> Result<RunOutcome> {
    cfg.validate()?;
    let scenarios = cfg.scenarios()?;
    let cohort = stage_input(cfg, out)?;
    let alignments = stage_align(cfg, &cohort, out)?;
    let meas = stage_measure(cfg, &cohort, out)?;
    let (labels, labeling) = stage_label(cfg, &meas, out)?;
    stage_correlate(&cohort, &meas, &labels, out)?;
    let tables = stage_features(&cohort, &meas, &alignments, &labels, &scenarios, out)?;
    let results = stage_evaluate(cfg, &tables, out)?;
    out.write_json("run_metadata.json", &run_metadata(cfg, &tables, &labeling, &results)?)?;
    Ok(RunOutcome {
        results,
        tables,
        labeling,
    })
}

/// Record a failed stage next to whatever artifacts were already written.
pub fn write_failure(dir: &Path, err: &PipelineError) {
    let report = json!({
        "stage": err.stage_name(),
        "error": err.to_string(),
        "exit_code": err.exit_code(),
    });
    if std::fs::create_dir_all(dir).is_ok() {
        if let Ok(mut f) = std::fs::File::create(dir.join("failure.json")) {
            let _ = writeln!(f, "{report:#}");
        }
    }
}

/// Re-read a results CSV (accuracies are not stored there).
pub fn read_results_csv(path: &Path) -> Result<Vec<EvalRecord>> {
    use facegrowth_core::evaluation::RESULTS_HEADER;
    let bad = |reason: String| PipelineError::Results {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().ne(RESULTS_HEADER.iter().copied()) {
        return Err(bad(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let line = i + 2;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let num = |k: usize| field(k).parse::<f64>().map_err(|_| bad(format!("line {line}: `{}` is not a number", field(k))));
        let core = |e: CoreError| bad(format!("line {line}: {e}"));
        out.push(EvalRecord {
            scenario: Scenario {
                target: field(0).parse().map_err(core)?,
                variant: field(1).parse().map_err(core)?,
                data_type: field(2).parse().map_err(core)?,
            },
            model: field(3).to_string(),
            accuracies: Vec::new(),
            mean: num(4)?,
            std: num(5)?,
            baseline: num(6)?,
            t: num(7)?,
            p: num(8)?,
            significant: field(9).parse().map_err(|_| bad(format!("line {line}: bad significance flag")))?,
            failures: Vec::new(),
        });
    }
    if out.is_empty() {
        return Err(bad("no records".into()));
    }
    Ok(out)
}
