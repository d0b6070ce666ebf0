//! Run configuration: one TOML document, versioned, unknown keys rejected.

use std::path::{Path, PathBuf};

use facegrowth_core::analysis::Target;
use facegrowth_core::cephalometrics::MeasurementPanel;
use facegrowth_core::data_model::{AgeWindows, LandmarkSchema, DEFAULT_AUXILIARY_LANDMARKS};
use facegrowth_core::evaluation::CvPlan;
use facegrowth_core::features::{enumerate_scenarios, AlignmentScope, DataType, PeriodVariant, Scenario};
use facegrowth_core::geometry::GpaOptions;
use facegrowth_core::stats::Tail;
use facegrowth_core::synthgen::SynthConfig;
use facegrowth_models::{ModelSpec, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSource {
    #[default]
    Synth,
    File,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub source: InputSource,
    /// Landmark CSV, required when `source = "file"`.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemaConfig {
    /// Landmarks beyond the eleven the measurements need.
    pub auxiliary: Vec<String>,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        Self {
            auxiliary: DEFAULT_AUXILIARY_LANDMARKS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PanelChoice {
    /// The fifteen-entry panel.
    #[default]
    Default,
    /// Only SN-MP, FA and PN-AN.
    Central,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanelConfig {
    pub set: PanelChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub scope: AlignmentScope,
    pub histogram_bins: usize,
    /// Log-size gap that separates scale clusters.
    pub cluster_log_gap: f64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        let g = GpaOptions::default();
        Self {
            tolerance: g.tolerance,
            max_iterations: g.max_iterations,
            scope: AlignmentScope::Joint,
            histogram_bins: 40,
            cluster_log_gap: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelConfig {
    /// Replace ±1σ labels with equal-thirds labels by delta rank.
    pub balanced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub targets: Vec<String>,
    pub periods: Vec<String>,
    pub data_types: Vec<String>,
    /// Explicit `target/period/data_type` triples; overrides the product above.
    pub scenarios: Vec<String>,
    /// Model names as printed in reports, or `"all"` for the canonical sixteen.
    pub models: Vec<String>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            targets: Target::ALL.iter().map(|t| t.measurement().to_string()).collect(),
            periods: PeriodVariant::ALL.iter().map(|p| p.to_string()).collect(),
            data_types: DataType::ALL.iter().map(|d| d.to_string()).collect(),
            scenarios: Vec::new(),
            models: vec!["all".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub folds: usize,
    pub repeats: usize,
    pub tail: Tail,
    pub alpha: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        let p = CvPlan::default();
        Self {
            folds: p.folds,
            repeats: p.repeats,
            tail: p.tail,
            alpha: p.alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub validation_fraction: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub standardize: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            validation_fraction: t.validation_fraction,
            patience: t.patience,
            max_epochs: t.max_epochs,
            learning_rate: t.adam.learning_rate,
            standardize: t.standardize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub master_seed: u64,
    pub input: InputConfig,
    /// Synthetic cohort settings; its seed is always the master seed.
    pub synth: SynthConfig,
    pub schema: SchemaConfig,
    pub panel: PanelConfig,
    pub alignment: AlignmentConfig,
    pub labels: LabelConfig,
    pub grid: GridConfig,
    pub cv: CvConfig,
    pub train: TrainSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            master_seed: 0,
            input: InputConfig::default(),
            synth: SynthConfig::default(),
            schema: SchemaConfig::default(),
            panel: PanelConfig::default(),
            alignment: AlignmentConfig::default(),
            labels: LabelConfig::default(),
            grid: GridConfig::default(),
            cv: CvConfig::default(),
            train: TrainSection::default(),
        }
    }
}

/// Scenarios and models exercised by `--smoke`.
pub const SMOKE_PATIENTS: usize = 60;
pub const SMOKE_SCENARIOS: [&str; 3] = ["SN-MP/12-9/ceph", "FA/(9,12)/proc", "PN-AN/9/trans"];
pub const SMOKE_MODELS: [&str; 4] = ["LR", "DT", "RF(100)", "NN(3)"];
pub const SMOKE_REPEATS: usize = 2;

fn cfg_err(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(cfg_err(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration is always representable as TOML")
    }

    /// Shrink to the smoke-test grid.
    pub fn apply_smoke(&mut self) {
        self.synth.n_patients = SMOKE_PATIENTS;
        self.grid.scenarios = SMOKE_SCENARIOS.iter().map(|s| s.to_string()).collect();
        self.grid.models = SMOKE_MODELS.iter().map(|s| s.to_string()).collect();
        self.cv.repeats = SMOKE_REPEATS;
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_toml().as_bytes());
        format!("{:x}", h.finalize())
    }

    pub fn validate(&self) -> Result<()> {
        if self.input.source == InputSource::File {
            match &self.input.path {
                None => return Err(cfg_err("input.source = \"file\" needs input.path")),
                Some(p) if !p.exists() => return Err(cfg_err(format!("input file {} does not exist", p.display()))),
                _ => {}
            }
        }
        self.synth_config().validate().map_err(|e| cfg_err(e.to_string()))?;
        self.landmark_schema()?;
        self.scenarios()?;
        self.models()?;
        self.cv_plan().validate().map_err(|e| cfg_err(e.to_string()))?;
        let t = &self.train;
        if !(0.0..1.0).contains(&t.validation_fraction) || t.max_epochs == 0 || !(t.learning_rate > 0.0) {
            return Err(cfg_err("train: need 0 <= validation_fraction < 1, max_epochs >= 1, learning_rate > 0"));
        }
        if !(self.alignment.tolerance > 0.0) || self.alignment.max_iterations == 0 || self.alignment.histogram_bins == 0 {
            return Err(cfg_err("alignment: tolerance, max_iterations and histogram_bins must be positive"));
        }
        Ok(())
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.master_seed,
            ..self.synth.clone()
        }
    }

    pub fn landmark_schema(&self) -> Result<LandmarkSchema> {
        LandmarkSchema::with_auxiliary(&self.schema.auxiliary).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn age_windows(&self) -> AgeWindows {
        AgeWindows::default()
    }

    pub fn panel(&self) -> MeasurementPanel {
        match self.panel.set {
            PanelChoice::Default => MeasurementPanel::default(),
            PanelChoice::Central => MeasurementPanel::central(),
        }
    }

    pub fn gpa(&self) -> GpaOptions {
        GpaOptions {
            tolerance: self.alignment.tolerance,
            max_iterations: self.alignment.max_iterations,
        }
    }

    pub fn cv_plan(&self) -> CvPlan {
        CvPlan {
            folds: self.cv.folds,
            repeats: self.cv.repeats,
            master_seed: self.master_seed,
            tail: self.cv.tail,
            alpha: self.cv.alpha,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let base = TrainConfig::default();
        TrainConfig {
            seed: self.master_seed,
            validation_fraction: self.train.validation_fraction,
            patience: self.train.patience,
            max_epochs: self.train.max_epochs,
            adam: facegrowth_models::mlp::AdamParams {
                learning_rate: self.train.learning_rate,
                ..base.adam
            },
            standardize: self.train.standardize,
        }
    }

    /// Selected scenarios in grid order.
    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        let parse_err = |e: facegrowth_core::CoreError| cfg_err(e.to_string());
        let chosen: Vec<Scenario> = if self.grid.scenarios.is_empty() {
            let targets: Vec<Target> = self.grid.targets.iter().map(|s| s.parse()).collect::<std::result::Result<_, _>>().map_err(parse_err)?;
            let periods: Vec<PeriodVariant> = self.grid.periods.iter().map(|s| s.parse()).collect::<std::result::Result<_, _>>().map_err(parse_err)?;
            let types: Vec<DataType> = self.grid.data_types.iter().map(|s| s.parse()).collect::<std::result::Result<_, _>>().map_err(parse_err)?;
            enumerate_scenarios()
                .into_iter()
                .filter(|s| targets.contains(&s.target) && periods.contains(&s.variant) && types.contains(&s.data_type))
                .collect()
        } else {
            let mut out = Vec::new();
            for entry in &self.grid.scenarios {
                let parts: Vec<&str> = entry.split('/').collect();
                let [t, p, d] = parts.as_slice() else {
                    return Err(cfg_err(format!("scenario `{entry}` is not `target/period/data_type`")));
                };
                out.push(Scenario {
                    target: t.parse().map_err(parse_err)?,
                    variant: p.parse().map_err(parse_err)?,
                    data_type: d.parse().map_err(parse_err)?,
                });
            }
            let order = enumerate_scenarios();
            out.sort_by_key(|s| order.iter().position(|o| o == s));
            out.dedup();
            out
        };
        if chosen.is_empty() {
            return Err(cfg_err("scenario filter selects nothing"));
        }
        Ok(chosen)
    }

    /// Selected models; canonical order first, extras in listed order.
    pub fn models(&self) -> Result<Vec<ModelSpec>> {
        let canonical = ModelSpec::canonical();
        let mut picked: Vec<ModelSpec> = Vec::new();
        for name in &self.grid.models {
            if name.trim().eq_ignore_ascii_case("all") {
                picked.extend(canonical.iter().cloned());
                continue;
            }
            let spec: ModelSpec = name.parse().map_err(|e: facegrowth_models::ModelError| cfg_err(e.to_string()))?;
            picked.push(spec);
        }
        let mut out: Vec<ModelSpec> = canonical.iter().filter(|c| picked.contains(c)).cloned().collect();
        for p in picked {
            if !out.contains(&p) {
                out.push(p);
            }
        }
        if out.is_empty() {
            return Err(cfg_err("model filter selects nothing"));
        }
        Ok(out)
    }
}
