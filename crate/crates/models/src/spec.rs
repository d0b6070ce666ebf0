use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::boost::{BoostOptions, GradientBoosting};
use crate::data::{check_finite, Dataset, Standardizer};
use crate::error::{ModelError, Result};
use crate::forest::RandomForest;
use crate::knn::KNearest;
use crate::logistic::{self, LogisticModel, LogisticOptions};
use crate::mlp::{self, AdamParams, Mlp, MlpOptions};
use crate::rng::{derive_seed, stream};
use crate::svm::{SvmModel, SvmOptions};
use crate::tree::{Columns, Tree, TreeOptions};

/// One member of the model zoo, identified by family and its size parameter.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelSpec {
    /// Perceptron with the given hidden layer widths (empty: softmax regression).
    Mlp { hidden: Vec<usize> },
    Xgb { rounds: usize },
    Rf { trees: usize },
    Svm,
    Lr,
    Dt,
    Knn { k: usize },
    /// Always predicts the most frequent training class.
    ZeroRule,
}

impl ModelSpec {
    /// The sixteen-model grid, in reporting order.
    pub fn canonical() -> Vec<ModelSpec> {
        use ModelSpec::*;
        vec![
            Mlp { hidden: vec![] },
            Mlp { hidden: vec![20] },
            Mlp { hidden: vec![50] },
            Mlp { hidden: vec![100] },
            Mlp { hidden: vec![50, 10] },
            Mlp { hidden: vec![50, 20] },
            Mlp { hidden: vec![50, 50] },
            Xgb { rounds: 100 },
            Xgb { rounds: 300 },
            Rf { trees: 100 },
            Rf { trees: 300 },
            Svm,
            Lr,
            Dt,
            Knn { k: 3 },
            Knn { k: 5 },
        ]
    }

    /// Whether inputs are standardized before fitting when scaling is enabled.
    pub fn scale_sensitive(&self) -> bool {
        matches!(self, ModelSpec::Mlp { .. } | ModelSpec::Lr | ModelSpec::Svm | ModelSpec::Knn { .. })
    }

    /// Every pinned hyperparameter of this family, for run metadata.
    pub fn hyperparameters(&self, config: &TrainConfig) -> serde_json::Value {
        let standardized = config.standardize && self.scale_sensitive();
        match self {
            ModelSpec::Mlp { hidden } => json!({
                "hidden_layers": hidden,
                "hidden_activation": "relu",
                "output": "softmax",
                "loss": "cross_entropy",
                "optimizer": "adam",
                "adam": config.adam,
                "batch": "full",
                "init": "glorot_uniform",
                "max_epochs": config.max_epochs,
                "patience": config.patience,
                "validation_fraction": config.validation_fraction,
                "restore_best": true,
                "standardized": standardized,
            }),
            ModelSpec::Xgb { rounds } => json!({
                "options": BoostOptions::with_rounds(*rounds),
                "objective": "softmax",
                "split_search": "exact_greedy",
                "standardized": standardized,
            }),
            ModelSpec::Rf { trees } => json!({
                "trees": trees,
                "criterion": "gini",
                "bootstrap": true,
                "max_features": "floor(sqrt(d))",
                "max_depth": null,
                "aggregation": "majority_vote",
                "standardized": standardized,
            }),
            ModelSpec::Svm => json!({
                "options": SvmOptions::default(),
                "kernel": "rbf",
                "gamma": "1/(d*var(X))",
                "multiclass": "one_vs_one",
                "standardized": standardized,
            }),
            ModelSpec::Lr => json!({
                "options": LogisticOptions::default(),
                "penalty": "l2",
                "multiclass": "multinomial",
                "solver": "lbfgs",
                "standardized": standardized,
            }),
            ModelSpec::Dt => json!({
                "criterion": "gini",
                "max_depth": null,
                "max_features": null,
                "standardized": standardized,
            }),
            ModelSpec::Knn { k } => json!({
                "k": k,
                "metric": "euclidean",
                "standardized": standardized,
            }),
            ModelSpec::ZeroRule => json!({}),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Mlp { hidden } if hidden.is_empty() => write!(f, "MLP"),
            ModelSpec::Mlp { hidden } => {
                let parts: Vec<String> = hidden.iter().map(|h| h.to_string()).collect();
                write!(f, "MLP({})", parts.join(", "))
            }
            ModelSpec::Xgb { rounds } => write!(f, "XGB({rounds})"),
            ModelSpec::Rf { trees } => write!(f, "RF({trees})"),
            ModelSpec::Svm => write!(f, "SVM"),
            ModelSpec::Lr => write!(f, "LR"),
            ModelSpec::Dt => write!(f, "DT"),
            ModelSpec::Knn { k } => write!(f, "NN({k})"),
            ModelSpec::ZeroRule => write!(f, "ZeroR"),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || ModelError::UnknownSpec(s.to_string());
        let s = s.trim();
        let (family, args) = match s.find('(') {
            Some(open) => {
                let close = s.strip_suffix(')').ok_or_else(bad)?;
                let args: std::result::Result<Vec<usize>, _> =
                    close[open + 1..].split(',').map(|a| a.trim().parse::<usize>()).collect();
                (&s[..open], args.map_err(|_| bad())?)
            }
            None => (s, Vec::new()),
        };
        let one = |args: &[usize]| match args {
            [v] if *v > 0 => Ok(*v),
            _ => Err(bad()),
        };
        match family.to_ascii_uppercase().as_str() {
            "MLP" if args.iter().all(|&a| a > 0) => Ok(ModelSpec::Mlp { hidden: args }),
            "XGB" => Ok(ModelSpec::Xgb { rounds: one(&args)? }),
            "RF" => Ok(ModelSpec::Rf { trees: one(&args)? }),
            "NN" => Ok(ModelSpec::Knn { k: one(&args)? }),
            "SVM" if args.is_empty() => Ok(ModelSpec::Svm),
            "LR" if args.is_empty() => Ok(ModelSpec::Lr),
            "DT" if args.is_empty() => Ok(ModelSpec::Dt),
            "ZEROR" if args.is_empty() => Ok(ModelSpec::ZeroRule),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub validation_fraction: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub adam: AdamParams,
    /// Standardize inputs of scale-sensitive families (MLP, LR, SVM, NN).
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            validation_fraction: 0.2,
            patience: 50,
            max_epochs: 10_000,
            adam: AdamParams::default(),
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Params {
    Mlp(Mlp),
    Lr(LogisticModel),
    Dt(Tree),
    Rf(RandomForest),
    Xgb(GradientBoosting),
    Svm(SvmModel),
    Knn(KNearest),
    ZeroRule { class: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs_run: Option<usize>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    pub iterations: Option<usize>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub width: usize,
    pub n_classes: usize,
    pub standardizer: Option<Standardizer>,
    pub params: Params,
    pub meta: TrainMeta,
}

pub fn train(spec: &ModelSpec, data: &Dataset, config: &TrainConfig) -> Result<TrainedModel> {
    data.validate_for_training()?;
    let standardizer = (config.standardize && spec.scale_sensitive()).then(|| Standardizer::fit(data.x.view()));
    let scaled;
    let fit_data = match &standardizer {
        Some(s) => {
            scaled = Dataset {
                x: s.transform(data.x.view()),
                y: data.y.clone(),
                n_classes: data.n_classes,
            };
            &scaled
        }
        None => data,
    };
    let seed = derive_seed(config.seed, &[0x6d6f_6465_6c]);
    let mut meta = TrainMeta {
        seed: config.seed,
        converged: true,
        ..TrainMeta::default()
    };
    let params = match spec {
        ModelSpec::Mlp { hidden } => {
            let opts = MlpOptions {
                hidden: hidden.clone(),
                adam: config.adam,
                max_epochs: config.max_epochs,
                patience: config.patience,
                validation_fraction: config.validation_fraction,
            };
            let mut rng = stream(seed, &[]);
            let fit = mlp::fit(fit_data, &opts, &mut rng);
            meta.epochs_run = Some(fit.epochs_run);
            meta.best_epoch = Some(fit.best_epoch);
            meta.stopped_early = fit.stopped_early;
            Params::Mlp(fit.model)
        }
        ModelSpec::Lr => {
            let model = logistic::fit(fit_data, &LogisticOptions::default());
            meta.iterations = Some(model.iterations);
            meta.converged = model.converged;
            Params::Lr(model)
        }
        ModelSpec::Dt => {
            let mut rng = stream(seed, &[]);
            let columns = Columns::from_rows(fit_data.x.view());
            Params::Dt(Tree::fit(
                &columns,
                &fit_data.y,
                fit_data.n_classes,
                (0..fit_data.len()).collect(),
                &TreeOptions::default(),
                &mut rng,
            ))
        }
        ModelSpec::Rf { trees } => Params::Rf(RandomForest::fit(fit_data, *trees, seed)),
        ModelSpec::Xgb { rounds } => Params::Xgb(GradientBoosting::fit(fit_data, &BoostOptions::with_rounds(*rounds))),
        ModelSpec::Svm => {
            let model = SvmModel::fit(fit_data, &SvmOptions::default());
            meta.iterations = Some(model.machines.iter().map(|m| m.iterations).sum());
            meta.converged = model.converged();
            Params::Svm(model)
        }
        ModelSpec::Knn { k } => Params::Knn(KNearest::fit(fit_data, *k)),
        ModelSpec::ZeroRule => {
            let counts = fit_data.class_counts();
            let class = crate::data::argmax(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
            Params::ZeroRule { class }
        }
    };
    Ok(TrainedModel {
        spec: spec.clone(),
        width: data.width(),
        n_classes: data.n_classes,
        standardizer,
        params,
        meta,
    })
}

const DUMP_FORMAT: &str = "facegrowth-model";
const DUMP_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Dump {
    format: String,
    version: u32,
    model: TrainedModel,
}

impl TrainedModel {
    fn prepare(&self, x: ArrayView2<f64>) -> Result<Option<Array2<f64>>> {
        if x.ncols() != self.width {
            return Err(ModelError::WidthMismatch {
                expected: self.width,
                got: x.ncols(),
            });
        }
        check_finite(x)?;
        Ok(self.standardizer.as_ref().map(|s| s.transform(x)))
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        Ok(match self.prepare(x)? {
            Some(scaled) => self.predict_prepared(scaled.view()),
            None => self.predict_prepared(x),
        })
    }

    fn predict_prepared(&self, x: ArrayView2<f64>) -> Vec<usize> {
        match &self.params {
            Params::Mlp(m) => m
                .predict_proba(x)
                .axis_iter(Axis(0))
                .map(|r| crate::data::argmax(r.as_slice().expect("contiguous row")))
                .collect(),
            Params::Lr(m) => m
                .decision(x)
                .axis_iter(Axis(0))
                .map(|r| crate::data::argmax(r.as_slice().expect("contiguous row")))
                .collect(),
            Params::Dt(t) => x.axis_iter(Axis(0)).map(|r| t.predict_row(r)).collect(),
            Params::Rf(f) => f.predict(x),
            Params::Xgb(b) => b.predict(x),
            Params::Svm(s) => s.predict(x),
            Params::Knn(k) => k.predict(x),
            Params::ZeroRule { class } => vec![*class; x.nrows()],
        }
    }

    /// Class probabilities; only perceptrons expose them.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Option<Array2<f64>>> {
        let Params::Mlp(m) = &self.params else {
            return Ok(None);
        };
        Ok(Some(match self.prepare(x)? {
            Some(scaled) => m.predict_proba(scaled.view()),
            None => m.predict_proba(x),
        }))
    }

    /// Versioned JSON dump carrying spec, seed and parameters.
    pub fn to_json(&self) -> Result<String> {
        let dump = Dump {
            format: DUMP_FORMAT.to_string(),
            version: DUMP_VERSION,
            model: self.clone(),
        };
        serde_json::to_string(&dump).map_err(|e| ModelError::Dump(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dump: Dump = serde_json::from_str(text).map_err(|e| ModelError::Dump(e.to_string()))?;
        if dump.format != DUMP_FORMAT || dump.version != DUMP_VERSION {
            return Err(ModelError::Dump(format!(
                "unsupported dump {} v{}",
                dump.format, dump.version
            )));
        }
        Ok(dump.model)
    }
}
