//! Pluggable feature extractor: the built-in one-hidden-layer network or an
//! external process speaking the extractor protocol.

pub mod external;
pub mod mlp;

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::data::DataError;
use crate::matrix::FeatureMatrix;
pub use external::ExternalModel;
pub use mlp::{learning_rate_at, MlpModel};

#[derive(Debug, thiserror::Error)]
pub enum ExtractorError {
    #[error("failed to launch extractor `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("extractor `{command} {verb}` exited with status {status:?}: {stderr}")]
    Process {
        command: String,
        verb: String,
        status: Option<i32>,
        stderr: String,
    },
    #[error("extractor protocol violation: {0}")]
    Protocol(String),
    #[error("feature dimension mismatch: model expects {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("training diverged in epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("invalid extractor configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractorKind {
    BuiltinMlp,
    External,
}

/// Default initial learning rate of the built-in network.
pub const BUILTIN_LR: f64 = 1e-3;
/// Default initial learning rate passed to external (pretrained) models.
pub const EXTERNAL_LR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorSpec {
    pub kind: ExtractorKind,
    pub hidden_width: usize,
    pub epochs: usize,
    /// `None` selects the kind's default ([`BUILTIN_LR`] or [`EXTERNAL_LR`]).
    pub lr_initial: Option<f64>,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub external_command: Option<String>,
    /// Continue from the previous model instead of a fresh initialization.
    pub warm_start: bool,
    /// Where external models and exchange files live. Defaults to a fresh
    /// directory under the system temp dir.
    pub work_dir: Option<PathBuf>,
}

impl Default for ExtractorSpec {
    fn default() -> Self {
        Self {
            kind: ExtractorKind::BuiltinMlp,
            hidden_width: 128,
            epochs: 100,
            lr_initial: None,
            momentum: 0.9,
            batch_size: 32,
            seed: 0,
            external_command: None,
            warm_start: false,
            work_dir: None,
        }
    }
}

impl ExtractorSpec {
    pub fn external(command: impl Into<String>) -> Self {
        Self {
            kind: ExtractorKind::External,
            external_command: Some(command.into()),
            ..Self::default()
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr_initial.unwrap_or(match self.kind {
            ExtractorKind::BuiltinMlp => BUILTIN_LR,
            ExtractorKind::External => EXTERNAL_LR,
        })
    }

    pub fn validate(&self) -> Result<(), ExtractorError> {
        if self.epochs == 0 {
            return Err(ExtractorError::Config("epochs must be >= 1".into()));
        }
        let lr = self.lr();
        if !(lr.is_finite() && lr > 0.0) {
            return Err(ExtractorError::Config(format!("lr_initial must be > 0, got {lr}")));
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return Err(ExtractorError::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 || self.hidden_width == 0 {
            return Err(ExtractorError::Config(
                "batch_size and hidden_width must be >= 1".into(),
            ));
        }
        if self.kind == ExtractorKind::External && self.external_command.is_none() {
            return Err(ExtractorError::Config(
                "external extractor requires external_command".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExtractorModel {
    Builtin(MlpModel),
    External(ExternalModel),
}

/// Labeled rows handed to [`train_extractor`].
#[derive(Debug, Clone, Copy)]
pub struct TrainingSet<'a> {
    pub features: &'a FeatureMatrix,
    pub labels: &'a [usize],
    /// Which rows carry human labels; forwarded to external extractors.
    pub supervised: Option<&'a [bool]>,
    pub num_classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    /// `n x K`, rows sum to one.
    pub probabilities: FeatureMatrix,
    /// Row argmax, ties to the lowest class index.
    pub predicted_label: Vec<usize>,
}

static SCRATCH_COUNTER: AtomicU64 = AtomicU64::new(0);

fn scratch_dir() -> PathBuf {
    let k = SCRATCH_COUNTER.fetch_add(1, Ordering::Relaxed);
    std::env::temp_dir().join(format!("deepfa-{}-{k}", std::process::id()))
}

/// Trains a model on `set`. `warm` is used only when `spec.warm_start` is on.
pub fn train_extractor(
    set: &TrainingSet<'_>,
    spec: &ExtractorSpec,
    warm: Option<&ExtractorModel>,
) -> Result<ExtractorModel, ExtractorError> {
    spec.validate()?;
    let n = set.features.rows();
    if set.labels.len() != n || set.supervised.is_some_and(|m| m.len() != n) {
        return Err(ExtractorError::Shape(format!(
            "{n} feature rows but {} labels",
            set.labels.len()
        )));
    }
    if n == 0 {
        return Err(ExtractorError::Shape("training set is empty".into()));
    }
    if set.num_classes == 0 || set.labels.iter().any(|&l| l >= set.num_classes) {
        return Err(ExtractorError::Shape(format!(
            "labels must lie below num_classes = {}",
            set.num_classes
        )));
    }
    if !set.features.is_finite() {
        return Err(ExtractorError::Shape("training features are not finite".into()));
    }
    let warm = if spec.warm_start { warm } else { None };
    match spec.kind {
        ExtractorKind::BuiltinMlp => {
            let cfg = mlp::MlpTraining {
                hidden: spec.hidden_width,
                epochs: spec.epochs,
                lr_initial: spec.lr(),
                momentum: spec.momentum,
                batch_size: spec.batch_size,
                seed: spec.seed,
            };
            let warm = match warm {
                Some(ExtractorModel::Builtin(m)) => Some(m),
                _ => None,
            };
            mlp::train(set.features, set.labels, set.num_classes, &cfg, warm).map(ExtractorModel::Builtin)
        }
        ExtractorKind::External => {
            let command = external::parse_command(spec.external_command.as_deref().unwrap_or(""))?;
            let work_dir = spec.work_dir.clone().unwrap_or_else(scratch_dir);
            let model_dir = match warm {
                Some(ExtractorModel::External(m)) => m.model_dir.clone(),
                _ => work_dir.join("model"),
            };
            let args = external::TrainArgs {
                raw: set.features,
                labels: set.labels,
                supervised: set.supervised,
                epochs: spec.epochs,
                lr: spec.lr(),
                momentum: spec.momentum,
                seed: spec.seed,
            };
            external::train(command, model_dir, work_dir, &args).map(ExtractorModel::External)
        }
    }
}

/// Features fed to the projection stage.
pub fn extract_features(model: &ExtractorModel, raw: &FeatureMatrix) -> Result<FeatureMatrix, ExtractorError> {
    match model {
        ExtractorModel::Builtin(m) => m.extract(raw),
        ExtractorModel::External(m) => m.extract(raw),
    }
}

pub fn predict(model: &ExtractorModel, raw: &FeatureMatrix) -> Result<PredictionResult, ExtractorError> {
    let probabilities = match model {
        ExtractorModel::Builtin(m) => m.probabilities(raw)?,
        ExtractorModel::External(m) => m.probabilities(raw)?,
    };
    let predicted_label = probabilities.iter_rows().map(argmax).collect();
    Ok(PredictionResult {
        probabilities,
        predicted_label,
    })
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = c;
        }
    }
    best
}
