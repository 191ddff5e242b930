use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    // embedding files
    #[error("{path}: malformed record at line {line}: {reason}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}: dimension mismatch at line {line}: expected {expected}, found {found}")]
    DimMismatch {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}: duplicate id `{id}` at line {line}")]
    DuplicateId { path: PathBuf, line: usize, id: String },
    #[error("{path}: non-finite value at line {line}")]
    NonFiniteValue { path: PathBuf, line: usize },
    #[error("{path}: label {label} at line {line} is not below num_classes {num_classes}")]
    LabelOutOfRange {
        path: PathBuf,
        line: usize,
        label: u32,
        num_classes: u32,
    },
    #[error("invalid manifest: {0}")]
    Manifest(String),

    // sampling
    #[error("class {class} has no examples")]
    EmptyClass { class: u32 },
    #[error("support size {requested} exceeds the {available} available training examples")]
    InsufficientExamples { requested: usize, available: usize },
    #[error("invalid sampling parameters: {0}")]
    InvalidSampling(String),

    // probes
    #[error("training data contains a single class")]
    SingleClassTrain,
    #[error("loss became non-finite at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("query dimension {found} does not match model dimension {expected}")]
    QueryDimMismatch { expected: usize, found: usize },
    #[error("invalid probe input: {0}")]
    InvalidProbeInput(String),

    // metrics
    #[error("no predictions to evaluate")]
    EmptyPredictions,
    #[error("metric is undefined: labels contain a single class")]
    DegenerateLabels,
    #[error("metric is undefined: no positive examples")]
    NoPositives,
    #[error("metric is undefined on every bootstrap resample")]
    AllResamplesUndefined,
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),

    // deltas
    #[error("cannot compare metric `{cell}` with `{frozen}`")]
    MetricMismatch { cell: String, frozen: String },
    #[error("prediction sets cover different example ids")]
    IdMismatch,
    #[error("no frozen baseline for model `{model}` on task `{task}`")]
    NoFrozenBaseline { model: String, task: String },

    // runner
    #[error("run directory {0} is not empty (use --resume to continue a run)")]
    RunDirNotEmpty(PathBuf),
    #[error("run directory was created from a different manifest (hash {recorded}, now {current})")]
    ManifestDrift { recorded: String, current: String },
    #[error("manifest validation failed with {0} error(s)")]
    Validation(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

/// A non-fatal observation (or a validation error) reported as data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub message: String,
}

impl Finding {
    pub fn warning(message: impl Into<String>) -> Self {
        Finding {
            severity: Severity::Warning,
            message: message.into(),
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Finding {
            severity: Severity::Error,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl std::fmt::Display for Finding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{tag}: {}", self.message)
    }
}
