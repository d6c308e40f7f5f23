use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty attention support")]
    EmptyAttentionSupport,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("duplicate parameter `{0}`")]
    DuplicateParameter(String),

    #[error("invalid case `{id}`: {reason}")]
    InvalidCase { id: String, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("unknown feature name `{0}`")]
    UnknownFeature(String),

    #[error("feature list mismatch: {0}")]
    FeatureMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("undefined AUROC: labels contain a single class")]
    UndefinedAuroc,

    #[error("undefined AUPRC: no positive labels")]
    UndefinedAuprc,

    #[error("undefined min(Se,P+): labels contain a single class")]
    UndefinedMinSePplus,

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("config: {0}")]
    Config(String),

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

    /// Stable snake_case tag for machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyAttentionSupport => "empty_attention_support",
            Error::Shape(_) => "shape",
            Error::NonFiniteGradient(_) => "non_finite_gradient",
            Error::UnknownParameter(_) => "unknown_parameter",
            Error::DuplicateParameter(_) => "duplicate_parameter",
            Error::InvalidCase { .. } => "invalid_case",
            Error::Parse { .. } => "parse",
            Error::UnknownFeature(_) => "unknown_feature",
            Error::FeatureMismatch(_) => "feature_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::UndefinedAuroc | Error::UndefinedAuprc | Error::UndefinedMinSePplus => {
                "undefined_metric"
            }
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::Fold { source, .. } => source.kind(),
            Error::EmptySelection(_) => "empty_selection",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
