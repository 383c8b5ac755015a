use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("shape mismatch in {context}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("cannot decode image {}: {source}", path.display())]
    CorruptImage {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("value out of range in {context}: {value}")]
    OutOfRange { context: &'static str, value: f64 },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("no prompt component survived filtering")]
    EmptyPrompt,

    #[error("segmenter backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("segmenter rejected prompt: {0}")]
    PromptRejected(String),

    #[error("quality scorer unavailable: {0}")]
    ScorerUnavailable(String),

    #[error("unknown refinement strategy `{0}`")]
    UnknownStrategy(String),

    #[error("prediction/ground-truth name mismatch: missing predictions {missing_pred:?}, missing ground truth {missing_gt:?}")]
    NameMismatch {
        missing_pred: Vec<String>,
        missing_gt: Vec<String>,
    },

    #[error("malformed report {}: {reason}", path.display())]
    MalformedReport { path: PathBuf, reason: String },

    #[error("invalid attribute file: {0}")]
    Attributes(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn shape(context: &'static str, expected: (usize, usize), found: (usize, usize)) -> Self {
        Error::ShapeMismatch {
            context,
            expected,
            found,
        }
    }
}
