use thiserror::Error;

/// Failures grouped by the exit code they map to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Backend(_) => 4,
            Self::Runtime(_) => 1,
        }
    }
}

impl From<hypsam_core::Error> for CliError {
    fn from(e: hypsam_core::Error) -> Self {
        use hypsam_core::Error as E;
        match e {
            E::BackendUnavailable(_) | E::ScorerUnavailable(_) | E::PromptRejected(_) => {
                Self::Backend(e.to_string())
            }
            E::UnknownStrategy(_) | E::OutOfRange { .. } => Self::Config(e.to_string()),
            E::NameMismatch {
                ref missing_pred,
                ref missing_gt,
            } => {
                let mut msg = String::from("prediction and ground-truth names differ");
                if !missing_pred.is_empty() {
                    msg += &format!("; no prediction for: {}", missing_pred.join(", "));
                }
                if !missing_gt.is_empty() {
                    msg += &format!("; no ground truth for: {}", missing_gt.join(", "));
                }
                Self::Data(msg)
            }
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<hypsam_dfnet::Error> for CliError {
    fn from(e: hypsam_dfnet::Error) -> Self {
        use hypsam_dfnet::Error as E;
        match e {
            E::Core(inner) => inner.into(),
            E::Config(_) => Self::Config(e.to_string()),
            E::BackboneWeightsMissing(_) => Self::Backend(e.to_string()),
            E::CheckpointIncompatible { .. }
            | E::Io(_)
            | E::SafeTensors(_)
            | E::Json(_)
            | E::ShapeMismatch { .. } => Self::Data(e.to_string()),
            E::Candle(_) => Self::Runtime(format!(
                "{e} (if memory ran out, lower train.batch or model.resolution)"
            )),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
