use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Candle(#[from] candle_core::Error),

    #[error(transparent)]
    Core(#[from] hypsam_core::Error),

    #[error("pretrained backbone weights requested but not found at {}", .0.display())]
    BackboneWeightsMissing(PathBuf),

    #[error("checkpoint {} is incompatible: {reason}", path.display())]
    CheckpointIncompatible { path: PathBuf, reason: String },

    #[error("shape mismatch in {context}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    SafeTensors(#[from] safetensors::SafeTensorError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn ensure_same_shape(
    context: &'static str,
    a: &candle_core::Tensor,
    b: &candle_core::Tensor,
) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch {
            context,
            expected: a.dims().to_vec(),
            found: b.dims().to_vec(),
        });
    }
    Ok(())
}
