//! Dual-stream RGB-thermal saliency network with dynamic-filter fusion.

pub mod backbone;
pub mod checkpoint;
pub mod decoder;
pub mod dim;
pub mod error;
pub mod layers;
pub mod losses;
pub mod model;
pub mod params;
pub mod swin;
pub mod train;

pub use backbone::{Backbone, BackboneKind};
pub use error::{Error, Result};
pub use model::{DfNet, DfNetConfig, PredictionSet, PredictionTensors};
pub use params::ParamStore;
