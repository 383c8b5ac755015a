//! Dataset ingestion for aligned RGB-thermal benchmarks.
//!
//! Layout on disk is `<root>/<split>/{RGB,T,GT}/<name>.<ext>`, with names
//! matched by file stem across the three folders and an optional
//! `<root>/attributes.csv` listing per-image challenge tags.

mod augment;
mod boundary;
mod prepare;
mod sample;

pub mod synthetic;

pub use augment::{augment, AugmentParams};
pub use boundary::{decouple_boundary, BoundaryLabel, BoundaryParams};
pub use prepare::{prepare, prepare_target, Normalization, TensorPair};
pub use sample::{
    decode_image, find_image, list_images, list_split, load_attributes, load_sample, Attribute,
    RgbtSample, GT_THRESHOLD, IMAGE_EXTENSIONS,
};
