//! Core building blocks for hybrid prompt-driven RGB-thermal salient object
//! detection: dataset handling, the saliency evaluation toolbox and the
//! training-free refinement pipeline that drives a frozen promptable segmenter.
//!
//! The trainable fusion network lives in `hypsam-dfnet`; concrete segmenter and
//! image-text scorer backends live in `hypsam-backends`. Everything here is plain
//! CPU code over [`ndarray`] arrays and [`image`] buffers.

pub mod data;
pub mod error;
pub mod image_ops;
pub mod map;
pub mod metrics;
pub mod p2rnet;

pub use error::{Error, Result};
pub use map::{Mask, SaliencyMap};
