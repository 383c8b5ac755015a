//! Reference backends: a Segment Anything segmenter and a CLIP image-text
//! scorer. Weights are read from a cache directory, `$HYPSAM_CACHE` by default.

use std::path::{Path, PathBuf};

mod clip;
mod sam;

pub use clip::{ClipScorer, CLIP_TOKENIZER_FILE, CLIP_WEIGHTS_FILE};
pub use sam::{SamEmbedding, SamSegmenter, SamVariant, MASK_LOGIT};

pub const CACHE_ENV: &str = "HYPSAM_CACHE";

/// `explicit`, else `$HYPSAM_CACHE`, else `./weights`.
pub fn cache_dir(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("weights"))
}

pub(crate) fn sha256_hex(chunks: impl IntoIterator<Item = Vec<u8>>) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for c in chunks {
        h.update(&c);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
