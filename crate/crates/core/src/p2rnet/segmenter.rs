use image::RgbImage;
use ndarray::{Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::prompt::{BoxPrompt, HybridPrompt};
use crate::error::{Error, Result};
use crate::map::{Mask, SaliencyMap};

/// One prompt set for a single decoder pass, in image pixel coordinates.
#[derive(Clone, Copy, Debug)]
pub struct SegmentQuery<'a> {
    pub bbox: Option<BoxPrompt>,
    /// Foreground points `(x, y)`.
    pub points: &'a [(f64, f64)],
    /// Dense mask prompt at image resolution.
    pub dense: Option<&'a Mask>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentOutput {
    /// Foreground map at image resolution.
    pub mask: SaliencyMap,
    pub confidence: f32,
}

/// A frozen promptable segmenter. All methods take `&self`: inference never
/// mutates the weights, and `weights_checksum` lets callers verify that.
pub trait Segmenter {
    type Embedding;

    fn name(&self) -> &str;
    fn embed(&self, image: &RgbImage) -> Result<Self::Embedding>;
    /// Returns `PromptRejected` when the backend cannot take a prompt kind
    /// (for instance a dense mask).
    fn decode(
        &self,
        embedding: &Self::Embedding,
        query: &SegmentQuery<'_>,
    ) -> Result<SegmentOutput>;
    /// Hex digest of the serialized weights.
    fn weights_checksum(&self) -> Result<String>;
}

/// Which prompt kinds are sent to the segmenter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptKinds {
    pub mask: bool,
    pub boxes: bool,
    pub points: bool,
}

impl Default for PromptKinds {
    fn default() -> Self {
        Self {
            mask: true,
            boxes: true,
            points: false,
        }
    }
}

fn scale_box(b: BoxPrompt, from: (usize, usize), to: (usize, usize)) -> BoxPrompt {
    if from == to {
        return b;
    }
    let (sy, sx) = (to.0 as f64 / from.0 as f64, to.1 as f64 / from.1 as f64);
    let lo = |v: usize, s: f64| (v as f64 * s).floor() as usize;
    let hi = |v: usize, s: f64, n: usize| (((v + 1) as f64 * s).ceil() as usize).clamp(1, n) - 1;
    BoxPrompt {
        x0: lo(b.x0, sx).min(to.1 - 1),
        y0: lo(b.y0, sy).min(to.0 - 1),
        x1: hi(b.x1, sx, to.1),
        y1: hi(b.y1, sy, to.0),
    }
}

/// Runs the segmenter on `prompt` (one decoder pass per box), unions the
/// per-pass masks by pixelwise max and resizes the union to `out_dim`.
pub fn segment<S: Segmenter + ?Sized>(
    prompt: &HybridPrompt,
    segmenter: &S,
    kinds: PromptKinds,
    out_dim: (usize, usize),
) -> Result<SaliencyMap> {
    let img_dim = (
        prompt.image.height() as usize,
        prompt.image.width() as usize,
    );
    let coarse_dim = prompt.mask.dim();
    let dense = kinds.mask.then(|| prompt.mask.resize(img_dim.0, img_dim.1));
    let points: Vec<(f64, f64)> = prompt
        .points
        .iter()
        .map(|&(x, y)| {
            (
                (x + 0.5) * img_dim.1 as f64 / coarse_dim.1 as f64 - 0.5,
                (y + 0.5) * img_dim.0 as f64 / coarse_dim.0 as f64 - 0.5,
            )
        })
        .collect();
    let points = if kinds.points { points } else { Vec::new() };

    let mut queries: Vec<(Option<BoxPrompt>, &[(f64, f64)])> = Vec::new();
    if kinds.boxes {
        for (i, &b) in prompt.boxes.iter().enumerate() {
            let pts = points.get(i..i + 1).unwrap_or(&[]);
            queries.push((Some(scale_box(b, coarse_dim, img_dim)), pts));
        }
    } else if dense.is_some() || !points.is_empty() {
        queries.push((None, &points[..]));
    }
    if queries.is_empty() {
        return Err(Error::EmptyPrompt);
    }

    let embedding = segmenter.embed(&prompt.image)?;
    let mut use_dense = dense.is_some();
    let mut union = Array2::<f32>::zeros(img_dim);
    for (bbox, pts) in queries {
        let mut query = SegmentQuery {
            bbox,
            points: pts,
            dense: if use_dense { dense.as_ref() } else { None },
        };
        let out = match segmenter.decode(&embedding, &query) {
            Err(Error::PromptRejected(reason)) if query.dense.is_some() => {
                log::warn!(
                    "{} rejected the mask prompt ({reason}); continuing with sparse prompts only",
                    segmenter.name()
                );
                use_dense = false;
                query.dense = None;
                if query.bbox.is_none() && query.points.is_empty() {
                    return Err(Error::EmptyPrompt);
                }
                segmenter.decode(&embedding, &query)?
            }
            other => other?,
        };
        out.mask.ensure_same_dim("segmenter output", img_dim)?;
        Zip::from(&mut union)
            .and(out.mask.as_array())
            .for_each(|u, &m| *u = u.max(m));
    }
    Ok(SaliencyMap::from_clamped(union).resize(out_dim.0, out_dim.1))
}

/// Test backend: answers a box query with the box interior and a mask-only
/// query with the mask itself. Carries a small random weight vector so the
/// frozen-weight contract can be checked.
#[derive(Clone, Debug)]
pub struct StubSegmenter {
    weights: Vec<f32>,
    accept_dense: bool,
}

impl StubSegmenter {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            weights: (0..1024).map(|_| rng.random_range(-1.0..1.0)).collect(),
            accept_dense: true,
        }
    }

    /// A variant that rejects dense mask prompts.
    pub fn sparse_only(seed: u64) -> Self {
        Self {
            accept_dense: false,
            ..Self::new(seed)
        }
    }
}

impl Segmenter for StubSegmenter {
    type Embedding = (usize, usize);

    fn name(&self) -> &str {
        "stub"
    }

    fn embed(&self, image: &RgbImage) -> Result<Self::Embedding> {
        Ok((image.height() as usize, image.width() as usize))
    }

    fn decode(&self, dim: &Self::Embedding, query: &SegmentQuery<'_>) -> Result<SegmentOutput> {
        if query.dense.is_some() && !self.accept_dense {
            return Err(Error::PromptRejected("dense prompts unsupported".into()));
        }
        let mask = match (query.bbox, query.dense) {
            (Some(b), _) => Mask::new(Array2::from_shape_fn(*dim, |(y, x)| b.contains(x, y))),
            (None, Some(m)) => m.clone(),
            (None, None) => return Err(Error::PromptRejected("stub needs a box or a mask".into())),
        };
        Ok(SegmentOutput {
            mask: SaliencyMap::from(&mask),
            confidence: 1.0,
        })
    }

    fn weights_checksum(&self) -> Result<String> {
        let mut h = Sha256::new();
        for w in &self.weights {
            h.update(w.to_le_bytes());
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }
}
