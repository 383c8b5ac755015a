use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, IndexOp, Module, Tensor};
use candle_nn::VarBuilder;
use candle_transformers::models::segment_anything::image_encoder::ImageEncoderViT;
use candle_transformers::models::segment_anything::mask_decoder::MaskDecoder;
use candle_transformers::models::segment_anything::prompt_encoder::PromptEncoder;
use candle_transformers::models::segment_anything::tiny_vit::{tiny_vit_5m, TinyViT};
use hypsam_core::image_ops::resize_rgb_bilinear;
use hypsam_core::p2rnet::{SegmentOutput, SegmentQuery, Segmenter};
use hypsam_core::{Error, Mask, Result, SaliencyMap};
use image::RgbImage;

const IMAGE_SIZE: usize = 1024;
const EMBED_SIZE: usize = 64;
const MASK_SIZE: usize = 256;
const PROMPT_DIM: usize = 256;
const PIXEL_MEAN: [f32; 3] = [123.675, 116.28, 103.53];
const PIXEL_STD: [f32; 3] = [58.395, 57.12, 57.375];

/// Logit magnitude given to foreground/background pixels of a dense mask prompt.
pub const MASK_LOGIT: f32 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamVariant {
    VitB,
    VitL,
    VitH,
    /// TinyViT image encoder with the standard prompt encoder and decoder.
    Mobile,
}

impl SamVariant {
    pub const ALL: [SamVariant; 4] = [Self::VitB, Self::VitL, Self::VitH, Self::Mobile];

    pub fn name(self) -> &'static str {
        match self {
            Self::VitB => "sam_vit_b",
            Self::VitL => "sam_vit_l",
            Self::VitH => "sam_vit_h",
            Self::Mobile => "mobile_sam",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == name)
    }

    pub fn weights_file(self) -> &'static str {
        match self {
            Self::VitB => "sam_vit_b_01ec64.safetensors",
            Self::VitL => "sam_vit_l_0b3195.safetensors",
            Self::VitH => "sam_vit_h_4b8939.safetensors",
            Self::Mobile => "mobile_sam-tiny-vitt.safetensors",
        }
    }

    /// `(embed_dim, depth, heads, global attention blocks)` of the ViT encoders.
    fn vit(self) -> Option<(usize, usize, usize, &'static [usize])> {
        match self {
            Self::VitB => Some((768, 12, 12, &[2, 5, 8, 11])),
            Self::VitL => Some((1024, 24, 16, &[5, 11, 17, 23])),
            Self::VitH => Some((1280, 32, 16, &[7, 15, 23, 31])),
            Self::Mobile => None,
        }
    }
}

enum Encoder {
    Vit(Box<ImageEncoderViT>),
    Tiny(Box<TinyViT>),
}

impl Encoder {
    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        match self {
            Self::Vit(e) => e.forward(x),
            Self::Tiny(e) => e.forward(x),
        }
    }
}

/// Frozen Segment Anything model driven by box, point and dense mask prompts.
pub struct SamSegmenter {
    variant: SamVariant,
    encoder: Encoder,
    prompt: PromptEncoder,
    decoder: MaskDecoder,
    weights: Vec<(String, Tensor)>,
    device: Device,
}

/// Image embedding plus the geometry needed to map prompts and masks.
pub struct SamEmbedding {
    embedding: Tensor,
    /// Original `(height, width)`.
    dim: (usize, usize),
    /// Size after scaling the long side to the encoder input.
    scaled: (usize, usize),
}

fn unavailable(e: impl std::fmt::Display) -> Error {
    Error::BackendUnavailable(e.to_string())
}

impl SamSegmenter {
    /// Loads `variant` from its file in `cache`.
    pub fn from_cache(variant: SamVariant, cache: &Path, device: &Device) -> Result<Self> {
        Self::load(variant, &cache.join(variant.weights_file()), device)
    }

    pub fn load(variant: SamVariant, path: &Path, device: &Device) -> Result<Self> {
        if !path.is_file() {
            return Err(unavailable(format!(
                "segmenter weights not found at {}",
                path.display()
            )));
        }
        let tensors = candle_core::safetensors::load(path, device).map_err(unavailable)?;
        Self::from_tensors(variant, tensors, device)
    }

    /// Builds from in-memory tensors; every tensor the architecture needs
    /// must be present.
    pub fn from_tensors(
        variant: SamVariant,
        tensors: HashMap<String, Tensor>,
        device: &Device,
    ) -> Result<Self> {
        let mut weights: Vec<(String, Tensor)> = tensors
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        weights.sort_by(|a, b| a.0.cmp(&b.0));
        let vb = VarBuilder::from_tensors(tensors, DType::F32, device);
        let built = Self::build(variant, vb).map_err(unavailable)?;
        Ok(Self { weights, ..built })
    }

    /// Same architecture with arbitrary weights from `vb`; the checksum then
    /// covers no tensors.
    pub fn build(variant: SamVariant, vb: VarBuilder) -> candle_core::Result<Self> {
        let device = vb.device().clone();
        let encoder = match variant.vit() {
            Some((dim, depth, heads, global)) => Encoder::Vit(Box::new(ImageEncoderViT::new(
                IMAGE_SIZE,
                16,
                3,
                dim,
                depth,
                heads,
                PROMPT_DIM,
                true,
                true,
                true,
                14,
                global,
                vb.pp("image_encoder"),
            )?)),
            None => Encoder::Tiny(Box::new(tiny_vit_5m(vb.pp("image_encoder"))?)),
        };
        let prompt = PromptEncoder::new(
            PROMPT_DIM,
            (EMBED_SIZE, EMBED_SIZE),
            (IMAGE_SIZE, IMAGE_SIZE),
            16,
            vb.pp("prompt_encoder"),
        )?;
        let decoder = MaskDecoder::new(PROMPT_DIM, 3, 3, 256, vb.pp("mask_decoder"))?;
        Ok(Self {
            variant,
            encoder,
            prompt,
            decoder,
            weights: Vec::new(),
            device,
        })
    }

    pub fn variant(&self) -> SamVariant {
        self.variant
    }

    fn scale(dim: (usize, usize)) -> f64 {
        IMAGE_SIZE as f64 / dim.0.max(dim.1) as f64
    }

    fn dense_prompt(&self, mask: &Mask, emb: &SamEmbedding) -> Result<Tensor> {
        let (sh, sw) = emb.scaled;
        let (mh, mw) = (sh.div_ceil(4).min(MASK_SIZE), sw.div_ceil(4).min(MASK_SIZE));
        let small = SaliencyMap::from(mask).resize(mh, mw);
        let mut data = vec![-MASK_LOGIT; MASK_SIZE * MASK_SIZE];
        for ((y, x), &v) in small.as_array().indexed_iter() {
            data[y * MASK_SIZE + x] = if v >= 0.5 { MASK_LOGIT } else { -MASK_LOGIT };
        }
        Tensor::from_vec(data, (1, 1, MASK_SIZE, MASK_SIZE), &self.device).map_err(unavailable)
    }

    /// Prompt embeddings as the reference implementation builds them.
    /// Boxes and points are embedded separately because candle's encoder
    /// returns box corners flattened to `(B, 512)` and cannot mix them with
    /// points; the padding point is dropped when a box is present.
    fn sparse_and_dense(
        &self,
        points: Option<&(Tensor, Tensor)>,
        boxes: Option<&Tensor>,
        mask: Option<&Tensor>,
    ) -> candle_core::Result<(Tensor, Tensor)> {
        let mut parts = Vec::new();
        let mut dense = None;
        if let Some((coords, labels)) = points {
            let (sp, d) = self.prompt.forward(Some((coords, labels)), None, mask)?;
            let sp = if boxes.is_some() {
                sp.narrow(1, 0, coords.dim(1)?)?
            } else {
                sp
            };
            parts.push(sp);
            dense = Some(d);
        }
        if let Some(b) = boxes {
            let (sb, d) = self.prompt.forward(None, Some(b), mask)?;
            parts.push(sb.reshape((b.dim(0)?, 2, PROMPT_DIM))?);
            dense = Some(d);
        }
        match dense {
            Some(d) => Ok((Tensor::cat(&parts, 1)?, d)),
            None => self.prompt.forward(None, None, mask),
        }
    }

    fn decode_inner(&self, emb: &SamEmbedding, query: &SegmentQuery<'_>) -> Result<SegmentOutput> {
        let s = Self::scale(emb.dim);
        let dev = &self.device;
        let points = if query.points.is_empty() {
            None
        } else {
            let n = query.points.len();
            let xy: Vec<f32> = query
                .points
                .iter()
                .flat_map(|&(x, y)| [(x * s) as f32, (y * s) as f32])
                .collect();
            Some((
                Tensor::from_vec(xy, (1, n, 2), dev).map_err(unavailable)?,
                Tensor::ones((1, n), DType::F32, dev).map_err(unavailable)?,
            ))
        };
        let boxes = query
            .bbox
            .map(|b| {
                let v = [b.x0, b.y0, b.x1, b.y1].map(|c| (c as f64 * s) as f32);
                Tensor::from_vec(v.to_vec(), (1, 4), dev)
            })
            .transpose()
            .map_err(unavailable)?;
        let dense = query.dense.map(|m| self.dense_prompt(m, emb)).transpose()?;
        let (sparse, dense) = self
            .sparse_and_dense(points.as_ref(), boxes.as_ref(), dense.as_ref())
            .map_err(unavailable)?;
        let pe = self.prompt.get_dense_pe().map_err(unavailable)?;
        let (masks, iou) = self
            .decoder
            .forward(&emb.embedding, &pe, &sparse, &dense, false)
            .map_err(unavailable)?;
        let (sh, sw) = emb.scaled;
        let (mh, mw) = (sh.div_ceil(4).min(MASK_SIZE), sw.div_ceil(4).min(MASK_SIZE));
        let run = || -> candle_core::Result<(Vec<f32>, f32)> {
            let logits = masks.i((0, 0, ..mh, ..mw))?;
            let probs = candle_nn::ops::sigmoid(&logits)?
                .flatten_all()?
                .to_vec1::<f32>()?;
            let conf = iou
                .flatten_all()?
                .to_vec1::<f32>()?
                .first()
                .copied()
                .unwrap_or(0.0);
            Ok((probs, conf))
        };
        let (probs, confidence) = run().map_err(unavailable)?;
        let small = ndarray::Array2::from_shape_vec((mh, mw), probs).expect("mask crop size");
        let map = SaliencyMap::from_clamped(small).resize(emb.dim.0, emb.dim.1);
        Ok(SegmentOutput {
            mask: map,
            confidence,
        })
    }
}

impl Segmenter for SamSegmenter {
    type Embedding = SamEmbedding;

    fn name(&self) -> &str {
        self.variant.name()
    }

    fn embed(&self, image: &RgbImage) -> Result<SamEmbedding> {
        let dim = (image.height() as usize, image.width() as usize);
        if dim.0 == 0 || dim.1 == 0 {
            return Err(Error::shape("segmenter input", (1, 1), dim));
        }
        let s = Self::scale(dim);
        let scaled = (
            ((dim.0 as f64 * s).round() as usize).clamp(1, IMAGE_SIZE),
            ((dim.1 as f64 * s).round() as usize).clamp(1, IMAGE_SIZE),
        );
        let chw = resize_rgb_bilinear(image, scaled.0, scaled.1);
        let mut data = vec![0f32; 3 * IMAGE_SIZE * IMAGE_SIZE];
        for ((c, y, x), &v) in chw.indexed_iter() {
            data[(c * IMAGE_SIZE + y) * IMAGE_SIZE + x] = (v - PIXEL_MEAN[c]) / PIXEL_STD[c];
        }
        let embedding = Tensor::from_vec(data, (1, 3, IMAGE_SIZE, IMAGE_SIZE), &self.device)
            .and_then(|x| self.encoder.forward(&x))
            .map_err(unavailable)?;
        Ok(SamEmbedding {
            embedding,
            dim,
            scaled,
        })
    }

    fn decode(&self, embedding: &SamEmbedding, query: &SegmentQuery<'_>) -> Result<SegmentOutput> {
        self.decode_inner(embedding, query)
    }

    fn weights_checksum(&self) -> Result<String> {
        let mut chunks = Vec::with_capacity(self.weights.len() * 2);
        for (name, t) in &self.weights {
            chunks.push(name.as_bytes().to_vec());
            let v = t
                .to_dtype(DType::F32)
                .and_then(|t| t.flatten_all())
                .and_then(|t| t.to_vec1::<f32>())
                .map_err(unavailable)?;
            chunks.push(v.iter().flat_map(|f| f.to_le_bytes()).collect());
        }
        Ok(crate::sha256_hex(chunks))
    }
}
