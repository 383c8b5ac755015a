use std::path::Path;

use candle_core::{DType, Device, Tensor};
use candle_nn::VarBuilder;
use candle_transformers::models::clip::{ClipConfig, ClipModel};
use hypsam_core::image_ops::resize_rgb_bilinear;
use hypsam_core::p2rnet::ImageTextScorer;
use hypsam_core::{Error, Result};
use image::RgbImage;
use tokenizers::Tokenizer;

pub const CLIP_WEIGHTS_FILE: &str = "clip_vit_base_patch32.safetensors";
pub const CLIP_TOKENIZER_FILE: &str = "clip_tokenizer.json";

const INPUT: usize = 224;
const MEAN: [f32; 3] = [0.481_454_66, 0.457_827_5, 0.408_210_73];
const STD: [f32; 3] = [0.268_629_54, 0.261_302_58, 0.275_777_11];

fn unavailable(e: impl std::fmt::Display) -> Error {
    Error::ScorerUnavailable(e.to_string())
}

/// CLIP ViT-B/32 image and text embeddings.
pub struct ClipScorer {
    model: ClipModel,
    tokenizer: Tokenizer,
    device: Device,
}

impl ClipScorer {
    pub fn from_cache(cache: &Path, device: &Device) -> Result<Self> {
        Self::load(
            &cache.join(CLIP_WEIGHTS_FILE),
            &cache.join(CLIP_TOKENIZER_FILE),
            device,
        )
    }

    pub fn load(weights: &Path, tokenizer: &Path, device: &Device) -> Result<Self> {
        for p in [weights, tokenizer] {
            if !p.is_file() {
                return Err(unavailable(format!(
                    "scorer file not found at {}",
                    p.display()
                )));
            }
        }
        let tokenizer = Tokenizer::from_file(tokenizer).map_err(unavailable)?;
        // SAFETY: the file is opened read-only and not modified while mapped.
        let vb = unsafe { VarBuilder::from_mmaped_safetensors(&[weights], DType::F32, device) }
            .map_err(unavailable)?;
        Self::build(vb, tokenizer)
    }

    pub fn build(vb: VarBuilder, tokenizer: Tokenizer) -> Result<Self> {
        let device = vb.device().clone();
        let model = ClipModel::new(vb, &ClipConfig::vit_base_patch32()).map_err(unavailable)?;
        Ok(Self {
            model,
            tokenizer,
            device,
        })
    }

    /// Shorter side to 224, center crop, CLIP normalization.
    fn pixels(&self, image: &RgbImage) -> Result<Tensor> {
        let (w, h) = (image.width() as usize, image.height() as usize);
        if w == 0 || h == 0 {
            return Err(Error::shape("scorer input", (1, 1), (h, w)));
        }
        let s = INPUT as f64 / h.min(w) as f64;
        let (rh, rw) = (
            ((h as f64 * s).round() as usize).max(INPUT),
            ((w as f64 * s).round() as usize).max(INPUT),
        );
        let chw = resize_rgb_bilinear(image, rh, rw);
        let (oy, ox) = ((rh - INPUT) / 2, (rw - INPUT) / 2);
        let mut data = Vec::with_capacity(3 * INPUT * INPUT);
        for c in 0..3 {
            for y in 0..INPUT {
                for x in 0..INPUT {
                    data.push((chw[[c, oy + y, ox + x]] / 255.0 - MEAN[c]) / STD[c]);
                }
            }
        }
        Tensor::from_vec(data, (1, 3, INPUT, INPUT), &self.device).map_err(unavailable)
    }
}

impl ImageTextScorer for ClipScorer {
    fn image_features(&self, image: &RgbImage) -> Result<Vec<f32>> {
        let px = self.pixels(image)?;
        self.model
            .get_image_features(&px)
            .and_then(|f| f.flatten_all()?.to_vec1::<f32>())
            .map_err(unavailable)
    }

    fn text_features(&self, text: &str) -> Result<Vec<f32>> {
        let enc = self.tokenizer.encode(text, true).map_err(unavailable)?;
        let ids = enc.get_ids().to_vec();
        let n = ids.len();
        Tensor::from_vec(ids, (1, n), &self.device)
            .and_then(|ids| self.model.get_text_features(&ids))
            .and_then(|f| f.flatten_all()?.to_vec1::<f32>())
            .map_err(unavailable)
    }
}
