//! The full network: dual-stream encoder, per-level interaction units, three
//! branch decoders, the boundary decoder and decision fusion.

use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Module, Tensor};
use candle_nn::Conv2d;
use hypsam_core::data::TensorPair;
use hypsam_core::SaliencyMap;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::backbone::{pretrained_path, Backbone, BackboneKind};
use crate::decoder::{BoundaryDecoder, BranchDecoder, DecisionFusion, Pyramid};
use crate::dim::{DimConfig, DimOutput, DimUnit};
use crate::error::{Error, Result};
use crate::layers::{conv1x1, resize_bilinear};
use crate::params::ParamStore;
use crate::swin::remap_checkpoint;

/// Environment variable naming the directory that holds pretrained weights.
pub const CACHE_ENV: &str = "HYPSAM_CACHE";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DfNetConfig {
    pub backbone: BackboneKind,
    /// Initialize the encoder from pretrained weights found in the cache.
    pub pretrained: bool,
    pub channels: usize,
    pub kernels: usize,
    pub kernel_size: usize,
    pub reduction: usize,
    pub resolution: usize,
}

impl Default for DfNetConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneKind::Swinv2Base,
            pretrained: true,
            channels: 64,
            kernels: 4,
            kernel_size: 3,
            reduction: 4,
            resolution: 384,
        }
    }
}

impl DfNetConfig {
    /// Randomly initialized CNN backbone at a small resolution.
    pub fn tiny(resolution: usize) -> Self {
        Self {
            backbone: BackboneKind::Tiny,
            pretrained: false,
            channels: 16,
            resolution,
            ..Self::default()
        }
    }

    pub fn dim(&self) -> DimConfig {
        DimConfig {
            channels: self.channels,
            kernels: self.kernels,
            kernel_size: self.kernel_size,
            reduction: self.reduction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution == 0 || self.resolution % 32 != 0 {
            return Err(Error::Config(format!(
                "resolution must be a positive multiple of 32, got {}",
                self.resolution
            )));
        }
        if self.channels == 0
            || self.kernels == 0
            || self.kernel_size % 2 == 0
            || self.reduction == 0
        {
            return Err(Error::Config(
                "channels, kernels and reduction must be positive and kernel_size odd".into(),
            ));
        }
        Ok(())
    }
}

/// Sigmoid outputs `B×1×S×S` of every head.
#[derive(Clone, Debug)]
pub struct PredictionTensors {
    pub mixed: Tensor,
    pub rgb: Tensor,
    pub thermal: Tensor,
    pub boundary: Tensor,
    pub fused: Tensor,
}

/// The five maps of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSet {
    pub sal_mixed: SaliencyMap,
    pub sal_rgb: SaliencyMap,
    pub sal_thermal: SaliencyMap,
    pub sal_boundary: SaliencyMap,
    pub sal_fused: SaliencyMap,
}

/// Intermediate features, exposed for inspection.
#[derive(Clone, Debug)]
pub struct Features {
    pub rgb: Pyramid,
    pub thermal: Pyramid,
    pub mixed: Pyramid,
    pub decoded_rgb: Tensor,
    pub decoded_thermal: Tensor,
    pub decoded_mixed: Tensor,
    pub decoded_boundary: Tensor,
    pub decoded_fused: Tensor,
}

pub struct DfNet {
    cfg: DfNetConfig,
    store: ParamStore,
    device: Device,
    dtype: DType,
    rgb: Box<dyn Backbone>,
    thermal: Box<dyn Backbone>,
    compress_r: Vec<Conv2d>,
    compress_t: Vec<Conv2d>,
    dims: Vec<DimUnit>,
    dec_r: BranchDecoder,
    dec_t: BranchDecoder,
    dec_m: BranchDecoder,
    dec_b: BoundaryDecoder,
    fuse: DecisionFusion,
    heads: [Conv2d; 5],
}

fn cache_dir(cache: Option<&Path>) -> Option<PathBuf> {
    cache
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from))
}

impl DfNet {
    /// Fresh model. Parameters are seeded by `seed`; the two streams start
    /// from identical weights. With `cfg.pretrained`, encoder weights are
    /// read from `cache` (or `$HYPSAM_CACHE`).
    pub fn new(
        cfg: DfNetConfig,
        seed: u64,
        dtype: DType,
        device: &Device,
        cache: Option<&Path>,
    ) -> Result<Self> {
        cfg.validate()?;
        let store = ParamStore::new(seed)
            .with_init_alias("backbone.thermal.", "backbone.rgb.")
            .with_init_alias("compress.thermal.", "compress.rgb.");
        if cfg.pretrained {
            match cfg.backbone.weights_file() {
                Some(_) => {
                    let dir = cache_dir(cache);
                    let path = dir
                        .as_deref()
                        .and_then(|d| pretrained_path(cfg.backbone, d))
                        .unwrap_or_else(|| {
                            PathBuf::from(cfg.backbone.weights_file().unwrap_or_default())
                        });
                    if !path.is_file() {
                        return Err(Error::BackboneWeightsMissing(path));
                    }
                    load_backbone(&store, &path, dtype, device)?;
                }
                None => log::warn!(
                    "backbone {} has no pretrained weights; using random init",
                    cfg.backbone.name()
                ),
            }
        }
        Self::build(cfg, store, dtype, device)
    }

    /// Builds the network over an existing store; absent parameters are
    /// created unless the store is strict.
    pub fn build(
        cfg: DfNetConfig,
        store: ParamStore,
        dtype: DType,
        device: &Device,
    ) -> Result<Self> {
        cfg.validate()?;
        let vb = store.var_builder(dtype, device);
        let rgb = cfg.backbone.build(cfg.resolution, vb.pp("backbone.rgb"))?;
        let thermal = cfg
            .backbone
            .build(cfg.resolution, vb.pp("backbone.thermal"))?;
        let c = cfg.channels;
        let mut compress_r = Vec::with_capacity(4);
        let mut compress_t = Vec::with_capacity(4);
        let mut dims = Vec::with_capacity(4);
        for (i, &c_in) in rgb.channels().iter().enumerate() {
            let l = i + 2;
            compress_r.push(conv1x1(c_in, c, vb.pp(format!("compress.rgb.{l}")))?);
            compress_t.push(conv1x1(c_in, c, vb.pp(format!("compress.thermal.{l}")))?);
            dims.push(DimUnit::new(cfg.dim(), vb.pp(format!("dim.{l}")))?);
        }
        let heads = ["m", "r", "t", "b", "f"].map(|h| conv1x1(c, 1, vb.pp(format!("head.{h}"))));
        let [hm, hr, ht, hb, hf] = heads;
        Ok(Self {
            dec_r: BranchDecoder::new(c, vb.pp("dec_r"))?,
            dec_t: BranchDecoder::new(c, vb.pp("dec_t"))?,
            dec_m: BranchDecoder::new(c, vb.pp("dec_m"))?,
            dec_b: BoundaryDecoder::new(c, vb.pp("dec_b"))?,
            fuse: DecisionFusion::new(c, vb.pp("fuse"))?,
            heads: [hm?, hr?, ht?, hb?, hf?],
            cfg,
            store,
            device: device.clone(),
            dtype,
            rgb,
            thermal,
            compress_r,
            compress_t,
            dims,
        })
    }

    pub fn config(&self) -> &DfNetConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn dim_unit(&self, level: usize) -> &DimUnit {
        &self.dims[level - 2]
    }

    pub fn fusion(&self) -> &DecisionFusion {
        &self.fuse
    }

    pub fn decoder(&self, branch: char) -> Option<&BranchDecoder> {
        match branch {
            'r' | 'R' => Some(&self.dec_r),
            't' | 'T' => Some(&self.dec_t),
            'm' | 'M' => Some(&self.dec_m),
            _ => None,
        }
    }

    pub fn boundary_decoder(&self) -> &BoundaryDecoder {
        &self.dec_b
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (_, c, h, w) = x.dims4()?;
        let s = self.cfg.resolution;
        if (c, h, w) != (3, s, s) {
            return Err(Error::ShapeMismatch {
                context: "network input",
                expected: vec![3, s, s],
                found: vec![c, h, w],
            });
        }
        Ok(())
    }

    /// Compressed pyramids of both streams.
    pub fn extract_features(
        &self,
        rgb: &Tensor,
        thermal: &Tensor,
        train: bool,
    ) -> Result<(Pyramid, Pyramid)> {
        self.check_input(rgb)?;
        self.check_input(thermal)?;
        let run = |bb: &dyn Backbone, comp: &[Conv2d], x: &Tensor| -> Result<Pyramid> {
            let feats = bb.forward_t(&x.to_dtype(self.dtype)?, train)?;
            let mut out = Vec::with_capacity(4);
            for (f, c) in feats.iter().zip(comp) {
                out.push(c.forward(f)?);
            }
            let [a, b, c, d]: [Tensor; 4] = out.try_into().expect("four levels");
            Ok(Pyramid([a, b, c, d]))
        };
        Ok((
            run(self.rgb.as_ref(), &self.compress_r, rgb)?,
            run(self.thermal.as_ref(), &self.compress_t, thermal)?,
        ))
    }

    pub fn features(&self, rgb: &Tensor, thermal: &Tensor, train: bool) -> Result<Features> {
        let (pr, pt) = self.extract_features(rgb, thermal, train)?;
        let mut mixed = Vec::with_capacity(4);
        for i in 0..4 {
            let DimOutput { compressed, .. } = self.dims[i].forward(&pr.0[i], &pt.0[i])?;
            mixed.push(compressed);
        }
        let [a, b, c, d]: [Tensor; 4] = mixed.try_into().expect("four levels");
        let pm = Pyramid([a, b, c, d]);
        let decoded_rgb = self.dec_r.forward_t(&pr, train)?;
        let decoded_thermal = self.dec_t.forward_t(&pt, train)?;
        let decoded_mixed = self.dec_m.forward_t(&pm, train)?;
        let decoded_boundary = self.dec_b.forward_t(pm.level(5), pm.level(2), train)?;
        let decoded_fused = self.fuse.forward_t(
            &decoded_mixed,
            &decoded_rgb,
            &decoded_thermal,
            &decoded_boundary,
            train,
        )?;
        Ok(Features {
            rgb: pr,
            thermal: pt,
            mixed: pm,
            decoded_rgb,
            decoded_thermal,
            decoded_mixed,
            decoded_boundary,
            decoded_fused,
        })
    }

    /// Sigmoid maps at the input resolution. `rgb` and `thermal` are
    /// `B×3×S×S`.
    pub fn forward_t(
        &self,
        rgb: &Tensor,
        thermal: &Tensor,
        train: bool,
    ) -> Result<PredictionTensors> {
        let f = self.features(rgb, thermal, train)?;
        let s = self.cfg.resolution;
        let head = |i: usize, x: &Tensor| -> Result<Tensor> {
            let logits = resize_bilinear(&self.heads[i].forward(x)?, s, s)?;
            Ok(candle_nn::ops::sigmoid(&logits)?)
        };
        Ok(PredictionTensors {
            mixed: head(0, &f.decoded_mixed)?,
            rgb: head(1, &f.decoded_rgb)?,
            thermal: head(2, &f.decoded_thermal)?,
            boundary: head(3, &f.decoded_boundary)?,
            fused: head(4, &f.decoded_fused)?,
        })
    }

    /// Stacks prepared pairs into two `B×3×S×S` tensors.
    pub fn batch_inputs(&self, pairs: &[&TensorPair]) -> Result<(Tensor, Tensor)> {
        let s = self.cfg.resolution;
        let mut rgb = Vec::with_capacity(pairs.len() * 3 * s * s);
        let mut thermal = Vec::with_capacity(rgb.capacity());
        for p in pairs {
            if p.rgb.dim() != (3, s, s) || p.thermal.dim() != (3, s, s) {
                let (c, h, w) = p.rgb.dim();
                return Err(Error::ShapeMismatch {
                    context: "prepared pair",
                    expected: vec![3, s, s],
                    found: vec![c, h, w],
                });
            }
            rgb.extend(p.rgb.iter().copied());
            thermal.extend(p.thermal.iter().copied());
        }
        let shape = (pairs.len(), 3, s, s);
        Ok((
            Tensor::from_vec(rgb, shape, &self.device)?.to_dtype(self.dtype)?,
            Tensor::from_vec(thermal, shape, &self.device)?.to_dtype(self.dtype)?,
        ))
    }

    /// Eval-mode prediction for one prepared pair.
    pub fn predict(&self, pair: &TensorPair) -> Result<PredictionSet> {
        Ok(self.predict_batch(&[pair])?.remove(0))
    }

    pub fn predict_batch(&self, pairs: &[&TensorPair]) -> Result<Vec<PredictionSet>> {
        let (rgb, thermal) = self.batch_inputs(pairs)?;
        let out = self.forward_t(&rgb, &thermal, false)?;
        let maps = [
            &out.mixed,
            &out.rgb,
            &out.thermal,
            &out.boundary,
            &out.fused,
        ]
        .map(|t| tensor_to_maps(t));
        let [m, r, t, b, f] = maps;
        let (m, r, t, b, f) = (m?, r?, t?, b?, f?);
        Ok((0..pairs.len())
            .map(|i| PredictionSet {
                sal_mixed: m[i].clone(),
                sal_rgb: r[i].clone(),
                sal_thermal: t[i].clone(),
                sal_boundary: b[i].clone(),
                sal_fused: f[i].clone(),
            })
            .collect())
    }
}

/// `B×1×H×W` probabilities to one map per sample.
pub fn tensor_to_maps(t: &Tensor) -> Result<Vec<SaliencyMap>> {
    let (b, _, h, w) = t.dims4()?;
    let data = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
    Ok(data
        .chunks(h * w)
        .take(b)
        .map(|c| {
            SaliencyMap::from_clamped(
                Array2::from_shape_vec((h, w), c.to_vec()).expect("chunk size"),
            )
        })
        .collect())
}

/// Loads a pretrained encoder file into both streams of `store`.
pub fn load_backbone(store: &ParamStore, path: &Path, dtype: DType, device: &Device) -> Result<()> {
    let tensors = candle_core::safetensors::load(path, device)?;
    let tensors = remap_checkpoint(tensors);
    log::info!(
        "loading {} pretrained tensors from {}",
        tensors.len(),
        path.display()
    );
    for (k, v) in tensors {
        let v = v.to_dtype(dtype)?;
        store.insert(&format!("backbone.rgb.{k}"), &v)?;
        store.insert(&format!("backbone.thermal.{k}"), &v)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_model_emits_five_maps() {
        let cfg = DfNetConfig::tiny(64);
        let net = DfNet::new(cfg, 0, DType::F32, &Device::Cpu, None).unwrap();
        let x = Tensor::zeros((2, 3, 64, 64), DType::F32, &Device::Cpu).unwrap();
        let out = net.forward_t(&x, &x, false).unwrap();
        for t in [
            &out.mixed,
            &out.rgb,
            &out.thermal,
            &out.boundary,
            &out.fused,
        ] {
            assert_eq!(t.dims(), &[2, 1, 64, 64]);
        }
    }

    #[test]
    fn missing_pretrained_weights_are_reported() {
        let dir = std::env::temp_dir().join("hypsam-no-weights-here");
        let cfg = DfNetConfig::default();
        match DfNet::new(cfg, 0, DType::F32, &Device::Cpu, Some(&dir)) {
            Err(Error::BackboneWeightsMissing(p)) => assert!(p.starts_with(&dir)),
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => panic!("expected missing weights"),
        }
    }
}
