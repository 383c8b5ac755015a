//! SwinV2 encoder with scaled cosine attention, log-spaced continuous
//! relative position bias and post-normalization. Parameter names follow the
//! common PyTorch layout so published checkpoints load directly.

use std::collections::HashMap;

use candle_core::{DType, Device, Module, Result, Tensor, D};
use candle_nn::{linear, linear_no_bias, Conv2d, Conv2dConfig, Linear, VarBuilder};

use crate::backbone::Backbone;
use crate::layers::LayerNorm;

#[derive(Clone, Debug, PartialEq)]
pub struct SwinV2Config {
    pub img_size: usize,
    pub embed_dim: usize,
    pub depths: [usize; 4],
    pub heads: [usize; 4],
    pub window: usize,
    /// Window size used during pretraining per stage; 0 means "same as window".
    pub pretrained_window: [usize; 4],
    pub mlp_ratio: usize,
}

impl SwinV2Config {
    pub fn base_384(img_size: usize) -> Self {
        Self {
            img_size,
            embed_dim: 128,
            depths: [2, 2, 18, 2],
            heads: [4, 8, 16, 32],
            window: 24,
            pretrained_window: [12, 12, 12, 6],
            mlp_ratio: 4,
        }
    }

    pub fn micro(img_size: usize) -> Self {
        Self {
            img_size,
            embed_dim: 16,
            depths: [1, 2, 1, 1],
            heads: [1, 2, 2, 4],
            window: 4,
            pretrained_window: [0; 4],
            mlp_ratio: 2,
        }
    }

    pub fn channels(&self) -> [usize; 4] {
        std::array::from_fn(|i| self.embed_dim << i)
    }
}

const LN_EPS: f64 = 1e-5;
const CPB_HIDDEN: usize = 512;

/// `(2w-1)²×2` table of log-spaced relative offsets and the `w²·w²` index into it.
fn relative_tables(window: usize, pretrained: usize, dev: &Device) -> Result<(Tensor, Tensor)> {
    let span = 2 * window - 1;
    let norm = if pretrained > 0 { pretrained } else { window } as f64 - 1.0;
    let norm = norm.max(1.0);
    let mut table = Vec::with_capacity(span * span * 2);
    for dy in 0..span {
        for dx in 0..span {
            for d in [dy, dx] {
                let v = (d as f64 - (window as f64 - 1.0)) / norm * 8.0;
                table.push(v.signum() * (v.abs() + 1.0).log2() / 8f64.log2());
            }
        }
    }
    let n = window * window;
    let mut index = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let dy = (i / window) as i64 - (j / window) as i64 + window as i64 - 1;
            let dx = (i % window) as i64 - (j % window) as i64 + window as i64 - 1;
            index.push((dy * span as i64 + dx) as u32);
        }
    }
    Ok((
        Tensor::from_vec(table, (span * span, 2), dev)?.to_dtype(DType::F32)?,
        Tensor::from_vec(index, n * n, dev)?,
    ))
}

struct WindowAttention {
    qkv: Tensor,
    q_bias: Tensor,
    v_bias: Tensor,
    logit_scale: Tensor,
    cpb1: Linear,
    cpb2: Linear,
    proj: Linear,
    heads: usize,
    window: usize,
    coords: Tensor,
    index: Tensor,
}

impl WindowAttention {
    fn new(
        dim: usize,
        heads: usize,
        window: usize,
        pretrained: usize,
        vb: VarBuilder,
    ) -> Result<Self> {
        let (coords, index) = relative_tables(window, pretrained, vb.device())?;
        Ok(Self {
            qkv: vb.get_with_hints(
                (3 * dim, dim),
                "qkv.weight",
                candle_nn::init::DEFAULT_KAIMING_UNIFORM,
            )?,
            q_bias: vb.get_with_hints(dim, "q_bias", candle_nn::init::ZERO)?,
            v_bias: vb.get_with_hints(dim, "v_bias", candle_nn::init::ZERO)?,
            logit_scale: vb.get_with_hints(
                (heads, 1, 1),
                "logit_scale",
                candle_nn::Init::Const(10f64.ln()),
            )?,
            cpb1: linear(2, CPB_HIDDEN, vb.pp("cpb_mlp.0"))?,
            cpb2: linear_no_bias(CPB_HIDDEN, heads, vb.pp("cpb_mlp.2"))?,
            proj: linear(dim, dim, vb.pp("proj"))?,
            heads,
            window,
            coords: coords.to_dtype(vb.dtype())?,
            index,
        })
    }

    /// `x`: `B'×N×C` windows; `mask`: `nW×N×N` additive mask for shifted windows.
    fn forward(&self, x: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
        let (bw, n, c) = x.dims3()?;
        let hd = c / self.heads;
        let bias = Tensor::cat(&[&self.q_bias, &self.v_bias.zeros_like()?, &self.v_bias], 0)?;
        let qkv = x.broadcast_matmul(&self.qkv.t()?)?.broadcast_add(&bias)?;
        let qkv = qkv
            .reshape((bw, n, 3, self.heads, hd))?
            .permute((2, 0, 3, 1, 4))?;
        let normalize = |t: Tensor| -> Result<Tensor> {
            let norm = t.sqr()?.sum_keepdim(D::Minus1)?.sqrt()?.maximum(1e-12)?;
            t.broadcast_div(&norm)
        };
        let q = normalize(qkv.get(0)?.contiguous()?)?;
        let k = normalize(qkv.get(1)?.contiguous()?)?;
        let v = qkv.get(2)?.contiguous()?;
        let scale = self.logit_scale.minimum(100f64.ln())?.exp()?;
        let mut attn = q.matmul(&k.t()?)?.broadcast_mul(&scale)?;

        let table = self
            .cpb2
            .forward(&self.cpb1.forward(&self.coords)?.relu()?)?;
        let ww = self.window * self.window;
        let rel = table
            .index_select(&self.index, 0)?
            .reshape((ww, ww, self.heads))?
            .permute((2, 0, 1))?;
        let rel = (candle_nn::ops::sigmoid(&rel.contiguous()?)? * 16.0)?;
        attn = attn.broadcast_add(&rel)?;
        if let Some(mask) = mask {
            let nw = mask.dim(0)?;
            attn = attn
                .reshape((bw / nw, nw, self.heads, n, n))?
                .broadcast_add(&mask.unsqueeze(1)?.unsqueeze(0)?)?
                .reshape((bw, self.heads, n, n))?;
        }
        let attn = candle_nn::ops::softmax(&attn, D::Minus1)?;
        let out = attn.matmul(&v)?.transpose(1, 2)?.reshape((bw, n, c))?;
        self.proj.forward(&out)
    }
}

fn partition(x: &Tensor, ws: usize) -> Result<Tensor> {
    let (b, h, w, c) = x.dims4()?;
    x.reshape((b, h / ws, ws, w / ws, ws, c))?
        .permute((0, 1, 3, 2, 4, 5))?
        .contiguous()?
        .reshape((b * (h / ws) * (w / ws), ws * ws, c))
}

fn reverse(windows: &Tensor, ws: usize, b: usize, h: usize, w: usize) -> Result<Tensor> {
    let c = windows.dim(2)?;
    windows
        .reshape((b, h / ws, w / ws, ws, ws, c))?
        .permute((0, 1, 3, 2, 4, 5))?
        .contiguous()?
        .reshape((b, h, w, c))
}

/// Additive mask keeping attention inside the regions that a cyclic shift
/// brought together.
fn shift_mask(
    h: usize,
    w: usize,
    ws: usize,
    shift: usize,
    dtype: DType,
    dev: &Device,
) -> Result<Tensor> {
    let region = |v: usize, len: usize| {
        if v < len - ws {
            0
        } else if v < len - shift {
            1
        } else {
            2
        }
    };
    let label = |y: usize, x: usize| region(y, h) * 3 + region(x, w);
    let n = ws * ws;
    let mut data = Vec::with_capacity((h / ws) * (w / ws) * n * n);
    for wy in 0..h / ws {
        for wx in 0..w / ws {
            let labels: Vec<usize> = (0..n)
                .map(|i| label(wy * ws + i / ws, wx * ws + i % ws))
                .collect();
            for &a in &labels {
                for &b in &labels {
                    data.push(if a == b { 0f32 } else { -100.0 });
                }
            }
        }
    }
    Tensor::from_vec(data, ((h / ws) * (w / ws), n, n), dev)?.to_dtype(dtype)
}

struct Block {
    attn: WindowAttention,
    norm1: LayerNorm,
    fc1: Linear,
    fc2: Linear,
    norm2: LayerNorm,
    window: usize,
    shift: usize,
    mask: Option<Tensor>,
}

impl Block {
    #[allow(clippy::too_many_arguments)]
    fn new(
        dim: usize,
        heads: usize,
        resolution: usize,
        window: usize,
        shifted: bool,
        pretrained: usize,
        mlp_ratio: usize,
        vb: VarBuilder,
    ) -> Result<Self> {
        let (window, shift) = if resolution <= window {
            (resolution, 0)
        } else {
            (window, if shifted { window / 2 } else { 0 })
        };
        let mask = if shift > 0 {
            Some(shift_mask(
                resolution,
                resolution,
                window,
                shift,
                vb.dtype(),
                vb.device(),
            )?)
        } else {
            None
        };
        Ok(Self {
            attn: WindowAttention::new(dim, heads, window, pretrained, vb.pp("attn"))?,
            norm1: LayerNorm::new(dim, LN_EPS, vb.pp("norm1"))?,
            fc1: linear(dim, dim * mlp_ratio, vb.pp("mlp.fc1"))?,
            fc2: linear(dim * mlp_ratio, dim, vb.pp("mlp.fc2"))?,
            norm2: LayerNorm::new(dim, LN_EPS, vb.pp("norm2"))?,
            window,
            shift,
            mask,
        })
    }

    /// `x`: `B×H×W×C`.
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, h, w, _) = x.dims4()?;
        let s = self.shift as i32;
        let shifted = if s > 0 {
            x.roll(-s, 1)?.roll(-s, 2)?
        } else {
            x.clone()
        };
        let windows = partition(&shifted, self.window)?;
        let attended = self.attn.forward(&windows, self.mask.as_ref())?;
        let mut merged = reverse(&attended, self.window, b, h, w)?;
        if s > 0 {
            merged = merged.roll(s, 1)?.roll(s, 2)?;
        }
        let x = (x + self.norm1.forward(&merged)?)?;
        let mlp = self.fc2.forward(&self.fc1.forward(&x)?.gelu_erf()?)?;
        x + self.norm2.forward(&mlp)?
    }
}

struct PatchMerging {
    reduction: Linear,
    norm: LayerNorm,
}

impl PatchMerging {
    fn new(dim: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            reduction: linear_no_bias(4 * dim, 2 * dim, vb.pp("reduction"))?,
            norm: LayerNorm::new(2 * dim, LN_EPS, vb.pp("norm"))?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, h, w, c) = x.dims4()?;
        let x = x
            .reshape((b, h / 2, 2, w / 2, 2, c))?
            .permute((0, 1, 3, 4, 2, 5))?
            .contiguous()?
            .reshape((b, h / 2, w / 2, 4 * c))?;
        self.norm.forward(&self.reduction.forward(&x)?)
    }
}

pub struct SwinV2 {
    patch_proj: Conv2d,
    patch_norm: LayerNorm,
    stages: Vec<(Option<PatchMerging>, Vec<Block>)>,
    channels: [usize; 4],
}

impl SwinV2 {
    pub fn new(cfg: &SwinV2Config, vb: VarBuilder) -> Result<Self> {
        if cfg.img_size % 32 != 0 {
            candle_core::bail!(
                "SwinV2 input size must be a multiple of 32, got {}",
                cfg.img_size
            );
        }
        let cw = Conv2dConfig {
            stride: 4,
            ..Default::default()
        };
        let patch_proj = candle_nn::conv2d(3, cfg.embed_dim, 4, cw, vb.pp("patch_embed.proj"))?;
        let patch_norm = LayerNorm::new(cfg.embed_dim, LN_EPS, vb.pp("patch_embed.norm"))?;
        let channels = cfg.channels();
        let mut stages = Vec::with_capacity(4);
        for i in 0..4 {
            let vb = vb.pp(format!("layers.{i}"));
            let res = cfg.img_size / 4 >> i;
            let downsample = if i > 0 {
                if res * 2 % cfg.window.min(res * 2) != 0 {
                    candle_core::bail!(
                        "stage {i} resolution {} is not a multiple of the window",
                        res * 2
                    );
                }
                Some(PatchMerging::new(channels[i - 1], vb.pp("downsample"))?)
            } else {
                None
            };
            if res > cfg.window && res % cfg.window != 0 {
                candle_core::bail!(
                    "stage {i} resolution {res} is not a multiple of window {}",
                    cfg.window
                );
            }
            let blocks = (0..cfg.depths[i])
                .map(|j| {
                    Block::new(
                        channels[i],
                        cfg.heads[i],
                        res,
                        cfg.window,
                        j % 2 == 1,
                        cfg.pretrained_window[i],
                        cfg.mlp_ratio,
                        vb.pp(format!("blocks.{j}")),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            stages.push((downsample, blocks));
        }
        Ok(Self {
            patch_proj,
            patch_norm,
            stages,
            channels,
        })
    }
}

impl Backbone for SwinV2 {
    fn channels(&self) -> [usize; 4] {
        self.channels
    }

    fn forward_t(&self, x: &Tensor, _train: bool) -> Result<[Tensor; 4]> {
        let mut h = self
            .patch_norm
            .forward(&self.patch_proj.forward(x)?.permute((0, 2, 3, 1))?)?;
        let mut out = Vec::with_capacity(4);
        for (down, blocks) in &self.stages {
            if let Some(d) = down {
                h = d.forward(&h)?;
            }
            for blk in blocks {
                h = blk.forward(&h)?;
            }
            out.push(h.permute((0, 3, 1, 2))?.contiguous()?);
        }
        let [a, b, c, d]: [Tensor; 4] = out.try_into().expect("four stages");
        Ok([a, b, c, d])
    }
}

/// Renames checkpoint keys to this layout: drops classifier and buffer
/// entries and moves end-of-stage downsampling to the start of the next stage
/// when the file uses the older convention.
pub fn remap_checkpoint(tensors: HashMap<String, Tensor>) -> HashMap<String, Tensor> {
    let old_layout = tensors
        .keys()
        .any(|k| k.starts_with("layers.0.downsample."));
    tensors
        .into_iter()
        .filter(|(k, _)| {
            !(k.starts_with("head.")
                || k.starts_with("norm.")
                || k.ends_with("relative_position_index")
                || k.ends_with("relative_coords_table")
                || k.ends_with("attn_mask"))
        })
        .map(|(k, v)| {
            if !old_layout {
                return (k, v);
            }
            let renamed = k
                .strip_prefix("layers.")
                .and_then(|rest| rest.split_once('.'))
                .filter(|(_, tail)| tail.starts_with("downsample."))
                .and_then(|(i, tail)| {
                    i.parse::<usize>()
                        .ok()
                        .map(|i| format!("layers.{}.{tail}", i + 1))
                });
            (renamed.unwrap_or(k), v)
        })
        .collect()
}
