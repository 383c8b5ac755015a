//! Dynamic interaction unit: both modalities look at their concatenation,
//! derive kernel/filter/channel/spatial attentions, and convolve themselves
//! with the resulting per-sample kernel.

use candle_core::{Module, Result, Tensor, D};
use candle_nn::{linear, Conv2d, Init, Linear, VarBuilder};

use crate::error::{ensure_same_shape, Error};
use crate::layers::conv1x1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DimConfig {
    /// Channels of each modality entering the unit.
    pub channels: usize,
    /// Number of base kernels N.
    pub kernels: usize,
    pub kernel_size: usize,
    /// Hidden width of the context vector is `2·channels / reduction`.
    pub reduction: usize,
}

impl DimConfig {
    pub fn hidden(&self) -> usize {
        (2 * self.channels / self.reduction).max(1)
    }

    /// Closed-form parameter count of one unit, including the output
    /// compression.
    pub fn parameter_count(&self) -> usize {
        let (c, n, k, h) = (self.channels, self.kernels, self.kernel_size, self.hidden());
        let linear = |i: usize, o: usize| i * o + o;
        let per_modality = linear(2 * c, h)
            + linear(h, n * k * k)
            + linear(h, n * c)
            + linear(h, n * c)
            + linear(h, n)
            + n * c * c * k * k;
        2 * per_modality + linear(2 * c, c)
    }
}

/// Attentions for one modality, batched: spatial `B×N×k×k`, channel `B×N×C_in`,
/// filter `B×N×C_out`, kernel `B×N`.
#[derive(Clone, Debug)]
pub struct AttentionBundle {
    pub spatial: Tensor,
    pub channel: Tensor,
    pub filter: Tensor,
    pub kernel: Tensor,
}

impl AttentionBundle {
    /// Every attention set to one, with `n` kernels.
    pub fn ones(
        batch: usize,
        n: usize,
        c_in: usize,
        c_out: usize,
        k: usize,
        like: &Tensor,
    ) -> Result<Self> {
        let ones = |shape: &[usize]| Tensor::ones(shape, like.dtype(), like.device());
        Ok(Self {
            spatial: ones(&[batch, n, k, k])?,
            channel: ones(&[batch, n, c_in])?,
            filter: ones(&[batch, n, c_out])?,
            kernel: ones(&[batch, n])?,
        })
    }
}

/// `[f_r ; f_t]` along channels.
pub fn fuse_concat(f_r: &Tensor, f_t: &Tensor) -> crate::Result<Tensor> {
    ensure_same_shape("fuse_concat", f_r, f_t)?;
    Ok(Tensor::cat(&[f_r, f_t], 1)?)
}

/// Mean over the spatial dimensions, `B×C×H×W → B×C`.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    x.mean(D::Minus1)?.mean(D::Minus1)
}

/// Projection stack of one modality.
#[derive(Clone, Debug)]
pub struct DimHeads {
    proj: Linear,
    spatial: Linear,
    channel: Linear,
    filter: Linear,
    kernel: Linear,
    cfg: DimConfig,
}

impl DimHeads {
    pub fn new(cfg: DimConfig, vb: VarBuilder) -> Result<Self> {
        let (c, n, k, h) = (cfg.channels, cfg.kernels, cfg.kernel_size, cfg.hidden());
        Ok(Self {
            proj: linear(2 * c, h, vb.pp("proj"))?,
            spatial: linear(h, n * k * k, vb.pp("spatial"))?,
            channel: linear(h, n * c, vb.pp("channel"))?,
            filter: linear(h, n * c, vb.pp("filter"))?,
            kernel: linear(h, n, vb.pp("kernel"))?,
            cfg,
        })
    }

    /// `V = ReLU(Proj(GAP(fused)))`, `B×hidden`.
    pub fn context(&self, fused: &Tensor) -> Result<Tensor> {
        self.proj.forward(&global_avg_pool(fused)?)?.relu()
    }

    pub fn attentions(&self, v: &Tensor) -> Result<AttentionBundle> {
        let b = v.dim(0)?;
        let (c, n, k) = (self.cfg.channels, self.cfg.kernels, self.cfg.kernel_size);
        let sig = |l: &Linear| candle_nn::ops::sigmoid(&l.forward(v)?);
        Ok(AttentionBundle {
            spatial: sig(&self.spatial)?.reshape((b, n, k, k))?,
            channel: sig(&self.channel)?.reshape((b, n, c))?,
            filter: sig(&self.filter)?.reshape((b, n, c))?,
            kernel: candle_nn::ops::softmax(&self.kernel.forward(v)?, D::Minus1)?,
        })
    }
}

/// `N×C_out×C_in×k×k` base kernels.
pub fn kernel_bank(cfg: &DimConfig, vb: VarBuilder) -> Result<Tensor> {
    let (c, n, k) = (cfg.channels, cfg.kernels, cfg.kernel_size);
    let stdev = (2.0 / (c * k * k) as f64).sqrt();
    vb.get_with_hints((n, c, c, k, k), "bank", Init::Randn { mean: 0.0, stdev })
}

/// Per-sample kernel `Σ_n a_w·a_f·a_c·a_s·W_n`, shape `B×C_out×C_in×k×k`.
pub fn effective_kernel(bank: &Tensor, att: &AttentionBundle) -> crate::Result<Tensor> {
    let (n, c_out, c_in, kh, kw) = bank.dims5()?;
    let b = att.kernel.dim(0)?;
    let expect = |name: &'static str, t: &Tensor, shape: &[usize]| -> crate::Result<()> {
        if t.dims() != shape {
            return Err(Error::ShapeMismatch {
                context: name,
                expected: shape.to_vec(),
                found: t.dims().to_vec(),
            });
        }
        Ok(())
    };
    expect("kernel attention", &att.kernel, &[b, n])?;
    expect("filter attention", &att.filter, &[b, n, c_out])?;
    expect("channel attention", &att.channel, &[b, n, c_in])?;
    expect("spatial attention", &att.spatial, &[b, n, kh, kw])?;
    let w = bank
        .unsqueeze(0)?
        .broadcast_mul(&att.kernel.reshape((b, n, 1, 1, 1, 1))?)?
        .broadcast_mul(&att.filter.reshape((b, n, c_out, 1, 1, 1))?)?
        .broadcast_mul(&att.channel.reshape((b, n, 1, c_in, 1, 1))?)?
        .broadcast_mul(&att.spatial.reshape((b, n, 1, 1, kh, kw))?)?;
    Ok(w.sum(1)?)
}

/// Convolves each sample of `f` once with its own effective kernel; padding
/// keeps the spatial size.
pub fn dynamic_conv(f: &Tensor, bank: &Tensor, att: &AttentionBundle) -> crate::Result<Tensor> {
    let (b, c, h, w) = f.dims4()?;
    let kernel = effective_kernel(bank, att)?;
    let (_, c_out, c_in, k, _) = kernel.dims5()?;
    if c_in != c || att.kernel.dim(0)? != b {
        return Err(Error::ShapeMismatch {
            context: "dynamic_conv input",
            expected: vec![b, c_in, h, w],
            found: f.dims().to_vec(),
        });
    }
    let x = f.reshape((1, b * c, h, w))?;
    let kernel = kernel.reshape((b * c_out, c_in, k, k))?;
    let y = x.conv2d(&kernel, k / 2, 1, 1, b)?;
    Ok(y.reshape((b, c_out, h, w))?)
}

/// Output of one unit: the `2C`-channel mixed feature and its `C`-channel
/// compression fed to the decoders.
#[derive(Clone, Debug)]
pub struct DimOutput {
    pub mixed: Tensor,
    pub compressed: Tensor,
}

#[derive(Clone, Debug)]
pub struct DimUnit {
    pub heads_r: DimHeads,
    pub heads_t: DimHeads,
    pub bank_r: Tensor,
    pub bank_t: Tensor,
    out: Conv2d,
}

impl DimUnit {
    pub fn new(cfg: DimConfig, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            heads_r: DimHeads::new(cfg, vb.pp("proj_r"))?,
            heads_t: DimHeads::new(cfg, vb.pp("proj_t"))?,
            bank_r: kernel_bank(&cfg, vb.pp("bank_r"))?,
            bank_t: kernel_bank(&cfg, vb.pp("bank_t"))?,
            out: conv1x1(2 * cfg.channels, cfg.channels, vb.pp("out"))?,
        })
    }

    /// `F_M = [E_R + f_r ; E_T + f_t]` followed by the 1×1 compression.
    pub fn forward(&self, f_r: &Tensor, f_t: &Tensor) -> crate::Result<DimOutput> {
        let fused = fuse_concat(f_r, f_t)?;
        let enhance = |heads: &DimHeads, bank: &Tensor, f: &Tensor| -> crate::Result<Tensor> {
            let att = heads.attentions(&heads.context(&fused)?)?;
            Ok((dynamic_conv(f, bank, &att)? + f)?)
        };
        let e_r = enhance(&self.heads_r, &self.bank_r, f_r)?;
        let e_t = enhance(&self.heads_t, &self.bank_t, f_t)?;
        let mixed = Tensor::cat(&[&e_r, &e_t], 1)?;
        let compressed = self.out.forward(&mixed)?;
        Ok(DimOutput { mixed, compressed })
    }
}
