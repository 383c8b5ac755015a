//! Small building blocks shared by the backbones, the fusion units and the decoders.

use candle_core::{DType, Module, ModuleT, Result, Tensor, D};
use candle_nn::{
    batch_norm, conv2d, conv2d_no_bias, BatchNorm, BatchNormConfig, Conv2d, Conv2dConfig,
    VarBuilder,
};
use hypsam_core::image_ops::bilinear_matrix;

/// 3×3 convolution (no bias), batch normalization, ReLU.
#[derive(Clone, Debug)]
pub struct Cbr {
    conv: Conv2d,
    bn: BatchNorm,
}

impl Cbr {
    pub fn new(c_in: usize, c_out: usize, vb: VarBuilder) -> Result<Self> {
        Self::with_stride(c_in, c_out, 1, vb)
    }

    pub fn with_stride(c_in: usize, c_out: usize, stride: usize, vb: VarBuilder) -> Result<Self> {
        let cfg = Conv2dConfig {
            padding: 1,
            stride,
            ..Default::default()
        };
        Ok(Self {
            conv: conv2d_no_bias(c_in, c_out, 3, cfg, vb.pp("conv"))?,
            bn: batch_norm(c_out, BatchNormConfig::default(), vb.pp("bn"))?,
        })
    }

    /// Convolution output before normalization.
    pub fn pre_activation(&self, x: &Tensor) -> Result<Tensor> {
        self.conv.forward(x)
    }
}

impl ModuleT for Cbr {
    fn forward_t(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        self.bn.forward_t(&self.conv.forward(x)?, train)?.relu()
    }
}

/// 1×1 convolution with bias.
pub fn conv1x1(c_in: usize, c_out: usize, vb: VarBuilder) -> Result<Conv2d> {
    conv2d(c_in, c_out, 1, Conv2dConfig::default(), vb)
}

fn interpolation(in_len: usize, out_len: usize, dtype: DType, x: &Tensor) -> Result<Tensor> {
    let m = bilinear_matrix(in_len, out_len);
    let (rows, cols) = m.dim();
    Tensor::from_vec(m.into_raw_vec_and_offset().0, (rows, cols), x.device())?.to_dtype(dtype)
}

/// Bilinear resize of a `B×C×H×W` tensor (half-pixel centers, no corner
/// alignment), written as two interpolation-matrix products so it is
/// differentiable.
pub fn resize_bilinear(x: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    if (h, w) == (height, width) {
        return Ok(x.clone());
    }
    let ah = interpolation(h, height, x.dtype(), x)?;
    let aw = interpolation(w, width, x.dtype(), x)?.t()?;
    ah.broadcast_matmul(&x.contiguous()?)?.broadcast_matmul(&aw)
}

/// Bilinear resize of `x` to the spatial size of `like`.
pub fn resize_like(x: &Tensor, like: &Tensor) -> Result<Tensor> {
    let (_, _, h, w) = like.dims4()?;
    resize_bilinear(x, h, w)
}

/// Layer normalization over the last dimension, built from differentiable
/// primitives.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
    eps: f64,
}

impl LayerNorm {
    pub fn new(size: usize, eps: f64, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            weight: vb.get_with_hints(size, "weight", candle_nn::init::ONE)?,
            bias: vb.get_with_hints(size, "bias", candle_nn::init::ZERO)?,
            eps,
        })
    }
}

impl Module for LayerNorm {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let xc = x.broadcast_sub(&mean)?;
        let var = xc.sqr()?.mean_keepdim(D::Minus1)?;
        xc.broadcast_div(&(var + self.eps)?.sqrt()?)?
            .broadcast_mul(&self.weight)?
            .broadcast_add(&self.bias)
    }
}
