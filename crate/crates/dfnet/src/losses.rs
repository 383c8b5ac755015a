//! Supervision: hybrid BCE + SSIM + IoU for the saliency branches, dice for
//! the boundary branch. Every function takes `B×1×H×W` probability and target
//! tensors, reduces per sample and averages over the batch, and is
//! differentiable in `pred`.

use candle_core::{DType, Tensor, D};
use serde::Serialize;

use crate::error::{ensure_same_shape, Result};
use crate::model::PredictionTensors;

pub const BCE_EPS: f64 = 1e-7;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn per_sample_sum(x: &Tensor) -> Result<Tensor> {
    Ok(x.flatten_from(1)?.sum(D::Minus1)?)
}

fn per_sample_mean(x: &Tensor) -> Result<Tensor> {
    Ok(x.flatten_from(1)?.mean(D::Minus1)?)
}

/// Mean binary cross-entropy with `pred` clamped to `[eps, 1-eps]`.
pub fn bce_loss(pred: &Tensor, gt: &Tensor, eps: f64) -> Result<Tensor> {
    ensure_same_shape("bce_loss", pred, gt)?;
    let p = pred.clamp(eps, 1.0 - eps)?;
    let pos = gt.mul(&p.log()?)?;
    let neg = gt.affine(-1.0, 1.0)?.mul(&p.affine(-1.0, 1.0)?.log()?)?;
    Ok(per_sample_mean(&(pos + neg)?.neg()?)?.mean_all()?)
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let g: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// `n×n` banded matrix applying the 1-D window with zero padding.
fn blur_matrix(n: usize, taps: &[f64], like: &Tensor) -> Result<Tensor> {
    let r = taps.len() / 2;
    let mut m = vec![0f64; n * n];
    for i in 0..n {
        for (k, &w) in taps.iter().enumerate() {
            let j = i as isize + k as isize - r as isize;
            if (0..n as isize).contains(&j) {
                m[i * n + j as usize] = w;
            }
        }
    }
    Ok(Tensor::from_vec(m, (n, n), like.device())?.to_dtype(like.dtype())?)
}

/// `1 − mean SSIM` with a Gaussian window and zero padding. The separable
/// window is applied as two banded matrix products.
pub fn ssim_loss(pred: &Tensor, gt: &Tensor, window: usize) -> Result<Tensor> {
    ensure_same_shape("ssim_loss", pred, gt)?;
    if window % 2 == 0 {
        return Err(crate::Error::Config(format!(
            "SSIM window must be odd, got {window}"
        )));
    }
    let (_, _, h, w) = pred.dims4()?;
    let g = gaussian_window(window, SSIM_SIGMA);
    let ah = blur_matrix(h, &g, pred)?;
    let aw = blur_matrix(w, &g, pred)?.t()?;
    let blur = |t: &Tensor| -> Result<Tensor> {
        Ok(ah
            .broadcast_matmul(&t.contiguous()?)?
            .broadcast_matmul(&aw)?)
    };
    let mu_x = blur(pred)?;
    let mu_y = blur(gt)?;
    let mu_xx = mu_x.sqr()?;
    let mu_yy = mu_y.sqr()?;
    let mu_xy = mu_x.mul(&mu_y)?;
    let s_xx = (blur(&pred.sqr()?)? - &mu_xx)?;
    let s_yy = (blur(&gt.sqr()?)? - &mu_yy)?;
    let s_xy = (blur(&pred.mul(gt)?)? - &mu_xy)?;
    let num = mu_xy.affine(2.0, C1)?.mul(&s_xy.affine(2.0, C2)?)?;
    let den = (mu_xx + mu_yy)?
        .affine(1.0, C1)?
        .mul(&(s_xx + s_yy)?.affine(1.0, C2)?)?;
    let ssim = per_sample_mean(&num.div(&den)?)?;
    Ok(ssim.affine(-1.0, 1.0)?.mean_all()?)
}

/// `1 − (Σpg + 1)/(Σp + Σg − Σpg + 1)`.
pub fn iou_loss(pred: &Tensor, gt: &Tensor) -> Result<Tensor> {
    ensure_same_shape("iou_loss", pred, gt)?;
    let inter = per_sample_sum(&pred.mul(gt)?)?;
    let union = ((per_sample_sum(pred)? + per_sample_sum(gt)?)? - &inter)?;
    let iou = inter.affine(1.0, 1.0)?.div(&union.affine(1.0, 1.0)?)?;
    Ok(iou.affine(-1.0, 1.0)?.mean_all()?)
}

/// `1 − (2Σpg + 1)/(Σp + Σg + 1)`.
pub fn dice_loss(pred: &Tensor, gt: &Tensor) -> Result<Tensor> {
    ensure_same_shape("dice_loss", pred, gt)?;
    let inter = per_sample_sum(&pred.mul(gt)?)?;
    let total = (per_sample_sum(pred)? + per_sample_sum(gt)?)?;
    let dice = inter.affine(2.0, 1.0)?.div(&total.affine(1.0, 1.0)?)?;
    Ok(dice.affine(-1.0, 1.0)?.mean_all()?)
}

/// `bce + ssim + iou`.
pub fn hybrid_loss(pred: &Tensor, gt: &Tensor) -> Result<Tensor> {
    let bce = bce_loss(pred, gt, BCE_EPS)?;
    let ssim = ssim_loss(pred, gt, SSIM_WINDOW)?;
    let iou = iou_loss(pred, gt)?;
    Ok(((bce + ssim)? + iou)?)
}

/// The five scalar terms and their sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub l_r: f64,
    pub l_t: f64,
    pub l_m: f64,
    pub l_b: f64,
    pub l_f: f64,
    pub total: f64,
}

/// Differentiable total plus the per-term values.
pub struct TotalLoss {
    pub total: Tensor,
    pub breakdown: LossBreakdown,
}

/// Hybrid losses on the RGB, thermal, mixed and fused maps against `gt`, dice
/// on the boundary map against `boundary`.
pub fn total_loss(preds: &PredictionTensors, gt: &Tensor, boundary: &Tensor) -> Result<TotalLoss> {
    let l_r = hybrid_loss(&preds.rgb, gt)?;
    let l_t = hybrid_loss(&preds.thermal, gt)?;
    let l_m = hybrid_loss(&preds.mixed, gt)?;
    let l_b = dice_loss(&preds.boundary, boundary)?;
    let l_f = hybrid_loss(&preds.fused, gt)?;
    let total = ((((&l_r + &l_t)? + &l_m)? + &l_b)? + &l_f)?;
    let scalar = |t: &Tensor| -> Result<f64> { Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?) };
    let (l_r, l_t, l_m, l_b, l_f) = (
        scalar(&l_r)?,
        scalar(&l_t)?,
        scalar(&l_m)?,
        scalar(&l_b)?,
        scalar(&l_f)?,
    );
    let breakdown = LossBreakdown {
        l_r,
        l_t,
        l_m,
        l_b,
        l_f,
        total: l_r + l_t + l_m + l_b + l_f,
    };
    Ok(TotalLoss { total, breakdown })
}

impl LossBreakdown {
    /// `step=.. l_R=.. l_T=.. l_M=.. l_B=.. l_F=.. total=.. lr=..`
    pub fn log_line(&self, step: usize, lr: f64) -> String {
        format!(
            "step={step} l_R={:.6} l_T={:.6} l_M={:.6} l_B={:.6} l_F={:.6} total={:.6} lr={:.6e}",
            self.l_r, self.l_t, self.l_m, self.l_b, self.l_f, self.total, lr
        )
    }
}
