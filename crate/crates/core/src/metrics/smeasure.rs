use ndarray::{s, Array2, ArrayView2};

use crate::error::Result;
use crate::map::{Mask, SaliencyMap};

/// Balance between the object-aware and region-aware terms.
pub const S_ALPHA: f64 = 0.5;

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn object_similarity(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (x, sigma) = mean_std(values);
    2.0 * x / (x * x + 1.0 + sigma + f64::EPSILON)
}

fn object_term(pred: &Array2<f64>, gt: &Array2<bool>, mu: f64) -> f64 {
    let fg = pred
        .iter()
        .zip(gt.iter())
        .filter(|(_, &g)| g)
        .map(|(&p, _)| p);
    let bg = pred
        .iter()
        .zip(gt.iter())
        .filter(|(_, &g)| !g)
        .map(|(&p, _)| 1.0 - p);
    mu * object_similarity(fg) + (1.0 - mu) * object_similarity(bg)
}

fn region_ssim(pred: ArrayView2<'_, f64>, gt: ArrayView2<'_, f64>) -> f64 {
    let n = pred.len();
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let x = pred.sum() / nf;
    let y = gt.sum() / nf;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&p, &g) in pred.iter().zip(gt.iter()) {
        sxx += (p - x) * (p - x);
        syy += (g - y) * (g - y);
        sxy += (p - x) * (g - y);
    }
    let d = nf - 1.0 + f64::EPSILON;
    let (sxx, syy, sxy) = (sxx / d, syy / d, sxy / d);
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sxx + syy);
    if alpha != 0.0 {
        alpha / (beta + f64::EPSILON)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn round_half_away(v: f64) -> usize {
    v.round() as usize
}

/// One-based centroid `(X, Y)` of the foreground, rounded half away from zero.
fn centroid(gt: &Array2<bool>) -> (usize, usize) {
    let (h, w) = gt.dim();
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for ((y, x), &g) in gt.indexed_iter() {
        if g {
            sx += x as f64 + 1.0;
            sy += y as f64 + 1.0;
            n += 1;
        }
    }
    if n == 0 {
        return (
            round_half_away(w as f64 / 2.0),
            round_half_away(h as f64 / 2.0),
        );
    }
    (
        round_half_away(sx / n as f64),
        round_half_away(sy / n as f64),
    )
}

fn region_term(pred: &Array2<f64>, gt: &Array2<bool>) -> f64 {
    let (h, w) = gt.dim();
    let (x, y) = centroid(gt);
    let gtf = gt.mapv(|g| if g { 1.0 } else { 0.0 });
    let area = (h * w) as f64;
    let w1 = (x * y) as f64 / area;
    let w2 = ((w - x) * y) as f64 / area;
    let w3 = (x * (h - y)) as f64 / area;
    let w4 = 1.0 - w1 - w2 - w3;
    let q = |rows: std::ops::Range<usize>, cols: std::ops::Range<usize>| {
        region_ssim(
            pred.slice(s![rows.clone(), cols.clone()]),
            gtf.slice(s![rows, cols]),
        )
    };
    w1 * q(0..y, 0..x) + w2 * q(0..y, x..w) + w3 * q(y..h, 0..x) + w4 * q(y..h, x..w)
}

/// Structure measure `α·S_object + (1−α)·S_region`, clamped at 0.
pub fn s_measure(pred: &SaliencyMap, gt: &Mask, alpha: f64) -> Result<f64> {
    pred.ensure_same_dim("prediction vs ground truth", gt.dim())?;
    let p = pred.as_array().mapv(|v| v as f64);
    let g = gt.as_array();
    let n = g.len();
    if n == 0 {
        return Ok(0.0);
    }
    let mu = gt.count() as f64 / n as f64;
    let mean_pred = p.sum() / n as f64;
    let score = if mu == 0.0 {
        1.0 - mean_pred
    } else if mu == 1.0 {
        mean_pred
    } else {
        alpha * object_term(&p, g, mu) + (1.0 - alpha) * region_term(&p, g)
    };
    Ok(score.max(0.0))
}
