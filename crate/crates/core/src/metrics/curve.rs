use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::map::{Mask, SaliencyMap};

/// Number of curve thresholds.
pub const THRESHOLDS: usize = 256;

/// F-measure precision weight.
pub const BETA2: f64 = 0.3;

/// Precision and recall sampled at `t_k = k / 256`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub thresholds: Vec<f64>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
}

impl PrCurve {
    pub(crate) fn from_parts(precision: Vec<f64>, recall: Vec<f64>) -> Self {
        Self {
            thresholds: (0..THRESHOLDS)
                .map(|k| k as f64 / THRESHOLDS as f64)
                .collect(),
            precision,
            recall,
        }
    }
}

/// Number of thresholds a value exceeds: `#{k : v > k/256}`.
fn exceed_count(v: f32) -> usize {
    // 256·v is exact in binary floating point, so this is the exact count.
    (v * THRESHOLDS as f32).ceil().clamp(0.0, THRESHOLDS as f32) as usize
}

/// Per-threshold `(predicted positives, true positives)`.
pub fn threshold_counts(pred: &SaliencyMap, gt: &Mask) -> Result<(Vec<u64>, Vec<u64>)> {
    pred.ensure_same_dim("prediction vs ground truth", gt.dim())?;
    let mut hist_all = [0u64; THRESHOLDS + 1];
    let mut hist_fg = [0u64; THRESHOLDS + 1];
    for (&p, &g) in pred.as_array().iter().zip(gt.as_array().iter()) {
        let c = exceed_count(p);
        hist_all[c] += 1;
        if g {
            hist_fg[c] += 1;
        }
    }
    // Pixels with count c are positive for every k < c.
    let mut pos = vec![0u64; THRESHOLDS];
    let mut tp = vec![0u64; THRESHOLDS];
    let (mut acc_all, mut acc_fg) = (0u64, 0u64);
    for k in (0..THRESHOLDS).rev() {
        acc_all += hist_all[k + 1];
        acc_fg += hist_fg[k + 1];
        pos[k] = acc_all;
        tp[k] = acc_fg;
    }
    Ok((pos, tp))
}

/// Precision is 1 when nothing is predicted positive; recall is 1 when the
/// ground truth is empty.
pub fn pr_curve(pred: &SaliencyMap, gt: &Mask) -> Result<PrCurve> {
    let (pos, tp) = threshold_counts(pred, gt)?;
    let fg = gt.count() as u64;
    let precision = pos
        .iter()
        .zip(&tp)
        .map(|(&p, &t)| if p == 0 { 1.0 } else { t as f64 / p as f64 })
        .collect();
    let recall = tp
        .iter()
        .map(|&t| if fg == 0 { 1.0 } else { t as f64 / fg as f64 })
        .collect();
    Ok(PrCurve::from_parts(precision, recall))
}

/// `(1+β²)·P·R / (β²·P + R)`, or 0 when the denominator vanishes.
pub fn f_measure(precision: f64, recall: f64, beta2: f64) -> f64 {
    let denom = beta2 * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + beta2) * precision * recall / denom
    }
}

pub fn f_curve(pr: &PrCurve) -> Vec<f64> {
    pr.precision
        .iter()
        .zip(&pr.recall)
        .map(|(&p, &r)| f_measure(p, r, BETA2))
        .collect()
}

/// `(mean, max)` of the F-measure over the threshold curve.
pub fn f_curve_stats(pr: &PrCurve) -> (f64, f64) {
    let f = f_curve(pr);
    mean_max(&f)
}

pub(crate) fn mean_max(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Summation rounding can push the mean of a flat curve one ulp past its max.
    (mean.min(max), max)
}

/// F-measure at the image-adaptive threshold `min(2·mean(pred), 1)`, with
/// `pred >= threshold` as positive.
pub fn adaptive_f(pred: &SaliencyMap, gt: &Mask) -> Result<f64> {
    pred.ensure_same_dim("prediction vs ground truth", gt.dim())?;
    let thr = (2.0 * pred.mean()).min(1.0);
    let (mut pos, mut tp) = (0u64, 0u64);
    for (&p, &g) in pred.as_array().iter().zip(gt.as_array().iter()) {
        if p as f64 >= thr {
            pos += 1;
            if g {
                tp += 1;
            }
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    let precision = tp as f64 / pos as f64;
    let recall = tp as f64 / gt.count() as f64;
    Ok(f_measure(precision, recall, BETA2))
}

/// Mean absolute error.
pub fn mae(pred: &SaliencyMap, gt: &Mask) -> Result<f64> {
    pred.ensure_same_dim("prediction vs ground truth", gt.dim())?;
    let n = pred.as_array().len();
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = pred
        .as_array()
        .iter()
        .zip(gt.as_array().iter())
        .map(|(&p, &g)| (p as f64 - if g { 1.0 } else { 0.0 }).abs())
        .sum();
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn exceed_count_is_exact_at_grid_points() {
        assert_eq!(exceed_count(0.0), 0);
        assert_eq!(exceed_count(1.0 / 256.0), 1);
        assert_eq!(exceed_count(1.0 / 256.0 + 1e-6), 2);
        assert_eq!(exceed_count(1.0), 256);
    }

    #[test]
    fn f_measure_fixed_point_and_zero() {
        assert!((f_measure(0.8, 0.8, BETA2) - 0.8).abs() < 1e-12);
        assert_eq!(f_measure(0.0, 0.0, BETA2), 0.0);
        let expected = 1.3 * 0.9 * 0.6 / (0.3 * 0.9 + 0.6);
        assert!((f_measure(0.9, 0.6, BETA2) - expected).abs() < 1e-15);
    }

    #[test]
    fn all_ones_prediction_on_half_foreground() {
        let gt = Mask::new(Array2::from_shape_fn((4, 4), |(y, _)| y < 2));
        let pr = pr_curve(&SaliencyMap::filled(4, 4, 1.0), &gt).unwrap();
        assert!(pr.precision.iter().all(|&p| p == 0.5));
        assert!(pr.recall.iter().all(|&r| r == 1.0));
    }

    #[test]
    fn adaptive_f_of_perfect_prediction() {
        let gt = Mask::new(Array2::from_shape_fn((6, 6), |(y, x)| y < 3 && x < 4));
        assert!((adaptive_f(&SaliencyMap::from(&gt), &gt).unwrap() - 1.0).abs() < 1e-12);
        let inverted = SaliencyMap::from(&Mask::new(gt.as_array().mapv(|b| !b)));
        assert_eq!(adaptive_f(&inverted, &gt).unwrap(), 0.0);
    }
}
