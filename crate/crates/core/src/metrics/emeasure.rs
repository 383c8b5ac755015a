use super::curve::{mean_max, threshold_counts};
use crate::error::Result;
use crate::map::{Mask, SaliencyMap};

/// Enhanced alignment of a binary prediction with `pred_fg` positives and `tp`
/// true positives against a ground truth with `gt_fg` positives out of `n`.
///
/// The binary maps take only two values each, so the enhanced alignment matrix
/// is constant on each of the four (prediction, ground truth) cells and the sum
/// reduces to four weighted terms.
fn enhanced_alignment(pred_fg: u64, tp: u64, gt_fg: u64, n: u64) -> f64 {
    let nf = n as f64;
    if gt_fg == 0 {
        return (n - pred_fg) as f64 / nf;
    }
    if gt_fg == n {
        return pred_fg as f64 / nf;
    }
    let fp = pred_fg - tp;
    let fn_ = gt_fg - tp;
    let tn = n - pred_fg - fn_;
    let mu_p = pred_fg as f64 / nf;
    let mu_g = gt_fg as f64 / nf;
    let (p1, p0) = (1.0 - mu_p, -mu_p);
    let (g1, g0) = (1.0 - mu_g, -mu_g);
    let enhanced = |a: f64, b: f64| {
        let xi = 2.0 * a * b / (a * a + b * b + f64::EPSILON);
        (xi + 1.0) * (xi + 1.0) / 4.0
    };
    let total = tp as f64 * enhanced(p1, g1)
        + fp as f64 * enhanced(p1, g0)
        + fn_ as f64 * enhanced(p0, g1)
        + tn as f64 * enhanced(p0, g0);
    total / nf
}

/// E-measure of the prediction binarized at each of the 256 curve thresholds.
pub fn e_curve(pred: &SaliencyMap, gt: &Mask) -> Result<Vec<f64>> {
    let (pos, tp) = threshold_counts(pred, gt)?;
    let n = gt.as_array().len() as u64;
    let gt_fg = gt.count() as u64;
    if n == 0 {
        return Ok(vec![0.0; pos.len()]);
    }
    Ok(pos
        .iter()
        .zip(&tp)
        .map(|(&p, &t)| enhanced_alignment(p, t, gt_fg, n))
        .collect())
}

/// `(mean, max)` of the E-measure curve.
pub fn e_measure(pred: &SaliencyMap, gt: &Mask) -> Result<(f64, f64)> {
    Ok(mean_max(&e_curve(pred, gt)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn perfect_binary_prediction_scores_one() {
        let gt = Mask::new(Array2::from_shape_fn((5, 7), |(y, x)| y > 1 && x < 3));
        let (mean, max) = e_measure(&SaliencyMap::from(&gt), &gt).unwrap();
        assert!((mean - 1.0).abs() < 1e-6);
        assert!((max - 1.0).abs() < 1e-6);
    }

    #[test]
    fn degenerate_ground_truths() {
        let empty = Mask::zeros(4, 4);
        let full = Mask::ones(4, 4);
        let zeros = SaliencyMap::zeros(4, 4);
        let ones = SaliencyMap::filled(4, 4, 1.0);
        assert_eq!(e_measure(&zeros, &empty).unwrap().0, 1.0);
        assert_eq!(e_measure(&ones, &empty).unwrap().0, 0.0);
        assert_eq!(e_measure(&ones, &full).unwrap().0, 1.0);
        assert_eq!(e_measure(&zeros, &full).unwrap().0, 0.0);
    }
}
