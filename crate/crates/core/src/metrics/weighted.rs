use ndarray::Array2;

use crate::error::Result;
use crate::image_ops::{correlate_zero_pad, distance_transform, gaussian_kernel};
use crate::map::{Mask, SaliencyMap};

/// Weighted F-measure (β² = 1) with dependency-weighted and
/// location-weighted errors. An empty ground truth scores 0.
pub fn weighted_f(pred: &SaliencyMap, gt: &Mask) -> Result<f64> {
    pred.ensure_same_dim("prediction vs ground truth", gt.dim())?;
    let g = gt.as_array();
    let Some(dt) = distance_transform(g) else {
        return Ok(0.0);
    };
    let err: Array2<f64> = Array2::from_shape_fn(g.dim(), |(y, x)| {
        (pred.as_array()[[y, x]] as f64 - if g[[y, x]] { 1.0 } else { 0.0 }).abs()
    });
    // Background errors borrow the error of their nearest foreground pixel.
    let borrowed = Array2::from_shape_fn(g.dim(), |(y, x)| {
        if g[[y, x]] {
            err[[y, x]]
        } else {
            let (ny, nx) = dt.nearest[[y, x]];
            err[[ny, nx]]
        }
    });
    let smoothed = correlate_zero_pad(&borrowed, &gaussian_kernel(7, 5.0));

    let (mut fp_w, mut fg_err, mut fg_n) = (0.0, 0.0, 0usize);
    for ((idx, &e), &fg) in err.indexed_iter().zip(g.iter()) {
        if fg {
            let ew = e.min(smoothed[idx]);
            fg_err += ew;
            fg_n += 1;
        } else {
            let importance = 2.0 - ((0.5f64).ln() / 5.0 * dt.distance[idx]).exp();
            fp_w += e * importance;
        }
    }
    let tp_w = fg_n as f64 - fg_err;
    let recall = 1.0 - fg_err / fg_n as f64;
    let precision = tp_w / (tp_w + fp_w + f64::EPSILON);
    Ok(2.0 * recall * precision / (recall + precision + f64::EPSILON))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_inverted() {
        let gt = Mask::new(Array2::from_shape_fn((16, 16), |(y, x)| {
            (4..12).contains(&y) && (3..10).contains(&x)
        }));
        let perfect = weighted_f(&SaliencyMap::from(&gt), &gt).unwrap();
        assert!((perfect - 1.0).abs() < 1e-6);
        let inv = SaliencyMap::from(&Mask::new(gt.as_array().mapv(|b| !b)));
        assert!(weighted_f(&inv, &gt).unwrap() < 0.05);
        assert_eq!(weighted_f(&inv, &Mask::zeros(16, 16)).unwrap(), 0.0);
    }
}
