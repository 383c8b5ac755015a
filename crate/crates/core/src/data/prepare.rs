use image::RgbImage;
use ndarray::{Array2, Array3, Axis};

use super::sample::RgbtSample;
use crate::image_ops::{resize_bilinear, resize_rgb_bilinear};
use crate::map::Mask;

/// Per-channel statistics applied as `(x - mean) / std` after scaling to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Normalization {
    /// Channel statistics of the usual ImageNet-pretrained backbones.
    pub const IMAGENET: Normalization = Normalization {
        mean: [0.485, 0.456, 0.406],
        std: [0.229, 0.224, 0.225],
    };
}

impl Default for Normalization {
    fn default() -> Self {
        Self::IMAGENET
    }
}

/// Network-ready `3×S×S` inputs for both modalities.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorPair {
    pub rgb: Array3<f32>,
    pub thermal: Array3<f32>,
    pub size: usize,
}

fn to_tensor(img: &RgbImage, size: usize, norm: &Normalization) -> Array3<f32> {
    let mut t = resize_rgb_bilinear(img, size, size);
    for (c, mut plane) in t.axis_iter_mut(Axis(0)).enumerate() {
        let (m, s) = (norm.mean[c], norm.std[c]);
        plane.mapv_inplace(|v| (v / 255.0 - m) / s);
    }
    t
}

/// Bilinear resize to `size × size`, scale to `[0, 1]`, normalize per channel.
pub fn prepare(sample: &RgbtSample, size: usize, norm: &Normalization) -> TensorPair {
    assert!(size > 0, "model resolution must be positive");
    TensorPair {
        rgb: to_tensor(&sample.rgb, size, norm),
        thermal: to_tensor(&sample.thermal, size, norm),
        size,
    }
}

/// Resizes a label to the model resolution (bilinear, re-binarized at 0.5).
pub fn prepare_target(gt: &Mask, size: usize) -> Mask {
    if gt.dim() == (size, size) {
        return gt.clone();
    }
    let soft: Array2<f32> = gt.as_array().mapv(|b| if b { 1.0 } else { 0.0 });
    Mask::new(resize_bilinear(&soft, size, size).mapv(|v| v > 0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use std::collections::BTreeSet;

    fn sample_from(rgb: RgbImage) -> RgbtSample {
        RgbtSample {
            name: "x".into(),
            thermal: rgb.clone(),
            rgb,
            gt: None,
            attributes: BTreeSet::new(),
        }
    }

    #[test]
    fn mean_valued_image_normalizes_to_zero() {
        let norm = Normalization {
            mean: [0.2, 0.4, 0.6],
            std: [0.5, 0.25, 0.1],
        };
        let v = |m: f32| (m * 255.0) as u8;
        let img = RgbImage::from_pixel(10, 6, Rgb([v(0.2), v(0.4), v(0.6)]));
        let t = prepare(&sample_from(img), 8, &norm);
        assert!(t.rgb.iter().all(|x| x.abs() < 1e-6));
        assert!(t.thermal.iter().all(|x| x.abs() < 1e-6));
    }

    #[test]
    fn model_resolution_shapes() {
        let img = RgbImage::from_pixel(64, 48, Rgb([1, 2, 3]));
        let t = prepare(&sample_from(img), 384, &Normalization::IMAGENET);
        assert_eq!(t.rgb.dim(), (3, 384, 384));
        assert_eq!(t.thermal.dim(), (3, 384, 384));
    }

    #[test]
    fn checkerboard_upsampling_matches_hand_grid() {
        let img = RgbImage::from_fn(2, 2, |x, y| {
            let v = if (x + y) % 2 == 1 { 255 } else { 0 };
            Rgb([v, v, v])
        });
        let unit = Normalization {
            mean: [0.0; 3],
            std: [1.0; 3],
        };
        let t = prepare(&sample_from(img), 4, &unit);
        let expected = [
            [0.0, 0.25, 0.75, 1.0],
            [0.25, 0.375, 0.625, 0.75],
            [0.75, 0.625, 0.375, 0.25],
            [1.0, 0.75, 0.25, 0.0],
        ];
        for c in 0..3 {
            for y in 0..4 {
                for x in 0..4 {
                    assert!((t.rgb[[c, y, x]] - expected[y][x]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn target_resize_keeps_binary_labels() {
        let gt = Mask::new(Array2::from_shape_fn((10, 10), |(y, _)| y < 5));
        let t = prepare_target(&gt, 4);
        assert_eq!(t.dim(), (4, 4));
        assert_eq!(t.count(), 8);
    }
}
