//! Saliency maps and binary masks, the currency shared by the network, the
//! refinement pipeline and the metrics.

use image::{GrayImage, Luma};
use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::image_ops;

/// H×W real-valued map with every entry in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap(Array2<f32>);

impl SaliencyMap {
    /// Wraps `values`, rejecting non-finite entries or entries outside `[0, 1]`.
    pub fn new(values: Array2<f32>) -> Result<Self> {
        if let Some(&bad) = values
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::OutOfRange {
                context: "saliency map",
                value: bad as f64,
            });
        }
        Ok(Self(values))
    }

    /// Clamps into `[0, 1]`; NaN becomes 0.
    pub fn from_clamped(mut values: Array2<f32>) -> Self {
        values.mapv_inplace(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
        Self(values)
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self(Array2::zeros((height, width)))
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self::from_clamped(Array2::from_elem((height, width), value))
    }

    /// `(height, width)`.
    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn view(&self) -> ArrayView2<'_, f32> {
        self.0.view()
    }

    pub fn as_array(&self) -> &Array2<f32> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f32> {
        self.0
    }

    /// 8-bit gray level `v` maps to `v / 255`.
    pub fn from_gray(img: &GrayImage) -> Self {
        let (w, h) = img.dimensions();
        let arr = Array2::from_shape_fn((h as usize, w as usize), |(y, x)| {
            img.get_pixel(x as u32, y as u32)[0] as f32 / 255.0
        });
        Self(arr)
    }

    /// Quantizes to 8 bits with round-to-nearest.
    pub fn to_gray(&self) -> GrayImage {
        let (h, w) = self.dim();
        GrayImage::from_fn(w as u32, h as u32, |x, y| {
            Luma([(self.0[[y as usize, x as usize]] * 255.0).round() as u8])
        })
    }

    /// Min-max stretch to the full `[0, 1]` range; constant maps are left untouched.
    pub fn min_max_normalized(&self) -> Self {
        let (lo, hi) = self
            .0
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if hi > lo {
            Self(self.0.mapv(|v| (v - lo) / (hi - lo)))
        } else {
            self.clone()
        }
    }

    /// Bilinear resize (half-pixel centers, no corner alignment).
    pub fn resize(&self, height: usize, width: usize) -> Self {
        if self.dim() == (height, width) {
            return self.clone();
        }
        Self::from_clamped(image_ops::resize_bilinear(&self.0, height, width))
    }

    /// `[self > threshold]`.
    pub fn threshold(&self, threshold: f32) -> Mask {
        Mask(self.0.mapv(|v| v > threshold))
    }

    pub fn mean(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.0.iter().map(|&v| v as f64).sum::<f64>() / self.0.len() as f64
    }

    pub(crate) fn ensure_same_dim(
        &self,
        context: &'static str,
        other: (usize, usize),
    ) -> Result<()> {
        if self.dim() != other {
            return Err(Error::shape(context, self.dim(), other));
        }
        Ok(())
    }
}

impl From<&Mask> for SaliencyMap {
    fn from(mask: &Mask) -> Self {
        SaliencyMap(mask.0.mapv(|b| if b { 1.0 } else { 0.0 }))
    }
}

/// H×W binary map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask(Array2<bool>);

impl Mask {
    pub fn new(values: Array2<bool>) -> Self {
        Self(values)
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self(Array2::from_elem((height, width), false))
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self(Array2::from_elem((height, width), true))
    }

    /// Foreground where the gray level is at least `threshold`.
    pub fn from_gray(img: &GrayImage, threshold: u8) -> Self {
        let (w, h) = img.dimensions();
        Self(Array2::from_shape_fn((h as usize, w as usize), |(y, x)| {
            img.get_pixel(x as u32, y as u32)[0] >= threshold
        }))
    }

    pub fn to_gray(&self) -> GrayImage {
        let (h, w) = self.dim();
        GrayImage::from_fn(w as u32, h as u32, |x, y| {
            Luma([if self.0[[y as usize, x as usize]] {
                255
            } else {
                0
            }])
        })
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn view(&self) -> ArrayView2<'_, bool> {
        self.0.view()
    }

    pub fn as_array(&self) -> &Array2<bool> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<bool> {
        self.0
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }

    pub fn and(&self, other: &Mask) -> Mask {
        Mask(
            Zip::from(&self.0)
                .and(&other.0)
                .map_collect(|&a, &b| a && b),
        )
    }

    pub fn or(&self, other: &Mask) -> Mask {
        Mask(
            Zip::from(&self.0)
                .and(&other.0)
                .map_collect(|&a, &b| a || b),
        )
    }

    pub fn and_not(&self, other: &Mask) -> Mask {
        Mask(
            Zip::from(&self.0)
                .and(&other.0)
                .map_collect(|&a, &b| a && !b),
        )
    }

    /// Nearest-neighbour resize.
    pub fn resize(&self, height: usize, width: usize) -> Mask {
        if self.dim() == (height, width) {
            return self.clone();
        }
        Mask(image_ops::resize_nearest(&self.0, height, width))
    }
}
