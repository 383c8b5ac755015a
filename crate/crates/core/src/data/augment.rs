use image::{Rgb, RgbImage};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sample::RgbtSample;
use crate::map::Mask;

/// Geometric augmentation applied jointly to every modality and the label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    /// Probability of a horizontal flip.
    pub flip_p: f64,
    /// Rotation angle is drawn uniformly from `[-max, max]` degrees.
    pub max_rotate_deg: f64,
    /// Crop side ratio is drawn uniformly from `[min_crop_ratio, 1]`; the crop
    /// is resized back to the original size.
    pub min_crop_ratio: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            flip_p: 0.5,
            max_rotate_deg: 10.0,
            min_crop_ratio: 0.8,
        }
    }
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        flip_p: 0.0,
        max_rotate_deg: 0.0,
        min_crop_ratio: 1.0,
    };
}

/// Source coordinate for each destination pixel, or `None` outside the source.
type Warp<'a> = &'a dyn Fn(f64, f64) -> Option<(f64, f64)>;

fn warp_rgb(img: &RgbImage, out_w: u32, out_h: u32, warp: Warp<'_>) -> RgbImage {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let px = |x: i64, y: i64, c: usize| -> f64 {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            img.get_pixel(x as u32, y as u32)[c] as f64
        }
    };
    RgbImage::from_fn(out_w, out_h, |x, y| match warp(x as f64, y as f64) {
        None => Rgb([0, 0, 0]),
        Some((sx, sy)) => {
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as i64, y0 as i64);
            let mut out = [0u8; 3];
            for (c, o) in out.iter_mut().enumerate() {
                let v = (1.0 - fy) * ((1.0 - fx) * px(x0, y0, c) + fx * px(x0 + 1, y0, c))
                    + fy * ((1.0 - fx) * px(x0, y0 + 1, c) + fx * px(x0 + 1, y0 + 1, c));
                *o = v.round().clamp(0.0, 255.0) as u8;
            }
            Rgb(out)
        }
    })
}

fn warp_mask(mask: &Mask, out_w: usize, out_h: usize, warp: Warp<'_>) -> Mask {
    let (h, w) = mask.dim();
    let m = mask.as_array();
    Mask::new(Array2::from_shape_fn((out_h, out_w), |(y, x)| {
        match warp(x as f64, y as f64) {
            None => false,
            Some((sx, sy)) => {
                let (sx, sy) = (sx.round(), sy.round());
                sx >= 0.0
                    && sy >= 0.0
                    && (sx as usize) < w
                    && (sy as usize) < h
                    && m[[sy as usize, sx as usize]]
            }
        }
    }))
}

fn apply(sample: &RgbtSample, out_w: usize, out_h: usize, warp: Warp<'_>) -> RgbtSample {
    RgbtSample {
        name: sample.name.clone(),
        rgb: warp_rgb(&sample.rgb, out_w as u32, out_h as u32, warp),
        thermal: warp_rgb(&sample.thermal, out_w as u32, out_h as u32, warp),
        gt: sample.gt.as_ref().map(|g| warp_mask(g, out_w, out_h, warp)),
        attributes: sample.attributes.clone(),
    }
}

/// Random flip, rotation and crop, deterministic in `seed`. Parameters that
/// resolve to the identity leave the corresponding stage untouched, so
/// [`AugmentParams::IDENTITY`] is an exact no-op.
pub fn augment(sample: &RgbtSample, params: AugmentParams, seed: u64) -> RgbtSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Always draw the same number of variates so the stream layout is stable.
    let flip = rng.random::<f64>() < params.flip_p;
    let angle = (rng.random::<f64>() * 2.0 - 1.0) * params.max_rotate_deg;
    let ratio = params.min_crop_ratio + rng.random::<f64>() * (1.0 - params.min_crop_ratio);
    let (u, v) = (rng.random::<f64>(), rng.random::<f64>());

    let (h, w) = sample.dim();
    let mut out = sample.clone();
    if flip {
        let wf = w as f64;
        out = apply(&out, w, h, &|x, y| Some((wf - 1.0 - x, y)));
    }
    if angle != 0.0 {
        let (s, c) = angle.to_radians().sin_cos();
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let (wf, hf) = (w as f64, h as f64);
        out = apply(&out, w, h, &|x, y| {
            let (dx, dy) = (x - cx, y - cy);
            let sx = c * dx + s * dy + cx;
            let sy = -s * dx + c * dy + cy;
            (sx > -1.0 && sy > -1.0 && sx < wf && sy < hf).then_some((sx, sy))
        });
    }
    let (ch, cw) = (
        ((h as f64 * ratio).round() as usize).clamp(1, h),
        ((w as f64 * ratio).round() as usize).clamp(1, w),
    );
    if (ch, cw) != (h, w) {
        let (oy, ox) = ((u * (h - ch) as f64).floor(), (v * (w - cw) as f64).floor());
        let (sy, sx) = (ch as f64 / h as f64, cw as f64 / w as f64);
        out = apply(&out, w, h, &|x, y| {
            Some((
                ((x + 0.5) * sx - 0.5).max(0.0) + ox,
                ((y + 0.5) * sy - 0.5).max(0.0) + oy,
            ))
        });
    }
    out
}
