//! Procedural RGB-thermal pairs with a single square or disk object, used for
//! smoke training and end-to-end tests without a real benchmark on disk.

use std::collections::BTreeSet;
use std::path::Path;

use image::{Rgb, RgbImage};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sample::RgbtSample;
use crate::error::Result;
use crate::map::Mask;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Square,
    Disk,
}

/// One synthetic pair of side `size`. The object is brighter than the
/// background in the thermal band and differently colored in RGB, with mild
/// per-pixel noise in both.
pub fn synthetic_sample(name: &str, size: usize, seed: u64) -> RgbtSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = if rng.random::<bool>() {
        Shape::Square
    } else {
        Shape::Disk
    };
    let s = size as f64;
    let half = rng.random_range(0.15..0.3) * s;
    let cx = rng.random_range(half..s - half);
    let cy = rng.random_range(half..s - half);
    let gt = Array2::from_shape_fn((size, size), |(y, x)| {
        let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
        match shape {
            Shape::Square => dx.abs() < half && dy.abs() < half,
            Shape::Disk => dx * dx + dy * dy < half * half,
        }
    });

    let bg: [f64; 3] = std::array::from_fn(|_| rng.random_range(20.0..110.0));
    let fg: [f64; 3] = std::array::from_fn(|_| rng.random_range(150.0..240.0));
    let t_bg = rng.random_range(10.0..70.0);
    let t_fg = rng.random_range(170.0..250.0);
    let mut noise = |amp: f64| rng.random_range(-amp..amp);

    let mut rgb = RgbImage::new(size as u32, size as u32);
    let mut thermal = RgbImage::new(size as u32, size as u32);
    for y in 0..size {
        for x in 0..size {
            let inside = gt[[y, x]];
            let base = if inside { fg } else { bg };
            let px = std::array::from_fn(|c| (base[c] + noise(12.0)).clamp(0.0, 255.0) as u8);
            rgb.put_pixel(x as u32, y as u32, Rgb(px));
            let t = (if inside { t_fg } else { t_bg } + noise(12.0)).clamp(0.0, 255.0) as u8;
            thermal.put_pixel(x as u32, y as u32, Rgb([t, t, t]));
        }
    }
    RgbtSample {
        name: name.to_owned(),
        rgb,
        thermal,
        gt: Some(Mask::new(gt)),
        attributes: BTreeSet::new(),
    }
}

/// `count` samples named `syn_0000`, `syn_0001`, …, seeded from `seed`.
pub fn synthetic_set(count: usize, size: usize, seed: u64) -> Vec<RgbtSample> {
    (0..count)
        .map(|i| {
            let s = seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(i as u64);
            synthetic_sample(&format!("syn_{i:04}"), size, s)
        })
        .collect()
}

/// Writes samples as PNGs under `<root>/<split>/{RGB,T,GT}`.
pub fn write_split(root: &Path, split: &str, samples: &[RgbtSample]) -> Result<()> {
    let base = root.join(split);
    for sub in ["RGB", "T", "GT"] {
        std::fs::create_dir_all(base.join(sub))?;
    }
    for s in samples {
        let file = format!("{}.png", s.name);
        s.rgb.save(base.join("RGB").join(&file))?;
        s.thermal.save(base.join("T").join(&file))?;
        if let Some(gt) = &s.gt {
            gt.to_gray().save(base.join("GT").join(&file))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_nonempty() {
        let a = synthetic_set(4, 32, 7);
        let b = synthetic_set(4, 32, 7);
        assert_eq!(a, b);
        for s in &a {
            s.validate().unwrap();
            let gt = s.gt.as_ref().unwrap();
            assert!(gt.count() > 20 && gt.count() < 32 * 32 / 2);
        }
    }
}
