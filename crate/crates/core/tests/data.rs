use std::path::Path;

use hypsam_core::data::{
    augment, decouple_boundary, list_split, load_attributes, load_sample, synthetic, Attribute,
    AugmentParams, BoundaryParams,
};
use hypsam_core::{Error, Mask};
use image::{GrayImage, Luma, Rgb, RgbImage};
use ndarray::Array2;
use proptest::prelude::*;

fn write_pair(root: &Path, split: &str, name: &str, w: u32, h: u32, gt: Option<&GrayImage>) {
    for sub in ["RGB", "T", "GT"] {
        std::fs::create_dir_all(root.join(split).join(sub)).unwrap();
    }
    RgbImage::from_fn(w, h, |x, y| Rgb([x as u8, y as u8, 7]))
        .save(root.join(split).join("RGB").join(format!("{name}.png")))
        .unwrap();
    GrayImage::from_fn(w, h, |x, _| Luma([x as u8 * 3]))
        .save(root.join(split).join("T").join(format!("{name}.png")))
        .unwrap();
    if let Some(gt) = gt {
        gt.save(root.join(split).join("GT").join(format!("{name}.png")))
            .unwrap();
    }
}

#[test]
fn saturated_gt_loads_as_all_foreground() {
    let dir = tempfile::tempdir().unwrap();
    write_pair(
        dir.path(),
        "test",
        "a",
        6,
        5,
        Some(&GrayImage::from_pixel(6, 5, Luma([255]))),
    );
    let s = load_sample(dir.path(), "test", "a").unwrap();
    assert_eq!(s.gt.unwrap(), Mask::ones(5, 6));
    // Single-channel thermal comes back as three identical channels.
    let p = s.thermal.get_pixel(3, 0);
    assert_eq!((p[0], p[1], p[2]), (9, 9, 9));
}

#[test]
fn two_level_gt_matches_pixel_scan() {
    let dir = tempfile::tempdir().unwrap();
    let gt = GrayImage::from_fn(9, 7, |x, y| {
        Luma([if (x * 3 + y) % 4 == 0 { 200 } else { 0 }])
    });
    write_pair(dir.path(), "test", "b", 9, 7, Some(&gt));
    let s = load_sample(dir.path(), "test", "b").unwrap();
    let expected = gt.pixels().filter(|p| p[0] > 127).count();
    assert_eq!(s.gt.as_ref().unwrap().count(), expected);
    for (x, y, p) in gt.enumerate_pixels() {
        assert_eq!(
            s.gt.as_ref().unwrap().as_array()[[y as usize, x as usize]],
            p[0] > 127
        );
    }
}

#[test]
fn missing_and_mismatched_files() {
    let dir = tempfile::tempdir().unwrap();
    write_pair(dir.path(), "test", "c", 6, 5, None);
    assert!(load_sample(dir.path(), "test", "c").unwrap().gt.is_none());
    assert!(matches!(
        load_sample(dir.path(), "test", "zzz"),
        Err(Error::MissingFile(_))
    ));

    GrayImage::new(4, 4)
        .save(dir.path().join("test/GT/c.png"))
        .unwrap();
    assert!(matches!(
        load_sample(dir.path(), "test", "c"),
        Err(Error::ShapeMismatch { .. })
    ));

    std::fs::write(dir.path().join("test/RGB/d.png"), b"not a png").unwrap();
    std::fs::copy(
        dir.path().join("test/T/c.png"),
        dir.path().join("test/T/d.png"),
    )
    .unwrap();
    assert!(matches!(
        load_sample(dir.path(), "test", "d"),
        Err(Error::CorruptImage { .. })
    ));
}

#[test]
fn every_sample_of_a_split_is_aligned() {
    let dir = tempfile::tempdir().unwrap();
    let samples = synthetic::synthetic_set(12, 24, 3);
    synthetic::write_split(dir.path(), "train", &samples).unwrap();
    let names = list_split(dir.path(), "train").unwrap();
    assert_eq!(names.len(), 12);
    for (name, original) in names.iter().zip(&samples) {
        let s = load_sample(dir.path(), "train", name).unwrap();
        let d = s.dim();
        assert_eq!((s.thermal.height() as usize, s.thermal.width() as usize), d);
        assert_eq!(s.gt.as_ref().unwrap().dim(), d);
        assert_eq!(s.gt, original.gt);
    }
}

#[test]
fn attribute_file_is_parsed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("attributes.csv"),
        "name,attributes\nx,BSO;LI\ny,bRGB\n",
    )
    .unwrap();
    let tags = load_attributes(dir.path()).unwrap();
    assert!(
        tags["x"].contains(&Attribute::BigSalientObject)
            && tags["x"].contains(&Attribute::LowIllumination)
    );
    assert!(tags["y"].contains(&Attribute::BadRgb));
}

fn random_mask(seed: u64, h: usize, w: usize) -> Mask {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    // Blobs rather than white noise so the edge operator sees real contours.
    let blobs: Vec<(f64, f64, f64)> = (0..rng.random_range(0..4))
        .map(|_| {
            (
                rng.random_range(0.0..w as f64),
                rng.random_range(0.0..h as f64),
                rng.random_range(1.0..8.0),
            )
        })
        .collect();
    let noise = rng.random_bool(0.5);
    Mask::new(Array2::from_shape_fn((h, w), |(y, x)| {
        blobs
            .iter()
            .any(|&(cx, cy, r)| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) < r * r)
            || (noise && (x * 31 + y * 17) % 23 == 0)
    }))
}

#[test]
fn boundary_partition_on_random_masks() {
    for seed in 0..100 {
        let gt = random_mask(seed, 28, 33);
        let label = decouple_boundary(&gt, BoundaryParams::default());
        assert_eq!(label.boundary.or(&label.content), gt, "seed {seed}");
        assert!(label.boundary.and(&label.content).is_empty(), "seed {seed}");
    }
}

proptest! {
    #[test]
    fn identity_augmentation_is_a_no_op(seed in any::<u64>(), idx in 0u64..50) {
        let s = synthetic::synthetic_sample("p", 20, idx);
        prop_assert_eq!(augment(&s, AugmentParams::IDENTITY, seed), s);
    }

    #[test]
    fn augmentation_is_deterministic(seed in any::<u64>()) {
        let s = synthetic::synthetic_sample("p", 20, 1);
        let p = AugmentParams::default();
        prop_assert_eq!(augment(&s, p, seed), augment(&s, p, seed));
    }
}
