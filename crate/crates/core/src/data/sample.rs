use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::Mask;

/// Ground-truth gray levels at or above this value are foreground.
pub const GT_THRESHOLD: u8 = 128;

/// Extensions probed, in order, when resolving a sample stem to a file.
pub const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

/// Challenge attributes annotated on the large benchmark, in reporting order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Attribute {
    #[serde(rename = "BSO")]
    BigSalientObject,
    #[serde(rename = "CB")]
    CenterBias,
    #[serde(rename = "CIB")]
    CrossImageBoundary,
    #[serde(rename = "IC")]
    ImageClutter,
    #[serde(rename = "LI")]
    LowIllumination,
    #[serde(rename = "MSO")]
    MultipleSalientObjects,
    #[serde(rename = "OF")]
    OutOfFocus,
    #[serde(rename = "SSO")]
    SmallSalientObject,
    #[serde(rename = "SA")]
    SimilarAppearance,
    #[serde(rename = "TC")]
    ThermalCross,
    #[serde(rename = "BW")]
    BadWeather,
    #[serde(rename = "bRGB")]
    BadRgb,
    #[serde(rename = "bT")]
    BadThermal,
}

impl Attribute {
    pub const ALL: [Attribute; 13] = [
        Attribute::BigSalientObject,
        Attribute::CenterBias,
        Attribute::CrossImageBoundary,
        Attribute::ImageClutter,
        Attribute::LowIllumination,
        Attribute::MultipleSalientObjects,
        Attribute::OutOfFocus,
        Attribute::SmallSalientObject,
        Attribute::SimilarAppearance,
        Attribute::ThermalCross,
        Attribute::BadWeather,
        Attribute::BadRgb,
        Attribute::BadThermal,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Attribute::BigSalientObject => "BSO",
            Attribute::CenterBias => "CB",
            Attribute::CrossImageBoundary => "CIB",
            Attribute::ImageClutter => "IC",
            Attribute::LowIllumination => "LI",
            Attribute::MultipleSalientObjects => "MSO",
            Attribute::OutOfFocus => "OF",
            Attribute::SmallSalientObject => "SSO",
            Attribute::SimilarAppearance => "SA",
            Attribute::ThermalCross => "TC",
            Attribute::BadWeather => "BW",
            Attribute::BadRgb => "bRGB",
            Attribute::BadThermal => "bT",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Attribute::ALL
            .into_iter()
            .find(|a| a.tag() == s.trim())
            .ok_or_else(|| Error::Attributes(format!("unknown attribute tag `{s}`")))
    }
}

/// A registered RGB-thermal pair with optional ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbtSample {
    pub name: String,
    pub rgb: RgbImage,
    /// Thermal frames are kept as 3-channel images (gray input is replicated).
    pub thermal: RgbImage,
    pub gt: Option<Mask>,
    pub attributes: BTreeSet<Attribute>,
}

impl RgbtSample {
    /// `(height, width)` shared by every modality.
    pub fn dim(&self) -> (usize, usize) {
        (self.rgb.height() as usize, self.rgb.width() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        let t = (
            self.thermal.height() as usize,
            self.thermal.width() as usize,
        );
        if t != dim {
            return Err(Error::shape("thermal image", dim, t));
        }
        if let Some(gt) = &self.gt {
            if gt.dim() != dim {
                return Err(Error::shape("ground truth", dim, gt.dim()));
            }
        }
        Ok(())
    }
}

/// Resolves `<dir>/<stem>.<ext>` for the first extension that exists.
pub fn find_image(dir: &Path, stem: &str) -> Option<PathBuf> {
    IMAGE_EXTENSIONS
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

/// Sorted sample stems of a split, enumerated from its `RGB` folder.
pub fn list_split(root: &Path, split: &str) -> Result<Vec<String>> {
    list_images(&root.join(split).join("RGB"))
}

/// Sorted, deduplicated stems of the image files directly inside `dir`.
pub fn list_images(dir: &Path) -> Result<Vec<String>> {
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_owned()));
    }
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            .unwrap_or(false);
        if let (true, Some(stem)) = (is_image, path.file_stem().and_then(|s| s.to_str())) {
            names.push(stem.to_owned());
        }
    }
    names.sort();
    names.dedup();
    Ok(names)
}

/// Decodes an image file; a missing file is `MissingFile`, undecodable bytes `CorruptImage`.
pub fn decode_image(path: &Path) -> Result<image::DynamicImage> {
    image::ImageReader::open(path)
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_owned()),
            _ => Error::Io(e),
        })?
        .with_guessed_format()?
        .decode()
        .map_err(|source| Error::CorruptImage {
            path: path.to_owned(),
            source,
        })
}

/// Loads one sample. Ground truth is optional: a split without a `GT`
/// folder (or without this stem in it) yields `gt = None`.
pub fn load_sample(root: &Path, split: &str, name: &str) -> Result<RgbtSample> {
    let base = root.join(split);
    let locate = |folder: &str| {
        let dir = base.join(folder);
        find_image(&dir, name).ok_or_else(|| Error::MissingFile(dir.join(name)))
    };
    let rgb = decode_image(&locate("RGB")?)?.to_rgb8();
    let thermal = decode_image(&locate("T")?)?.to_rgb8();
    let gt = match find_image(&base.join("GT"), name) {
        Some(p) => Some(Mask::from_gray(&decode_image(&p)?.to_luma8(), GT_THRESHOLD)),
        None => None,
    };
    let sample = RgbtSample {
        name: name.to_owned(),
        rgb,
        thermal,
        gt,
        attributes: BTreeSet::new(),
    };
    sample.validate()?;
    Ok(sample)
}

/// Reads `<root>/attributes.csv`: a header row, then `name,TAG;TAG;...` rows.
/// Returns an empty map when the file does not exist.
pub fn load_attributes(root: &Path) -> Result<BTreeMap<String, BTreeSet<Attribute>>> {
    let path = root.join("attributes.csv");
    if !path.is_file() {
        return Ok(BTreeMap::new());
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(&path)?;
    let mut out = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let name = record
            .get(0)
            .ok_or_else(|| Error::Attributes("row without a name".into()))?
            .trim()
            .to_owned();
        let tags = record
            .get(1)
            .unwrap_or("")
            .split(';')
            .filter(|t| !t.trim().is_empty())
            .map(str::parse)
            .collect::<Result<BTreeSet<_>>>()?;
        out.insert(name, tags);
    }
    Ok(out)
}
