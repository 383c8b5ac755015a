use std::fmt;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Image-text embedding backend used to score image quality.
pub trait ImageTextScorer {
    fn image_features(&self, image: &RgbImage) -> Result<Vec<f32>>;
    fn text_features(&self, text: &str) -> Result<Vec<f32>>;
}

/// Ordered (positive, negative) description pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AntonymPair {
    pub positive: String,
    pub negative: String,
}

impl AntonymPair {
    pub fn new(positive: &str, negative: &str) -> Self {
        Self {
            positive: positive.to_owned(),
            negative: negative.to_owned(),
        }
    }

    pub fn brightness() -> Self {
        Self::new("Bright photo.", "Dark photo.")
    }

    pub fn colorfulness() -> Self {
        Self::new("Colorful photo.", "Dull photo.")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityScores {
    /// Probability of the positive brightness description.
    pub s_alpha: f64,
    /// Probability of the positive colorfulness description.
    pub s_beta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Rgb,
    Thermal,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Rgb => "rgb",
            Modality::Thermal => "thermal",
        })
    }
}

/// How `tau` is compared against the brightness score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauSemantics {
    /// RGB is kept when the "bright" probability exceeds `tau`.
    #[default]
    Bright,
    /// RGB is kept when the "dark" probability stays below `tau`.
    Dark,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorConfig {
    pub tau: f64,
    pub theta: f64,
    pub brightness: AntonymPair,
    pub colorfulness: AntonymPair,
    /// Multiplier applied to the cosines before the two-way softmax.
    pub logit_scale: f64,
    pub tau_semantics: TauSemantics,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            tau: 0.01,
            theta: 0.85,
            brightness: AntonymPair::brightness(),
            colorfulness: AntonymPair::colorfulness(),
            logit_scale: 100.0,
            tau_semantics: TauSemantics::Bright,
        }
    }
}

fn cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::ScorerUnavailable(format!(
            "embedding sizes differ or are empty ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        dot += x as f64 * y as f64;
        na += x as f64 * x as f64;
        nb += y as f64 * y as f64;
    }
    let denom = (na * nb).sqrt();
    Ok(if denom == 0.0 { 0.0 } else { dot / denom })
}

/// `e^{k·s1} / (e^{k·s1} + e^{k·s2})`.
pub fn quality_from_cosines(s1: f64, s2: f64, logit_scale: f64) -> f64 {
    1.0 / (1.0 + (logit_scale * (s2 - s1)).exp())
}

/// Probability that `image` matches the positive description of `pair`.
pub fn quality_score(
    image: &RgbImage,
    pair: &AntonymPair,
    logit_scale: f64,
    scorer: &dyn ImageTextScorer,
) -> Result<f64> {
    let f = scorer.image_features(image)?;
    let s1 = cosine(&f, &scorer.text_features(&pair.positive)?)?;
    let s2 = cosine(&f, &scorer.text_features(&pair.negative)?)?;
    Ok(quality_from_cosines(s1, s2, logit_scale))
}

/// RGB when it is bright enough or colorful enough, thermal otherwise.
pub fn decide_modality(scores: QualityScores, cfg: &SelectorConfig) -> Modality {
    let bright_enough = match cfg.tau_semantics {
        TauSemantics::Bright => scores.s_alpha > cfg.tau,
        TauSemantics::Dark => 1.0 - scores.s_alpha < cfg.tau,
    };
    if bright_enough || scores.s_beta > cfg.theta {
        Modality::Rgb
    } else {
        Modality::Thermal
    }
}

/// Scores the RGB image only; the thermal image never enters the decision.
pub fn select_modality(
    rgb: &RgbImage,
    cfg: &SelectorConfig,
    scorer: &dyn ImageTextScorer,
) -> Result<(Modality, QualityScores)> {
    let scores = QualityScores {
        s_alpha: quality_score(rgb, &cfg.brightness, cfg.logit_scale, scorer)?,
        s_beta: quality_score(rgb, &cfg.colorfulness, cfg.logit_scale, scorer)?,
    };
    Ok((decide_modality(scores, cfg), scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_two_cosines() {
        assert_eq!(quality_from_cosines(0.3, 0.3, 1.0), 0.5);
        let e = std::f64::consts::E;
        assert!((quality_from_cosines(1.0, 0.0, 1.0) - e / (e + 1.0)).abs() < 1e-12);
        assert!((quality_from_cosines(1.0, 0.0, 1.0) - 0.731059).abs() < 1e-6);
    }

    #[test]
    fn truth_table() {
        let cfg = SelectorConfig::default();
        let pick = |a, b| {
            decide_modality(
                QualityScores {
                    s_alpha: a,
                    s_beta: b,
                },
                &cfg,
            )
        };
        assert_eq!(pick(0.02, 0.0), Modality::Rgb);
        assert_eq!(pick(0.005, 0.5), Modality::Thermal);
        assert_eq!(pick(0.005, 0.9), Modality::Rgb);
        assert_eq!(pick(0.5, 0.9), Modality::Rgb);
    }
}
