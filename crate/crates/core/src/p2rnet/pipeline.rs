use serde::{Deserialize, Serialize};

use super::prompt::{build_prompts, min_area_for};
use super::quality::{select_modality, ImageTextScorer, Modality, QualityScores, SelectorConfig};
use super::refine::{refine, RefineStrategy};
use super::segmenter::{segment, PromptKinds, Segmenter};
use crate::data::RgbtSample;
use crate::error::{Error, Result};
use crate::map::SaliencyMap;

/// How the segmenter input modality is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectorMode {
    /// Quality-aware choice from image-text scores.
    #[default]
    Clip,
    Rgb,
    Thermal,
}

/// Which map enters the fusion alongside the segmenter output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefineInput {
    /// The binarized coarse map.
    #[default]
    Binarized,
    /// The raw coarse map.
    Coarse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub selector: SelectorConfig,
    pub mode: SelectorMode,
    pub bin_thresh: f32,
    /// Smallest kept component, as a fraction of the coarse-map pixels.
    pub min_area_frac: f64,
    pub prompts: PromptKinds,
    pub strategy: RefineStrategy,
    pub refine_input: RefineInput,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            selector: SelectorConfig::default(),
            mode: SelectorMode::Clip,
            bin_thresh: 0.5,
            min_area_frac: 0.001,
            prompts: PromptKinds::default(),
            strategy: RefineStrategy::Max,
            refine_input: RefineInput::Binarized,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutcome {
    pub map: SaliencyMap,
    pub modality: Option<Modality>,
    pub scores: Option<QualityScores>,
    pub boxes: usize,
    /// Why the coarse map was returned unchanged, if it was.
    pub fallback: Option<String>,
}

impl PipelineOutcome {
    fn fallback(
        coarse: &SaliencyMap,
        modality: Option<Modality>,
        scores: Option<QualityScores>,
        err: &Error,
    ) -> Self {
        Self {
            map: coarse.clone(),
            modality,
            scores,
            boxes: 0,
            fallback: Some(err.to_string()),
        }
    }
}

/// Select modality, build prompts, segment, fuse. Any failure along the way
/// (no usable prompt, missing backend or scorer) degrades to returning
/// `coarse` unchanged, with the reason recorded in the outcome.
pub fn run_pipeline<S: Segmenter + ?Sized>(
    sample: &RgbtSample,
    coarse: &SaliencyMap,
    cfg: &PipelineConfig,
    segmenter: &S,
    scorer: Option<&dyn ImageTextScorer>,
) -> PipelineOutcome {
    let (modality, scores) = match cfg.mode {
        SelectorMode::Rgb => (Modality::Rgb, None),
        SelectorMode::Thermal => (Modality::Thermal, None),
        SelectorMode::Clip => {
            let picked = scorer
                .ok_or_else(|| Error::ScorerUnavailable("no image-text scorer configured".into()))
                .and_then(|s| select_modality(&sample.rgb, &cfg.selector, s));
            match picked {
                Ok((m, s)) => (m, Some(s)),
                Err(e) => {
                    log::warn!("{}: {e}; keeping the coarse map", sample.name);
                    return PipelineOutcome::fallback(coarse, None, None, &e);
                }
            }
        }
    };
    let image = match modality {
        Modality::Rgb => &sample.rgb,
        Modality::Thermal => &sample.thermal,
    };

    let attempt = || -> Result<(SaliencyMap, usize)> {
        let min_area = min_area_for(coarse.dim(), cfg.min_area_frac);
        let prompt = build_prompts(coarse, image, cfg.bin_thresh, min_area)?;
        let sg = segment(&prompt, segmenter, cfg.prompts, coarse.dim())?;
        let base = match cfg.refine_input {
            RefineInput::Binarized => SaliencyMap::from(&prompt.mask),
            RefineInput::Coarse => coarse.clone(),
        };
        Ok((refine(&base, &sg, cfg.strategy)?, prompt.boxes.len()))
    };
    match attempt() {
        Ok((map, boxes)) => PipelineOutcome {
            map,
            modality: Some(modality),
            scores,
            boxes,
            fallback: None,
        },
        Err(e) => {
            if !matches!(e, Error::EmptyPrompt) {
                log::warn!("{}: {e}; keeping the coarse map", sample.name);
            }
            PipelineOutcome::fallback(coarse, Some(modality), scores, &e)
        }
    }
}
