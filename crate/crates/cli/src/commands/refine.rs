use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use candle_core::Device;
use hypsam_backends::{ClipScorer, SamSegmenter, SamVariant};
use hypsam_core::data::{decode_image, find_image, list_images, load_sample};
use hypsam_core::p2rnet::{run_pipeline, ImageTextScorer, Segmenter, SelectorMode, StubSegmenter};
use hypsam_core::SaliencyMap;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const LOG_FILE: &str = "refine_log.jsonl";

/// One line of the per-image log.
#[derive(Clone, Debug, Serialize)]
pub struct RefineRecord {
    pub name: String,
    pub modality: Option<String>,
    pub s_alpha: Option<f64>,
    pub s_beta: Option<f64>,
    pub boxes: usize,
    pub strategy: String,
    pub fallback: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RefineSummary {
    pub images: usize,
    pub fallbacks: usize,
    /// Segmenter weight digest before and after the run; equal when set.
    pub weights_checksum: Option<String>,
    /// Set when the backend could not be loaded and maps were copied through.
    pub backend_error: Option<String>,
}

/// Refines every map in `coarse` (names must match samples of `split`) and
/// writes `<out>/maps/<name>.png` plus `refine_log.jsonl`.
///
/// If the segmenter or scorer cannot be loaded the coarse files are copied
/// through unchanged; this is an error unless `allow_fallback` is set.
pub fn run(
    cfg: &RunConfig,
    coarse: &Path,
    split: &str,
    out: &Path,
    cache: &Path,
    allow_fallback: bool,
) -> CliResult<RefineSummary> {
    let names = list_images(coarse)?;
    if names.is_empty() {
        return Err(hypsam_core::Error::EmptyDataset.into());
    }
    let p = &cfg.p2rnet;
    crate::write_manifest(
        out,
        "refine",
        cfg,
        p.seed,
        serde_json::json!({ "coarse": coarse, "split": split, "images": names.len(), "backend": p.backend }),
    )?;

    let scorer = if p.selector == SelectorMode::Clip {
        match ClipScorer::from_cache(cache, &Device::Cpu) {
            Ok(s) => Some(s),
            Err(e) => return copy_through(cfg, coarse, &names, out, e.to_string(), allow_fallback),
        }
    } else {
        None
    };
    let scorer_ref = scorer.as_ref().map(|s| s as &dyn ImageTextScorer);

    if p.backend == "stub" {
        return refine_with(
            cfg,
            &StubSegmenter::new(p.seed),
            scorer_ref,
            coarse,
            &names,
            split,
            out,
        );
    }
    let variant = SamVariant::parse(&p.backend)
        .ok_or_else(|| CliError::Config(format!("unknown p2rnet.backend `{}`", p.backend)))?;
    match SamSegmenter::from_cache(variant, cache, &Device::Cpu) {
        Ok(seg) => refine_with(cfg, &seg, scorer_ref, coarse, &names, split, out),
        Err(e) => copy_through(cfg, coarse, &names, out, e.to_string(), allow_fallback),
    }
}

fn coarse_path(coarse: &Path, name: &str) -> CliResult<PathBuf> {
    find_image(coarse, name).ok_or_else(|| CliError::Data(format!("missing coarse map for {name}")))
}

fn copy_through(
    cfg: &RunConfig,
    coarse: &Path,
    names: &[String],
    out: &Path,
    reason: String,
    allow_fallback: bool,
) -> CliResult<RefineSummary> {
    log::warn!("segmenter unavailable, copying coarse maps through: {reason}");
    let maps = out.join(crate::MAPS_DIR);
    std::fs::create_dir_all(&maps)?;
    let mut log_file = BufWriter::new(File::create(out.join(LOG_FILE))?);
    for name in names {
        let src = coarse_path(coarse, name)?;
        let file_name = src.file_name().expect("image path has a file name");
        std::fs::copy(&src, maps.join(file_name))?;
        let rec = RefineRecord {
            name: name.clone(),
            modality: None,
            s_alpha: None,
            s_beta: None,
            boxes: 0,
            strategy: cfg.p2rnet.strategy.clone(),
            fallback: Some(reason.clone()),
        };
        writeln!(log_file, "{}", serde_json::to_string(&rec)?)?;
    }
    log_file.flush()?;
    let summary = RefineSummary {
        images: names.len(),
        fallbacks: names.len(),
        weights_checksum: None,
        backend_error: Some(reason.clone()),
    };
    std::fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    if allow_fallback {
        Ok(summary)
    } else {
        Err(CliError::Backend(format!(
            "{reason}; coarse maps were copied to {} (pass --allow-fallback to accept this)",
            maps.display()
        )))
    }
}

fn refine_with<S: Segmenter + ?Sized>(
    cfg: &RunConfig,
    seg: &S,
    scorer: Option<&dyn ImageTextScorer>,
    coarse: &Path,
    names: &[String],
    split: &str,
    out: &Path,
) -> CliResult<RefineSummary> {
    let pipeline = cfg.p2rnet.pipeline()?;
    let before = seg.weights_checksum()?;
    let maps = out.join(crate::MAPS_DIR);
    std::fs::create_dir_all(&maps)?;
    let mut log_file = BufWriter::new(File::create(out.join(LOG_FILE))?);
    let mut fallbacks = 0;
    for (i, name) in names.iter().enumerate() {
        let sample = load_sample(&cfg.data.root, split, name)?;
        let (h, w) = sample.dim();
        let coarse_map =
            SaliencyMap::from_gray(&decode_image(&coarse_path(coarse, name)?)?.to_luma8())
                .resize(h, w);
        let outcome = run_pipeline(&sample, &coarse_map, &pipeline, seg, scorer);
        if let Some(reason) = &outcome.fallback {
            log::debug!("{name}: kept coarse map ({reason})");
            fallbacks += 1;
        }
        crate::save_map(&maps.join(format!("{name}.png")), &outcome.map)?;
        let rec = RefineRecord {
            name: name.clone(),
            modality: outcome.modality.map(|m| m.to_string()),
            s_alpha: outcome.scores.map(|s| s.s_alpha),
            s_beta: outcome.scores.map(|s| s.s_beta),
            boxes: outcome.boxes,
            strategy: pipeline.strategy.name().to_owned(),
            fallback: outcome.fallback,
        };
        writeln!(log_file, "{}", serde_json::to_string(&rec)?)?;
        if (i + 1) % 50 == 0 {
            log::info!("refined {}/{}", i + 1, names.len());
        }
    }
    log_file.flush()?;
    let after = seg.weights_checksum()?;
    if before != after {
        return Err(CliError::Runtime(format!(
            "segmenter weights changed during refinement ({before} -> {after})"
        )));
    }
    let summary = RefineSummary {
        images: names.len(),
        fallbacks,
        weights_checksum: Some(after),
        backend_error: None,
    };
    std::fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}
