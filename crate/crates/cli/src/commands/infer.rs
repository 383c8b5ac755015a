use std::path::Path;

use candle_core::{DType, Device};
use hypsam_core::data::{list_split, prepare, Normalization};
use hypsam_dfnet::checkpoint::{self, Manifest};

use crate::config::RunConfig;
use crate::error::CliResult;

/// Runs the fusion network over `split` and writes `<out>/maps/<name>.png` at
/// the original image resolution. Returns the number of maps written.
pub fn run(cfg: &RunConfig, ckpt: &Path, split: &str, out: &Path) -> CliResult<usize> {
    let net = checkpoint::load(
        ckpt,
        Some(&Manifest::of(&cfg.model)),
        DType::F32,
        &Device::Cpu,
    )?;
    let names = list_split(&cfg.data.root, split)?;
    if names.is_empty() {
        return Err(hypsam_core::Error::EmptyDataset.into());
    }
    crate::write_manifest(
        out,
        "infer",
        cfg,
        cfg.train.seed,
        serde_json::json!({ "checkpoint": ckpt, "split": split, "images": names.len() }),
    )?;
    let maps = out.join(crate::MAPS_DIR);
    let size = cfg.model.resolution;
    for chunk in names.chunks(cfg.train.batch) {
        let samples = crate::load_samples(&cfg.data.root, split, chunk)?;
        let pairs: Vec<_> = samples
            .iter()
            .map(|s| prepare(s, size, &Normalization::IMAGENET))
            .collect();
        let refs: Vec<_> = pairs.iter().collect();
        let preds = net.predict_batch(&refs)?;
        for (s, p) in samples.iter().zip(preds) {
            let (h, w) = s.gt.as_ref().map_or(s.dim(), |g| g.dim());
            crate::save_map(
                &maps.join(format!("{}.png", s.name)),
                &p.sal_fused.resize(h, w),
            )?;
        }
        log::info!("inferred {} images", chunk.len());
    }
    Ok(names.len())
}
