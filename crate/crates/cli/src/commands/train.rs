use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use candle_core::{DType, Device};
use hypsam_core::data::synthetic::synthetic_set;
use hypsam_core::data::{prepare, Normalization, RgbtSample};
use hypsam_core::metrics::weighted_f;
use hypsam_dfnet::{checkpoint, DfNet};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const LOG_FILE: &str = "train_log.txt";

#[derive(Clone, Debug, Serialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub first_loss: f64,
    pub final_loss: f64,
    /// Best mean weighted F-measure on the validation set, if there was one.
    pub best_val_fw: Option<f64>,
    pub best_epoch: Option<usize>,
}

/// Mean weighted F-measure of the fused map over `samples`.
pub fn validate(net: &DfNet, samples: &[RgbtSample], batch: usize) -> CliResult<f64> {
    let size = net.config().resolution;
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in samples.chunks(batch.max(1)) {
        let pairs: Vec<_> = chunk
            .iter()
            .map(|s| prepare(s, size, &Normalization::IMAGENET))
            .collect();
        let refs: Vec<_> = pairs.iter().collect();
        let preds = net.predict_batch(&refs)?;
        for (s, p) in chunk.iter().zip(preds) {
            let Some(gt) = &s.gt else { continue };
            let (h, w) = gt.dim();
            total += weighted_f(&p.sal_fused.resize(h, w), gt)?;
            count += 1;
        }
    }
    if count == 0 {
        return Err(hypsam_core::Error::EmptyDataset.into());
    }
    Ok(total / count as f64)
}

fn training_data(
    cfg: &RunConfig,
    synthetic: Option<usize>,
) -> CliResult<(Vec<RgbtSample>, Vec<RgbtSample>)> {
    if let Some(n) = synthetic {
        let size = cfg.data.resolution;
        let train = synthetic_set(n, size, cfg.train.seed);
        let val = synthetic_set((n / 4).max(1), size, cfg.train.seed.wrapping_add(1_000_003));
        return Ok((train, val));
    }
    let root = &cfg.data.root;
    let names = hypsam_core::data::list_split(root, &cfg.data.train_split)?;
    let train = crate::load_samples(root, &cfg.data.train_split, &names)?;
    let val = match &cfg.data.val_split {
        Some(split) => {
            let names = hypsam_core::data::list_split(root, split)?;
            crate::load_samples(root, split, &names)?
        }
        None => Vec::new(),
    };
    Ok((train, val))
}

/// Trains from scratch, writing `train_log.txt`, per-epoch, `last` and
/// `best` checkpoints and a manifest into `out`.
pub fn run(
    cfg: &RunConfig,
    out: &Path,
    synthetic: Option<usize>,
    cache: &Path,
) -> CliResult<TrainSummary> {
    let (train, val) = training_data(cfg, synthetic)?;
    if train.is_empty() {
        return Err(hypsam_core::Error::EmptyDataset.into());
    }
    let ckpt_dir = out.join(CHECKPOINT_DIR);
    std::fs::create_dir_all(&ckpt_dir)?;
    crate::write_manifest(
        out,
        "train",
        cfg,
        cfg.train.seed,
        serde_json::json!({ "train_samples": train.len(), "val_samples": val.len(), "synthetic": synthetic }),
    )?;
    log::info!(
        "training on {} samples ({} validation), {} steps",
        train.len(),
        val.len(),
        cfg.train.total_steps(train.len())
    );

    let net = DfNet::new(
        cfg.model.clone(),
        cfg.train.seed,
        DType::F32,
        &Device::Cpu,
        Some(cache),
    )?;
    let mut trainer = hypsam_dfnet::train::Trainer::new(&net, cfg.train.clone())?;
    let mut log_file = BufWriter::new(File::create(out.join(LOG_FILE))?);
    let mut log_err: Option<std::io::Error> = None;
    let mut best: Option<(f64, usize)> = None;

    let history = trainer.run(
        &train,
        |r| {
            let line = r.log_line();
            log::info!("{line}");
            if let Err(e) = writeln!(log_file, "{line}").and_then(|_| log_file.flush()) {
                log_err.get_or_insert(e);
            }
        },
        |epoch, net| {
            checkpoint::save(
                net,
                &ckpt_dir.join(format!("epoch_{:03}.safetensors", epoch + 1)),
            )?;
            checkpoint::save(net, &ckpt_dir.join("last.safetensors"))?;
            if !val.is_empty() {
                let fw = validate(net, &val, cfg.train.batch)
                    .map_err(|e| hypsam_dfnet::Error::Config(e.to_string()))?;
                log::info!("epoch {} validation F_w {fw:.4}", epoch + 1);
                if best.is_none_or(|(b, _)| fw > b) {
                    best = Some((fw, epoch + 1));
                    checkpoint::save(net, &ckpt_dir.join("best.safetensors"))?;
                }
            }
            Ok(())
        },
    )?;
    if let Some(e) = log_err {
        return Err(e.into());
    }
    // A step cap can end training mid-epoch.
    checkpoint::save(&net, &ckpt_dir.join("last.safetensors"))?;

    let summary = TrainSummary {
        steps: history.len(),
        first_loss: history.first().map_or(f64::NAN, |r| r.loss.total),
        final_loss: history.last().map_or(f64::NAN, |r| r.loss.total),
        best_val_fw: best.map(|b| b.0),
        best_epoch: best.map(|b| b.1),
    };
    std::fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )
    .map_err(|e| CliError::Data(e.to_string()))?;
    Ok(summary)
}
