use std::path::Path;

use hypsam_core::data::load_attributes;
use hypsam_core::metrics::{eval_dirs, write_report, MetricReport, ScoreOptions};

use crate::config::RunConfig;
use crate::error::CliResult;

/// Scores `pred` against `<root>/<split>/GT` and writes the report files into `out`.
pub fn run(
    cfg: &RunConfig,
    pred: &Path,
    split: &str,
    method: Option<&str>,
    attributes: bool,
    out: &Path,
) -> CliResult<MetricReport> {
    let method = method.map(str::to_owned).unwrap_or_else(|| {
        pred.file_name()
            .and_then(|n| n.to_str())
            .map(|n| {
                if n == crate::MAPS_DIR {
                    pred.parent()
                        .and_then(|p| p.file_name())
                        .and_then(|p| p.to_str())
                        .unwrap_or(n)
                } else {
                    n
                }
            })
            .unwrap_or("method")
            .to_owned()
    });
    let gt_dir = cfg.data.root.join(split).join("GT");
    let tags = if attributes {
        Some(load_attributes(&cfg.data.root)?)
    } else {
        None
    };
    let report = eval_dirs(
        &method,
        pred,
        &gt_dir,
        tags.as_ref(),
        ScoreOptions {
            normalize: cfg.eval.normalize,
        },
    )?;
    write_report(out, &report)?;
    crate::write_manifest(
        out,
        "eval",
        cfg,
        cfg.train.seed,
        serde_json::json!({ "pred": pred, "split": split, "images": report.images }),
    )?;
    Ok(report)
}
