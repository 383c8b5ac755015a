use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::curve::{adaptive_f, f_curve, mae, mean_max, pr_curve, PrCurve, THRESHOLDS};
use super::emeasure::e_curve;
use super::smeasure::{s_measure, S_ALPHA};
use super::weighted::weighted_f;
use crate::data::{decode_image, find_image, list_images, Attribute, GT_THRESHOLD};
use crate::error::{Error, Result};
use crate::map::{Mask, SaliencyMap};

/// All metrics of one image, curves included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageScores {
    pub name: String,
    pub mae: f64,
    pub f_avg: f64,
    pub f_max: f64,
    pub f_adaptive: f64,
    pub f_w: f64,
    pub e_m: f64,
    pub e_max: f64,
    pub s_m: f64,
    #[serde(skip)]
    pub precision: Vec<f64>,
    #[serde(skip)]
    pub recall: Vec<f64>,
    #[serde(skip)]
    pub f_curve: Vec<f64>,
    #[serde(skip)]
    pub e_curve: Vec<f64>,
}

pub fn score_image(name: &str, pred: &SaliencyMap, gt: &Mask) -> Result<ImageScores> {
    let pr = pr_curve(pred, gt)?;
    let f = f_curve(&pr);
    let e = e_curve(pred, gt)?;
    let (f_avg, f_max) = mean_max(&f);
    let (e_m, e_max) = mean_max(&e);
    Ok(ImageScores {
        name: name.to_owned(),
        mae: mae(pred, gt)?,
        f_avg,
        f_max,
        f_adaptive: adaptive_f(pred, gt)?,
        f_w: weighted_f(pred, gt)?,
        e_m,
        e_max,
        s_m: s_measure(pred, gt, S_ALPHA)?,
        precision: pr.precision,
        recall: pr.recall,
        f_curve: f,
        e_curve: e,
    })
}

/// Dataset means of a group of images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeRow {
    pub attribute: Attribute,
    pub images: usize,
    pub f_max: f64,
    pub f_w: f64,
    pub mae: f64,
    pub e_m: f64,
    pub s_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub images: usize,
    /// Mean of the dataset F curve (the per-threshold mean of per-image curves).
    pub f_avg: f64,
    /// Maximum of the dataset F curve.
    pub f_max: f64,
    pub f_adaptive: f64,
    pub f_w: f64,
    pub mae: f64,
    /// Mean of the dataset E curve.
    pub e_m: f64,
    /// Maximum of the dataset E curve.
    pub e_max: f64,
    pub s_m: f64,
    pub pr: PrCurve,
    pub f_curve: Vec<f64>,
    pub per_image: Vec<ImageScores>,
    pub attributes: Option<Vec<AttributeRow>>,
}

fn mean_of(rows: &[&ImageScores], f: impl Fn(&ImageScores) -> f64) -> f64 {
    rows.iter().map(|r| f(r)).sum::<f64>() / rows.len() as f64
}

fn mean_curve(rows: &[&ImageScores], f: impl Fn(&ImageScores) -> &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; THRESHOLDS];
    for r in rows {
        for (a, v) in acc.iter_mut().zip(f(r)) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= rows.len() as f64);
    acc
}

/// Dataset-level report. With `tags`, adds one row per attribute that occurs,
/// in canonical attribute order.
pub fn aggregate(
    method: &str,
    per_image: Vec<ImageScores>,
    tags: Option<&BTreeMap<String, BTreeSet<Attribute>>>,
) -> Result<MetricReport> {
    if per_image.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let all: Vec<&ImageScores> = per_image.iter().collect();
    let f = mean_curve(&all, |r| &r.f_curve);
    let e = mean_curve(&all, |r| &r.e_curve);
    let (f_avg, f_max) = mean_max(&f);
    let (e_m, e_max) = mean_max(&e);
    let pr = PrCurve::from_parts(
        mean_curve(&all, |r| &r.precision),
        mean_curve(&all, |r| &r.recall),
    );

    let attributes = tags.map(|tags| {
        Attribute::ALL
            .iter()
            .filter_map(|&attr| {
                let group: Vec<&ImageScores> = per_image
                    .iter()
                    .filter(|r| tags.get(&r.name).is_some_and(|t| t.contains(&attr)))
                    .collect();
                if group.is_empty() {
                    return None;
                }
                let (_, group_f_max) = mean_max(&mean_curve(&group, |r| &r.f_curve));
                Some(AttributeRow {
                    attribute: attr,
                    images: group.len(),
                    f_max: group_f_max,
                    f_w: mean_of(&group, |r| r.f_w),
                    mae: mean_of(&group, |r| r.mae),
                    e_m: mean_of(&group, |r| r.e_m),
                    s_m: mean_of(&group, |r| r.s_m),
                })
            })
            .collect()
    });

    Ok(MetricReport {
        method: method.to_owned(),
        images: per_image.len(),
        f_avg,
        f_max,
        f_adaptive: mean_of(&all, |r| r.f_adaptive),
        f_w: mean_of(&all, |r| r.f_w),
        mae: mean_of(&all, |r| r.mae),
        e_m,
        e_max,
        s_m: mean_of(&all, |r| r.s_m),
        pr,
        f_curve: f,
        per_image,
        attributes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScoreOptions {
    /// Min-max stretch each prediction before scoring, as the common toolbox does.
    pub normalize: bool,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self { normalize: true }
    }
}

/// Loads a grayscale prediction and brings it to ground-truth resolution.
pub fn load_prediction(
    path: &Path,
    gt_dim: (usize, usize),
    options: ScoreOptions,
) -> Result<SaliencyMap> {
    let map = SaliencyMap::from_gray(&decode_image(path)?.to_luma8()).resize(gt_dim.0, gt_dim.1);
    Ok(if options.normalize {
        map.min_max_normalized()
    } else {
        map
    })
}

/// Scores every prediction in `pred_dir` against the same-stem mask in
/// `gt_dir`. Both folders must hold exactly the same stems.
pub fn eval_dirs(
    method: &str,
    pred_dir: &Path,
    gt_dir: &Path,
    tags: Option<&BTreeMap<String, BTreeSet<Attribute>>>,
    options: ScoreOptions,
) -> Result<MetricReport> {
    let preds: BTreeSet<String> = list_images(pred_dir)?.into_iter().collect();
    let gts: BTreeSet<String> = list_images(gt_dir)?.into_iter().collect();
    if preds != gts {
        return Err(Error::NameMismatch {
            missing_pred: gts.difference(&preds).cloned().collect(),
            missing_gt: preds.difference(&gts).cloned().collect(),
        });
    }
    let names: Vec<String> = gts.into_iter().collect();
    let per_image = names
        .par_iter()
        .map(|name| {
            let locate = |dir: &Path| {
                find_image(dir, name).ok_or_else(|| Error::MissingFile(dir.join(name)))
            };
            let gt = Mask::from_gray(&decode_image(&locate(gt_dir)?)?.to_luma8(), GT_THRESHOLD);
            let pred = load_prediction(&locate(pred_dir)?, gt.dim(), options)?;
            score_image(name, &pred, &gt)
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate(method, per_image, tags)
}

pub const REPORT_JSON: &str = "report.json";

/// Writes `report.json`, `summary.csv`, `per_image.csv`, `pr.csv` and, when
/// present, `attributes.csv` into `dir`.
pub fn write_report(dir: &Path, report: &MetricReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(REPORT_JSON), serde_json::to_string_pretty(report)?)?;

    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record([
        "method",
        "images",
        "f_avg",
        "f_max",
        "f_adaptive",
        "f_w",
        "mae",
        "e_m",
        "e_max",
        "s_m",
    ])?;
    w.write_record([
        report.method.clone(),
        report.images.to_string(),
        report.f_avg.to_string(),
        report.f_max.to_string(),
        report.f_adaptive.to_string(),
        report.f_w.to_string(),
        report.mae.to_string(),
        report.e_m.to_string(),
        report.e_max.to_string(),
        report.s_m.to_string(),
    ])?;
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("per_image.csv"))?;
    for row in &report.per_image {
        w.serialize(row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("pr.csv"))?;
    w.write_record(["threshold", "precision", "recall", "f"])?;
    for k in 0..report.pr.thresholds.len() {
        w.write_record([
            report.pr.thresholds[k].to_string(),
            report.pr.precision[k].to_string(),
            report.pr.recall[k].to_string(),
            report.f_curve[k].to_string(),
        ])?;
    }
    w.flush()?;

    if let Some(rows) = &report.attributes {
        let mut w = csv::Writer::from_path(dir.join("attributes.csv"))?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Reads a report written by [`write_report`], given the JSON file or its directory.
pub fn read_report(path: &Path) -> Result<MetricReport> {
    let file: PathBuf = if path.is_dir() {
        path.join(REPORT_JSON)
    } else {
        path.to_owned()
    };
    let text = std::fs::read_to_string(&file).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(file.clone()),
        _ => Error::Io(e),
    })?;
    let malformed = |reason: String| Error::MalformedReport {
        path: file.clone(),
        reason,
    };
    let report: MetricReport = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    let n = report.pr.thresholds.len();
    if n == 0 || report.pr.precision.len() != n || report.pr.recall.len() != n {
        return Err(malformed(
            "precision/recall/threshold lengths differ or are empty".into(),
        ));
    }
    Ok(report)
}

/// Human-readable summary table.
pub fn format_table(report: &MetricReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>6} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
        "method", "images", "F_avg", "F_max", "F_w", "MAE", "E_m", "S_m"
    );
    let _ = writeln!(
        out,
        "{:<16} {:>6} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4}",
        report.method,
        report.images,
        report.f_avg,
        report.f_max,
        report.f_w,
        report.mae,
        report.e_m,
        report.s_m
    );
    if let Some(rows) = &report.attributes {
        let _ = writeln!(
            out,
            "\n{:<6} {:>6} {:>7} {:>7} {:>7}",
            "attr", "images", "F_w", "MAE", "S_m"
        );
        for r in rows {
            let _ = writeln!(
                out,
                "{:<6} {:>6} {:>7.4} {:>7.4} {:>7.4}",
                r.attribute.tag(),
                r.images,
                r.f_w,
                r.mae,
                r.s_m
            );
        }
    }
    out
}
