use std::path::{Path, PathBuf};

use hypsam_core::metrics::{read_report, MetricReport};
use plotters::prelude::*;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const PLOT_FILE: &str = "pr_curves.svg";

/// `(recall, precision)` pairs in threshold order.
pub fn curve_points(report: &MetricReport) -> Vec<(f64, f64)> {
    report
        .pr
        .recall
        .iter()
        .zip(&report.pr.precision)
        .map(|(&r, &p)| (r, p))
        .collect()
}

/// Reports sorted by F_max, best first; ties keep input order.
pub fn legend_order(reports: &[MetricReport]) -> Vec<&MetricReport> {
    let mut v: Vec<&MetricReport> = reports.iter().collect();
    v.sort_by(|a, b| b.f_max.total_cmp(&a.f_max));
    v
}

pub fn legend_label(report: &MetricReport) -> String {
    format!("{} (F_max {:.3})", report.method, report.f_max)
}

fn plot_err(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("plotting failed: {e}"))
}

/// Draws every curve into one SVG.
pub fn draw(reports: &[MetricReport], path: &Path, title: &str) -> CliResult<()> {
    let root = SVGBackend::new(path, (720, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(16)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(0f64..1f64, 0f64..1f64)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("Recall")
        .y_desc("Precision")
        .draw()
        .map_err(plot_err)?;
    for (i, r) in legend_order(reports).into_iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(curve_points(r), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(legend_label(r))
            .legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2))
            });
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::LowerLeft)
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Reads each report (JSON file or report directory) and writes
/// `<out>/pr_curves.svg`.
pub fn run(
    cfg: &RunConfig,
    inputs: &[PathBuf],
    out: &Path,
    title: Option<&str>,
) -> CliResult<PathBuf> {
    let reports = inputs
        .iter()
        .map(|p| read_report(p))
        .collect::<Result<Vec<_>, _>>()?;
    std::fs::create_dir_all(out)?;
    let path = out.join(PLOT_FILE);
    draw(&reports, &path, title.unwrap_or("Precision-recall"))?;
    let order: Vec<&str> = legend_order(&reports)
        .iter()
        .map(|r| r.method.as_str())
        .collect();
    crate::write_manifest(
        out,
        "plot-pr",
        cfg,
        cfg.train.seed,
        serde_json::json!({ "reports": inputs, "legend": order }),
    )?;
    Ok(path)
}
