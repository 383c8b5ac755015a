//! Saliency evaluation toolbox.
//!
//! Curve metrics use 256 thresholds `t_k = k / 256` with a pixel counted as
//! positive when `pred > t_k`. Every metric takes a prediction already at
//! ground-truth resolution; [`eval_dirs`] handles the resizing.

mod curve;
mod emeasure;
mod report;
mod smeasure;
mod weighted;

pub use curve::{
    adaptive_f, f_curve, f_curve_stats, f_measure, mae, pr_curve, threshold_counts, PrCurve, BETA2,
    THRESHOLDS,
};
pub use emeasure::{e_curve, e_measure};
pub use report::{
    aggregate, eval_dirs, format_table, load_prediction, read_report, score_image, write_report,
    AttributeRow, ImageScores, MetricReport, ScoreOptions, REPORT_JSON,
};
pub use smeasure::{s_measure, S_ALPHA};
pub use weighted::weighted_f;
