//! Classification metrics and the report artifacts built from them.

mod metrics;
mod plot;
mod report;

pub use metrics::{
    confusion, confusion_indices, metrics, metrics_indices, weighted_f1_indices, ConfusionMatrix, ErrorAnalysis,
    MetricsReport,
};
pub use plot::{bar_chart, confusion_heatmap, training_curves};
pub use report::{emit_reports, read_metrics, ReportFiles};
