use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evaluation::{bar_chart, confusion_heatmap, training_curves, MetricsReport};
use crate::training::TrainRecord;

/// Paths written by [`emit_reports`].
#[derive(Debug, Clone, Default)]
pub struct ReportFiles {
    pub metrics: PathBuf,
    pub confusion: PathBuf,
    pub class_distribution: Option<PathBuf>,
    pub curves: Vec<PathBuf>,
}

/// Writes `metrics.json`, `confusion.png`, one `curves_<model>.png` plus its
/// CSV per training record, and `class_distribution.png` when counts are given.
pub fn emit_reports(
    report: &MetricsReport,
    records: &[TrainRecord],
    class_counts: Option<&[usize]>,
    out_dir: impl AsRef<Path>,
) -> Result<ReportFiles> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;

    let metrics = dir.join("metrics.json");
    let json = serde_json::to_string_pretty(report)?;
    fs::write(&metrics, json + "\n").map_err(|e| Error::io(format!("writing {}", metrics.display()), e))?;

    let confusion = dir.join("confusion.png");
    confusion_heatmap(&report.confusion).save(&confusion)?;

    let class_distribution = match class_counts {
        Some(counts) => {
            let p = dir.join("class_distribution.png");
            bar_chart(counts).save(&p)?;
            Some(p)
        }
        None => None,
    };

    let mut curves = Vec::new();
    for r in records {
        let stem: String = r
            .model
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        let png = dir.join(format!("curves_{stem}.png"));
        training_curves(r).save(&png)?;
        r.write_csv(dir.join(format!("curves_{stem}.csv")))?;
        curves.push(png);
    }
    Ok(ReportFiles {
        metrics,
        confusion,
        class_distribution,
        curves,
    })
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<MetricsReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(serde_json::from_str(&text)?)
}
