use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::LabelVocabulary;
use crate::error::{Error, Result};

/// `cells[i][j]` counts samples of true class `i` predicted as class `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfusionMatrix {
    pub cells: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Self {
        Self {
            cells: vec![vec![0; k]; k],
        }
    }

    pub fn k(&self) -> usize {
        self.cells.len()
    }

    pub fn total(&self) -> usize {
        self.cells.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.k()).map(|i| self.cells[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> usize {
        self.cells[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> usize {
        self.cells.iter().map(|r| r[j]).sum()
    }
}

/// False positives and negatives with one class taken as positive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorAnalysis {
    pub positive_class: String,
    pub false_positives: usize,
    pub false_negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "MetricsJson", try_from = "MetricsJson")]
pub struct MetricsReport {
    pub classes: Vec<String>,
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub support: Vec<usize>,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub confusion: ConfusionMatrix,
    pub error_analysis: ErrorAnalysis,
}

#[derive(Serialize, Deserialize)]
struct ClassMetrics {
    precision: f64,
    recall: f64,
    f1: f64,
    support: usize,
}

#[derive(Serialize, Deserialize)]
struct MetricsJson {
    accuracy: f64,
    weighted_precision: f64,
    weighted_recall: f64,
    weighted_f1: f64,
    per_class: BTreeMap<String, ClassMetrics>,
    confusion: Vec<Vec<usize>>,
    classes: Vec<String>,
    error_analysis: ErrorAnalysis,
}

impl From<MetricsReport> for MetricsJson {
    fn from(r: MetricsReport) -> Self {
        let per_class = r
            .classes
            .iter()
            .enumerate()
            .map(|(i, c)| {
                (
                    c.clone(),
                    ClassMetrics {
                        precision: r.precision[i],
                        recall: r.recall[i],
                        f1: r.f1[i],
                        support: r.support[i],
                    },
                )
            })
            .collect();
        MetricsJson {
            accuracy: r.accuracy,
            weighted_precision: r.weighted_precision,
            weighted_recall: r.weighted_recall,
            weighted_f1: r.weighted_f1,
            per_class,
            confusion: r.confusion.cells,
            classes: r.classes,
            error_analysis: r.error_analysis,
        }
    }
}

impl TryFrom<MetricsJson> for MetricsReport {
    type Error = String;

    fn try_from(j: MetricsJson) -> std::result::Result<Self, String> {
        let mut precision = Vec::new();
        let mut recall = Vec::new();
        let mut f1 = Vec::new();
        let mut support = Vec::new();
        for c in &j.classes {
            let m = j.per_class.get(c).ok_or_else(|| format!("per_class lacks `{c}`"))?;
            precision.push(m.precision);
            recall.push(m.recall);
            f1.push(m.f1);
            support.push(m.support);
        }
        Ok(MetricsReport {
            classes: j.classes,
            accuracy: j.accuracy,
            precision,
            recall,
            f1,
            support,
            weighted_precision: j.weighted_precision,
            weighted_recall: j.weighted_recall,
            weighted_f1: j.weighted_f1,
            confusion: ConfusionMatrix { cells: j.confusion },
            error_analysis: j.error_analysis,
        })
    }
}

fn to_indices(labels: &[&str], vocabulary: &LabelVocabulary) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|l| {
            vocabulary
                .index_of(l)
                .ok_or_else(|| Error::Validation(format!("label `{l}` is not in the vocabulary")))
        })
        .collect()
}

pub fn confusion_indices(truth: &[usize], predicted: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::InvalidArgument(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut m = ConfusionMatrix::zeros(k);
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= k || p >= k {
            return Err(Error::InvalidArgument(format!("class index out of range for k={k}")));
        }
        m.cells[t][p] += 1;
    }
    Ok(m)
}

pub fn confusion(truth: &[&str], predicted: &[&str], vocabulary: &LabelVocabulary) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::InvalidArgument(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    confusion_indices(
        &to_indices(truth, vocabulary)?,
        &to_indices(predicted, vocabulary)?,
        vocabulary.len(),
    )
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn report_from_confusion(m: ConfusionMatrix, vocabulary: &LabelVocabulary) -> Result<MetricsReport> {
    let total = m.total();
    if total == 0 {
        return Err(Error::InvalidArgument("metrics need at least one sample".into()));
    }
    let k = m.k();
    let support: Vec<usize> = (0..k).map(|i| m.row_sum(i)).collect();
    let precision: Vec<f64> = (0..k).map(|i| ratio(m.cells[i][i], m.col_sum(i))).collect();
    let recall: Vec<f64> = (0..k).map(|i| ratio(m.cells[i][i], support[i])).collect();
    let f1: Vec<f64> = precision.iter().zip(&recall).map(|(&p, &r)| harmonic(p, r)).collect();
    let weighted = |v: &[f64]| v.iter().zip(&support).map(|(x, &s)| x * s as f64).sum::<f64>() / total as f64;

    let positive = vocabulary.index_of("fake").unwrap_or(1.min(k - 1));
    let false_negatives = support[positive] - m.cells[positive][positive];
    let false_positives = m.col_sum(positive) - m.cells[positive][positive];
    Ok(MetricsReport {
        classes: vocabulary.classes().to_vec(),
        accuracy: ratio(m.trace(), total),
        weighted_precision: weighted(&precision),
        weighted_recall: weighted(&recall),
        weighted_f1: weighted(&f1),
        precision,
        recall,
        f1,
        support,
        error_analysis: ErrorAnalysis {
            positive_class: vocabulary.classes()[positive].clone(),
            false_positives,
            false_negatives,
        },
        confusion: m,
    })
}

/// Accuracy, per-class and support-weighted precision/recall/F1.
///
/// Empty denominators give 0 rather than NaN.
pub fn metrics(truth: &[&str], predicted: &[&str], vocabulary: &LabelVocabulary) -> Result<MetricsReport> {
    report_from_confusion(confusion(truth, predicted, vocabulary)?, vocabulary)
}

pub fn metrics_indices(truth: &[usize], predicted: &[usize], vocabulary: &LabelVocabulary) -> Result<MetricsReport> {
    report_from_confusion(confusion_indices(truth, predicted, vocabulary.len())?, vocabulary)
}

/// Support-weighted F1 straight from class indices; 0 for empty input.
pub fn weighted_f1_indices(truth: &[usize], predicted: &[usize], k: usize) -> f64 {
    let Ok(m) = confusion_indices(truth, predicted, k) else {
        return 0.0;
    };
    let total = m.total();
    if total == 0 {
        return 0.0;
    }
    (0..k)
        .map(|i| {
            let p = ratio(m.cells[i][i], m.col_sum(i));
            let r = ratio(m.cells[i][i], m.row_sum(i));
            harmonic(p, r) * m.row_sum(i) as f64
        })
        .sum::<f64>()
        / total as f64
}
