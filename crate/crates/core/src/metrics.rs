//! Confusion-matrix accumulation, recall/precision/F1, and report
//! rendering.
//!
//! Convention throughout: Positive = Normal, Negative = Anomaly, so
//! recall = TN/(TN+FP) and precision = TN/(TN+FN); both measure how well
//! the anomalies were found. Degenerate denominators resolve so that a
//! perfect classifier on one-class data scores 1: recall is 1 when no
//! anomalies existed, precision is 1 when none were claimed, and F1 is 0
//! only when precision + recall is 0.

use crate::model::{ConfusionMatrix, Label};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no (truth, prediction) pairs to accumulate")]
    Empty,
    #[error("row '{name}': stored f1 {stored:.4} differs from f1 of rendered precision/recall {recomputed:.4} by more than 0.1pp")]
    Inconsistent {
        name: String,
        stored: f64,
        recomputed: f64,
    },
}

/// Count (truth, prediction) pairs into a confusion matrix.
pub fn accumulate<I>(pairs: I) -> Result<ConfusionMatrix, MetricsError>
where
    I: IntoIterator<Item = (Label, Label)>,
{
    let mut m = ConfusionMatrix::default();
    let mut any = false;
    for (truth, predicted) in pairs {
        any = true;
        match (truth, predicted) {
            (Label::Normal, Label::Normal) => m.tp += 1,
            (Label::Normal, Label::Anomaly) => m.fn_ += 1,
            (Label::Anomaly, Label::Normal) => m.fp += 1,
            (Label::Anomaly, Label::Anomaly) => m.tn += 1,
        }
    }
    if !any {
        return Err(MetricsError::Empty);
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

/// Recall, precision, and F1 of a confusion matrix.
pub fn scores(m: &ConfusionMatrix) -> Scores {
    let recall = if m.tn + m.fp == 0 {
        1.0
    } else {
        m.tn as f64 / (m.tn + m.fp) as f64
    };
    let precision = if m.tn + m.fn_ == 0 {
        1.0
    } else {
        m.tn as f64 / (m.tn + m.fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Scores {
        recall,
        precision,
        f1,
    }
}

/// One evaluated algorithm: its matrix plus the derived metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub name: String,
    pub matrix: ConfusionMatrix,
    pub scores: Scores,
}

impl EvalRow {
    /// Row with metrics computed from the matrix.
    pub fn new(name: impl Into<String>, matrix: ConfusionMatrix) -> EvalRow {
        EvalRow {
            name: name.into(),
            scores: scores(&matrix),
            matrix,
        }
    }

    /// Row with externally supplied metrics (e.g. parsed from a results
    /// file); [`report`] cross-checks these against the matrix.
    pub fn from_parts(
        name: impl Into<String>,
        matrix: ConfusionMatrix,
        row_scores: Scores,
    ) -> EvalRow {
        EvalRow {
            name: name.into(),
            matrix,
            scores: row_scores,
        }
    }
}

/// A rendered evaluation table.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

/// Build a report from (name, matrix) rows, cross-checking each row: the F1
/// recomputed from the rendered (one-decimal) precision and recall must stay
/// within 0.1 percentage points of the stored F1.
pub fn report(rows: Vec<EvalRow>) -> Result<EvalReport, MetricsError> {
    for row in &rows {
        let rendered_p = (row.scores.precision * 1000.0).round() / 1000.0;
        let rendered_r = (row.scores.recall * 1000.0).round() / 1000.0;
        let recomputed = if rendered_p + rendered_r == 0.0 {
            0.0
        } else {
            2.0 * rendered_p * rendered_r / (rendered_p + rendered_r)
        };
        if (recomputed - row.scores.f1).abs() > 0.001 {
            return Err(MetricsError::Inconsistent {
                name: row.name.clone(),
                stored: row.scores.f1,
                recomputed,
            });
        }
    }
    Ok(EvalReport { rows })
}

impl EvalReport {
    /// Aligned text table with percentages to one decimal.
    pub fn render_text(&self) -> String {
        let name_width = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .chain(std::iter::once("Algorithms".len()))
            .max()
            .unwrap_or(10);
        let mut out = String::new();
        out.push_str(&format!(
            "{:<name_width$}  {:>7} {:>6} {:>6} {:>6}  {:>7} {:>10} {:>9}\n",
            "Algorithms", "TP", "FN", "FP", "TN", "Recall", "Precision", "F1-Score"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<name_width$}  {:>7} {:>6} {:>6} {:>6}  {:>6.1}% {:>9.1}% {:>8.1}%\n",
                r.name,
                r.matrix.tp,
                r.matrix.fn_,
                r.matrix.fp,
                r.matrix.tn,
                r.scores.recall * 100.0,
                r.scores.precision * 100.0,
                r.scores.f1 * 100.0,
            ));
        }
        out
    }

    /// Machine-readable CSV: name,tp,fn,fp,tn,recall,precision,f1 with the
    /// metrics as six-decimal fractions.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("name,tp,fn,fp,tn,recall,precision,f1\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{:.6},{:.6},{:.6}\n",
                r.name,
                r.matrix.tp,
                r.matrix.fn_,
                r.matrix.fp,
                r.matrix.tn,
                r.scores.recall,
                r.scores.precision,
                r.scores.f1,
            ));
        }
        out
    }
}

/// The seven published benchmark rows used to pin the metric arithmetic.
pub const REFERENCE_ROWS: [(&str, u64, u64, u64, u64); 7] = [
    ("3-Sigma", 10524, 702, 1331, 3178),
    ("EWMA Control Chart", 8981, 2245, 294, 4215),
    ("Polynomial Regression", 9193, 2033, 579, 3930),
    ("Isolation Forest", 9071, 2155, 364, 4145),
    ("XGBoost", 11082, 144, 1039, 3470),
    ("DNN-1", 11091, 135, 891, 3618),
    ("DNN-2", 11100, 126, 852, 3657),
];
