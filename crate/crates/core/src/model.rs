//! Shared domain types and their invariants.
//!
//! Timestamps are plain integers counting minutes; "one day" is exactly 1440
//! offsets and "one week" exactly 10080. There is no calendar logic anywhere.
//! All types here are immutable after construction and safe to share across
//! worker threads.

use thiserror::Error;

/// Minutes per day at one-minute resolution.
pub const MINUTES_PER_DAY: i64 = 1440;
/// Minutes per week at one-minute resolution.
pub const MINUTES_PER_WEEK: i64 = 10080;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("time series must contain at least one point")]
    EmptySeries,
    #[error("non-finite value at index {index}")]
    NonFiniteValue { index: usize },
    #[error("label code {0} is not 0 (anomaly) or 1 (normal)")]
    BadLabelCode(u8),
    #[error("dataset sample {index} is unlabeled")]
    UnlabeledSample { index: usize },
    #[error("dataset sample {index} has k={found}, expected k={expected}")]
    MixedK {
        index: usize,
        expected: u32,
        found: u32,
    },
    #[error("dataset sample {index} violates window invariants")]
    InvalidSample { index: usize },
    #[error("window parameter k must be >= 1")]
    BadK,
}

/// Class label for one pending point. Numeric codes are fixed: anomaly = 0,
/// normal = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Anomaly,
    Normal,
}

impl Label {
    /// Stable numeric code: 0 for anomaly, 1 for normal.
    pub fn code(self) -> u8 {
        match self {
            Label::Anomaly => 0,
            Label::Normal => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Label, ModelError> {
        match code {
            0 => Ok(Label::Anomaly),
            1 => Ok(Label::Normal),
            other => Err(ModelError::BadLabelCode(other)),
        }
    }
}

/// A minute-resolution KPI series: one value per minute starting at `start`,
/// with missing points kept as explicit `None` markers so index arithmetic
/// stays gap-free.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    id: String,
    start: i64,
    values: Vec<Option<f64>>,
}

impl TimeSeries {
    /// Build a series; rejects empty input and non-finite values.
    pub fn new(
        id: impl Into<String>,
        start: i64,
        values: Vec<Option<f64>>,
    ) -> Result<TimeSeries, ModelError> {
        if values.is_empty() {
            return Err(ModelError::EmptySeries);
        }
        for (index, v) in values.iter().enumerate() {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(ModelError::NonFiniteValue { index });
                }
            }
        }
        Ok(TimeSeries {
            id: id.into(),
            start,
            values,
        })
    }

    /// Convenience constructor for fully observed series.
    pub fn from_values(
        id: impl Into<String>,
        start: i64,
        values: Vec<f64>,
    ) -> Result<TimeSeries, ModelError> {
        TimeSeries::new(id, start, values.into_iter().map(Some).collect())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Timestamp of the first point.
    pub fn start(&self) -> i64 {
        self.start
    }

    /// Timestamp of the last point.
    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // length >= 1 by construction
    }

    /// Value at minute timestamp `t`, or `None` when `t` is out of range or
    /// the point is missing.
    pub fn value_at(&self, t: i64) -> Option<f64> {
        if t < self.start {
            return None;
        }
        let idx = usize::try_from(t - self.start).ok()?;
        self.values.get(idx).copied().flatten()
    }

    /// True when `t` lies inside the covered range (the point may still be
    /// missing).
    pub fn covers(&self, t: i64) -> bool {
        t >= self.start && t <= self.end()
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }
}

/// The normalized joint sequence for a single pending point: the z-block
/// (last week, 2k+1 values), the y-block (yesterday, 2k+1 values), then the
/// x-block (today, trailing k+1 values ending at the pending point). Length
/// is always 5k+3 and the pending point is the last element.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub k: u32,
    pub joint: Vec<f64>,
    /// Raw minimum of the joint sequence before normalization.
    pub raw_min: f64,
    /// Raw maximum of the joint sequence before normalization.
    pub raw_max: f64,
    /// Set when the raw window was constant (raw_max == raw_min); the joint
    /// vector is then all zeros.
    pub degenerate: bool,
    pub source_id: String,
    pub pending_timestamp: i64,
    pub label: Option<Label>,
}

/// Joint-sequence length for a window half-width `k`.
pub fn joint_len(k: u32) -> usize {
    5 * k as usize + 3
}

impl WindowSample {
    /// Attach a label, consuming the sample.
    pub fn with_label(mut self, label: Label) -> WindowSample {
        self.label = Some(label);
        self
    }

    /// The pending point's normalized value (last element of the joint).
    pub fn pending_value(&self) -> f64 {
        *self.joint.last().expect("joint is never empty")
    }
}

/// Check every `WindowSample` invariant; pure predicate, never mutates.
///
/// Non-degenerate windows must have length 5k+3, all elements in [0, 1], and
/// exact 0/1 extremes. Degenerate windows must be all zeros with
/// raw_max == raw_min.
pub fn validate_window(sample: &WindowSample) -> bool {
    if sample.k < 1 || sample.joint.len() != joint_len(sample.k) {
        return false;
    }
    if sample.joint.iter().any(|v| !v.is_finite()) {
        return false;
    }
    if sample.degenerate {
        return sample.raw_max == sample.raw_min && sample.joint.iter().all(|&v| v == 0.0);
    }
    if !(sample.raw_max > sample.raw_min) {
        return false;
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in &sample.joint {
        if !(0.0..=1.0).contains(&v) {
            return false;
        }
        min = min.min(v);
        max = max.max(v);
    }
    min == 0.0 && max == 1.0
}

/// A labeled collection of window samples sharing one `k`.
#[derive(Debug, Clone)]
pub struct Dataset {
    k: u32,
    samples: Vec<WindowSample>,
}

impl Dataset {
    /// Build a dataset, enforcing that every sample is labeled, valid, and
    /// carries the same `k`.
    pub fn new(k: u32, samples: Vec<WindowSample>) -> Result<Dataset, ModelError> {
        if k < 1 {
            return Err(ModelError::BadK);
        }
        for (index, s) in samples.iter().enumerate() {
            if s.label.is_none() {
                return Err(ModelError::UnlabeledSample { index });
            }
            if s.k != k {
                return Err(ModelError::MixedK {
                    index,
                    expected: k,
                    found: s.k,
                });
            }
            if !validate_window(s) {
                return Err(ModelError::InvalidSample { index });
            }
        }
        Ok(Dataset { k, samples })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Joint-vector length shared by all samples.
    pub fn input_dim(&self) -> usize {
        joint_len(self.k)
    }

    pub fn samples(&self) -> &[WindowSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Count of (anomaly, normal) samples.
    pub fn class_counts(&self) -> (usize, usize) {
        let anomalies = self
            .samples
            .iter()
            .filter(|s| s.label == Some(Label::Anomaly))
            .count();
        (anomalies, self.samples.len() - anomalies)
    }
}

/// Binary confusion matrix with the anomaly-as-negative convention:
/// Positive = Normal, Negative = Anomaly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    /// True Normal predicted Normal.
    pub tp: u64,
    /// True Normal predicted Anomaly.
    pub fn_: u64,
    /// True Anomaly predicted Normal.
    pub fp: u64,
    /// True Anomaly predicted Anomaly.
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fn_: u64, fp: u64, tn: u64) -> ConfusionMatrix {
        ConfusionMatrix { tp, fn_, fp, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    /// Cell-wise sum; accumulation is associative so matrices from parallel
    /// workers merge in any order.
    pub fn merge(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tp + other.tp,
            fn_: self.fn_ + other.fn_,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
        }
    }
}
