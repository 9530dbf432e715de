//! Three-subsequence window extraction and min-max normalization.
//!
//! For a pending timestamp `t` the joint sequence is
//! `[z_{t-k..t+k}, y_{t-k..t+k}, x_{t-k..t}]` where `x_i = X_i`,
//! `y_i = X_{i-1440}` (yesterday) and `z_i = X_{i-10080}` (last week), so the
//! pending point is the last element. The whole joint sequence is min-max
//! normalized with its own extremes.

use crate::model::{joint_len, TimeSeries, WindowSample, MINUTES_PER_DAY, MINUTES_PER_WEEK};
use thiserror::Error;

/// Window geometry: half-width `k` in minutes plus the fixed day/week
/// offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub k: u32,
    day_offset: i64,
    week_offset: i64,
}

impl WindowSpec {
    /// Spec with the default half-width k = 180 (3 hours).
    pub fn new(k: u32) -> WindowSpec {
        WindowSpec {
            k,
            day_offset: MINUTES_PER_DAY,
            week_offset: MINUTES_PER_WEEK,
        }
    }
}

impl Default for WindowSpec {
    fn default() -> WindowSpec {
        WindowSpec::new(180)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum WindowError {
    #[error("window for t={t} needs [{lo}, {hi}] but series '{id}' covers [{start}, {end}]")]
    OutOfRange {
        id: String,
        t: i64,
        lo: i64,
        hi: i64,
        start: i64,
        end: i64,
    },
    #[error("series '{id}' is missing a point at t={missing_at} required by window for t={t}")]
    MissingData { id: String, t: i64, missing_at: i64 },
    #[error("k must be >= 1")]
    BadK,
    #[error("stride must be >= 1")]
    BadStride,
    #[error("t_start {0} exceeds t_end {1}")]
    BadRange(i64, i64),
    #[error("cannot normalize an empty vector")]
    EmptyInput,
}

/// Min-max normalize a raw joint sequence.
///
/// Returns the normalized vector together with the raw extremes `(a, b)` and
/// the degenerate flag. A constant input (b == a) normalizes to all zeros,
/// the x = a limit of the formula, and sets the flag.
pub fn normalize(raw_joint: &[f64]) -> Result<(Vec<f64>, f64, f64, bool), WindowError> {
    if raw_joint.is_empty() {
        return Err(WindowError::EmptyInput);
    }
    let a = raw_joint.iter().copied().fold(f64::INFINITY, f64::min);
    let b = raw_joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if b > a {
        let range = b - a;
        let out = raw_joint.iter().map(|&v| (v - a) / range).collect();
        Ok((out, a, b, false))
    } else {
        Ok((vec![0.0; raw_joint.len()], a, b, true))
    }
}

/// Extract and normalize the window for pending timestamp `t`.
///
/// The series must cover `[t - 10080 - k, t]` with no missing point inside
/// the three subsequences. The returned sample is unlabeled.
pub fn extract(
    series: &TimeSeries,
    t: i64,
    spec: &WindowSpec,
) -> Result<WindowSample, WindowError> {
    if spec.k < 1 {
        return Err(WindowError::BadK);
    }
    let k = i64::from(spec.k);
    let lo = t - spec.week_offset - k;
    if lo < series.start() || t > series.end() {
        return Err(WindowError::OutOfRange {
            id: series.id().to_string(),
            t,
            lo,
            hi: t,
            start: series.start(),
            end: series.end(),
        });
    }

    let mut raw = Vec::with_capacity(joint_len(spec.k));
    let push_range = |from: i64, to: i64, raw: &mut Vec<f64>| {
        for ts in from..=to {
            match series.value_at(ts) {
                Some(v) => raw.push(v),
                None => {
                    return Err(WindowError::MissingData {
                        id: series.id().to_string(),
                        t,
                        missing_at: ts,
                    })
                }
            }
        }
        Ok(())
    };
    // z-block: last week, y-block: yesterday, x-block: today up to t.
    push_range(t - spec.week_offset - k, t - spec.week_offset + k, &mut raw)?;
    push_range(t - spec.day_offset - k, t - spec.day_offset + k, &mut raw)?;
    push_range(t - k, t, &mut raw)?;
    debug_assert_eq!(raw.len(), joint_len(spec.k));

    let (joint, a, b, degenerate) = normalize(&raw)?;
    Ok(WindowSample {
        k: spec.k,
        joint,
        raw_min: a,
        raw_max: b,
        degenerate,
        source_id: series.id().to_string(),
        pending_timestamp: t,
        label: None,
    })
}

/// Batch extraction over `[t_start, t_end]` at the given stride.
///
/// Timestamps whose window is out of range or overlaps missing data are
/// skipped; the skip count is returned alongside the samples.
pub fn sliding_extract(
    series: &TimeSeries,
    t_start: i64,
    t_end: i64,
    stride: u32,
    spec: &WindowSpec,
) -> Result<(Vec<WindowSample>, usize), WindowError> {
    if stride < 1 {
        return Err(WindowError::BadStride);
    }
    if t_start > t_end {
        return Err(WindowError::BadRange(t_start, t_end));
    }
    let mut samples = Vec::new();
    let mut skipped = 0usize;
    let mut t = t_start;
    while t <= t_end {
        match extract(series, t, spec) {
            Ok(s) => samples.push(s),
            Err(WindowError::OutOfRange { .. }) | Err(WindowError::MissingData { .. }) => {
                skipped += 1
            }
            Err(e) => return Err(e),
        }
        t += i64::from(stride);
    }
    Ok((samples, skipped))
}

/// Extract labeled windows for supervised runs: one Anomaly sample per
/// ground-truth timestamp inside `[t_start, t_end]`, plus Normal samples at
/// `normal_stride` over the same range (skipping anomalous timestamps).
/// Timestamps whose window cannot be extracted are skipped and counted.
pub fn label_windows(
    series: &TimeSeries,
    anomalies: &std::collections::BTreeSet<i64>,
    t_start: i64,
    t_end: i64,
    normal_stride: u32,
    spec: &WindowSpec,
) -> Result<(Vec<crate::model::WindowSample>, usize), WindowError> {
    if normal_stride < 1 {
        return Err(WindowError::BadStride);
    }
    if t_start > t_end {
        return Err(WindowError::BadRange(t_start, t_end));
    }
    let mut samples = Vec::new();
    let mut skipped = 0usize;
    for &t in anomalies.range(t_start..=t_end) {
        match extract(series, t, spec) {
            Ok(s) => samples.push(s.with_label(crate::model::Label::Anomaly)),
            Err(WindowError::OutOfRange { .. }) | Err(WindowError::MissingData { .. }) => {
                skipped += 1
            }
            Err(e) => return Err(e),
        }
    }
    let mut t = t_start;
    while t <= t_end {
        if !anomalies.contains(&t) {
            match extract(series, t, spec) {
                Ok(s) => samples.push(s.with_label(crate::model::Label::Normal)),
                Err(WindowError::OutOfRange { .. }) | Err(WindowError::MissingData { .. }) => {
                    skipped += 1
                }
                Err(e) => return Err(e),
            }
        }
        t += i64::from(normal_stride);
    }
    Ok((samples, skipped))
}
