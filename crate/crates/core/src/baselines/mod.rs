//! Non-neural detectors run on the same normalized window samples as the
//! classifier, so comparisons are apples-to-apples.
//!
//! Each detector reads the joint sequence of one `WindowSample` and labels
//! the pending point (the last element). History means every joint element
//! except the pending one. Degenerate (constant) windows are labeled normal
//! by all detectors, matching the classifier's rule.

mod iforest;

pub use iforest::{isolation_forest, isolation_forest_scores, IsolationForestConfig};

use crate::model::{Label, WindowSample};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("isolation forest needs a batch of at least 2 samples, got {0}")]
    BatchTooSmall(usize),
    #[error("invalid baseline configuration: {0}")]
    ConfigError(String),
}

/// Parameters for all four detectors.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    /// 3-sigma multiplier.
    pub sigma_multiplier: f64,
    /// EWMA chart control-limit coefficient L.
    pub ewma_l: f64,
    /// EWMA chart smoothing factor.
    pub ewma_alpha: f64,
    pub poly_degree: usize,
    pub poly_threshold: f64,
    pub iforest: IsolationForestConfig,
}

impl Default for BaselineConfig {
    fn default() -> BaselineConfig {
        BaselineConfig {
            sigma_multiplier: 3.0,
            ewma_l: 3.0,
            ewma_alpha: 0.3,
            poly_degree: 4,
            poly_threshold: 0.3,
            iforest: IsolationForestConfig::default(),
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<(), BaselineError> {
        let fail = |msg: &str| Err(BaselineError::ConfigError(msg.into()));
        if self.poly_degree < 1 {
            return fail("poly degree must be >= 1");
        }
        if !(self.ewma_alpha > 0.0 && self.ewma_alpha <= 1.0) {
            return fail("ewma alpha must lie in (0, 1]");
        }
        if self.sigma_multiplier <= 0.0 || self.ewma_l <= 0.0 || self.poly_threshold <= 0.0 {
            return fail("multipliers and thresholds must be positive");
        }
        self.iforest.validate()
    }
}

fn history(sample: &WindowSample) -> &[f64] {
    &sample.joint[..sample.joint.len() - 1]
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Anomaly iff the pending point deviates from the history mean by more
/// than `multiplier` population standard deviations. A zero-spread history
/// flags any deviation at all.
pub fn three_sigma(sample: &WindowSample, multiplier: f64) -> Label {
    if sample.degenerate {
        return Label::Normal;
    }
    let pending = sample.pending_value();
    let (mean, std) = mean_std(history(sample));
    let anomalous = if std == 0.0 {
        pending != mean
    } else {
        (pending - mean).abs() > multiplier * std
    };
    if anomalous {
        Label::Anomaly
    } else {
        Label::Normal
    }
}

/// Control-limit half-width of the EWMA statistic at step `i` (1-indexed):
/// `l * sigma * sqrt(alpha/(2-alpha) * (1 - (1-alpha)^(2i)))`.
pub fn ewma_limit_halfwidth(l: f64, alpha: f64, sigma: f64, i: usize) -> f64 {
    let decay = 1.0 - (1.0 - alpha).powi(2 * i as i32);
    l * sigma * (alpha / (2.0 - alpha) * decay).sqrt()
}

/// EWMA control chart over the joint sequence in time order, seeded at the
/// history mean; the pending point is anomalous iff it falls outside the
/// control limits around the previous EWMA value.
pub fn ewma_chart(sample: &WindowSample, l: f64, alpha: f64) -> Label {
    if sample.degenerate {
        return Label::Normal;
    }
    let joint = &sample.joint;
    let m = joint.len();
    let (mean, sigma) = mean_std(history(sample));
    let mut z = mean;
    for v in &joint[..m - 1] {
        z = alpha * v + (1.0 - alpha) * z;
    }
    let pending = joint[m - 1];
    let halfwidth = ewma_limit_halfwidth(l, alpha, sigma, m);
    if (pending - z).abs() > halfwidth {
        Label::Anomaly
    } else {
        Label::Normal
    }
}

/// Result of the polynomial-regression detector, including the degree that
/// was actually fit (lower than requested when the normal equations were
/// rank-deficient or the history was too short).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyOutcome {
    pub label: Label,
    pub degree_used: usize,
    pub residual: f64,
}

/// Least-squares polynomial fit over the history (indices rescaled so the
/// pending point sits at x = 1), compared against the pending value.
/// Anomaly iff the absolute residual strictly exceeds `threshold`.
pub fn poly_regression_detailed(
    sample: &WindowSample,
    degree: usize,
    threshold: f64,
) -> PolyOutcome {
    if sample.degenerate {
        return PolyOutcome {
            label: Label::Normal,
            degree_used: 0,
            residual: 0.0,
        };
    }
    let hist = history(sample);
    let m = sample.joint.len();
    let xs: Vec<f64> = (0..hist.len()).map(|j| j as f64 / (m - 1) as f64).collect();

    let mut d = degree.min(hist.len() - 1);
    let coeffs = loop {
        match polyfit(&xs, hist, d) {
            Some(c) => break c,
            None => {
                debug_assert!(d > 0, "degree-0 fit cannot be singular");
                d -= 1;
            }
        }
    };
    let fitted = horner(&coeffs, 1.0);
    let residual = (fitted - sample.pending_value()).abs();
    PolyOutcome {
        label: if residual > threshold {
            Label::Anomaly
        } else {
            Label::Normal
        },
        degree_used: d,
        residual,
    }
}

pub fn poly_regression(sample: &WindowSample, degree: usize, threshold: f64) -> Label {
    poly_regression_detailed(sample, degree, threshold).label
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Least-squares fit via the normal equations; returns None when the system
/// is rank-deficient at the working precision.
fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> Option<Vec<f64>> {
    let k = degree + 1;
    // a = V^T V, rhs = V^T y, with V the Vandermonde matrix of xs.
    let mut a = vec![vec![0.0f64; k]; k];
    let mut rhs = vec![0.0f64; k];
    for (&x, &y) in xs.iter().zip(ys) {
        let mut powers = vec![1.0; 2 * k - 1];
        for p in 1..2 * k - 1 {
            powers[p] = powers[p - 1] * x;
        }
        for r in 0..k {
            for c in 0..k {
                a[r][c] += powers[r + c];
            }
            rhs[r] += powers[r] * y;
        }
    }
    solve_linear(&mut a, &mut rhs)
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve_linear(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let scale: f64 = a
        .iter()
        .flat_map(|row| row.iter().map(|v| v.abs()))
        .fold(0.0, f64::max)
        .max(1.0);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| a[r1][col].abs().total_cmp(&a[r2][col].abs()))
            .unwrap();
        if a[pivot_row][col].abs() < 1e-12 * scale {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= factor * a[col][c];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in row + 1..n {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

#[cfg(test)]
pub(crate) fn sample_from_raw(raw: &[f64]) -> WindowSample {
    use crate::windowing::normalize;
    assert_eq!((raw.len() - 3) % 5, 0, "length must be 5k+3");
    let k = ((raw.len() - 3) / 5) as u32;
    let (joint, a, b, degenerate) = normalize(raw).unwrap();
    WindowSample {
        k,
        joint,
        raw_min: a,
        raw_max: b,
        degenerate,
        source_id: "test".into(),
        pending_timestamp: 0,
        label: None,
    }
}
