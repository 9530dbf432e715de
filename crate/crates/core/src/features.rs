//! Direct computation of the classical time-series feature set.
//!
//! This is the ground-truth oracle the compiled networks in [`crate::netfab`]
//! are verified against. Conventions follow the feature definitions exactly:
//! `mean_change` divides by `n` (not n-1), the EWMA forecast at step j uses
//! values up to `x_{j-1}` only, and the count features use strict
//! inequalities so ties at the mean count for neither side.

use thiserror::Error;

/// Canonical smoother window sizes (minutes).
pub const CANONICAL_WINDOWS: [usize; 5] = [10, 20, 30, 40, 50];
/// Canonical EWMA factors.
pub const CANONICAL_ALPHAS: [f64; 4] = [0.2, 0.4, 0.6, 0.8];
/// Canonical historical-change horizons in points (1 day, 7 days).
pub const CANONICAL_HORIZONS: [usize; 2] = [1440, 10080];

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("{feature}: input length {got} is below the minimum {needed}")]
    LengthError {
        feature: String,
        needed: usize,
        got: usize,
    },
    #[error("{feature}: {reason}")]
    ParamError { feature: String, reason: String },
}

/// One feature with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSpec {
    /// 1 if the last value is >= threshold, else 0.
    SimpleThresholdGe {
        threshold: f64,
    },
    /// 1 if the last value is < threshold, else 0.
    SimpleThresholdLt {
        threshold: f64,
    },
    Max,
    Min,
    Average,
    /// Vector of successive differences `x_{i+1} - x_i`.
    Difference,
    Integration,
    AbsSumChanges,
    MeanChange,
    MeanSecondDerivativeCentral,
    CountAboveMean,
    CountBelowMean,
    /// `x_n - x_{n-h}` with the horizon h in points.
    HistoricalChange {
        horizon: usize,
    },
    /// `SMA_n(w) - x_n`.
    SmaFit {
        window: usize,
    },
    /// `WMA_n(w) - x_n`.
    WmaFit {
        window: usize,
    },
    /// `EWMA_n(alpha) - x_n`.
    EwmaFit {
        alpha: f64,
    },
}

/// A computed feature: a scalar for every kind except `Difference`.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl FeatureValue {
    pub fn as_slice(&self) -> &[f64] {
        match self {
            FeatureValue::Scalar(v) => std::slice::from_ref(v),
            FeatureValue::Vector(v) => v,
        }
    }

    pub fn scalar(&self) -> f64 {
        match self {
            FeatureValue::Scalar(v) => *v,
            FeatureValue::Vector(_) => panic!("feature value is a vector"),
        }
    }
}

impl FeatureSpec {
    /// Stable identifier used in output vectors, serialized graphs, and CSVs.
    pub fn name(&self) -> String {
        match self {
            FeatureSpec::SimpleThresholdGe { .. } => "simple_threshold_ge".into(),
            FeatureSpec::SimpleThresholdLt { .. } => "simple_threshold_lt".into(),
            FeatureSpec::Max => "max".into(),
            FeatureSpec::Min => "min".into(),
            FeatureSpec::Average => "average".into(),
            FeatureSpec::Difference => "difference".into(),
            FeatureSpec::Integration => "integration".into(),
            FeatureSpec::AbsSumChanges => "abs_sum_changes".into(),
            FeatureSpec::MeanChange => "mean_change".into(),
            FeatureSpec::MeanSecondDerivativeCentral => "mean_second_derivative_central".into(),
            FeatureSpec::CountAboveMean => "count_above_mean".into(),
            FeatureSpec::CountBelowMean => "count_below_mean".into(),
            FeatureSpec::HistoricalChange { horizon } => format!("historical_change_{horizon}"),
            FeatureSpec::SmaFit { window } => format!("sma_fit_{window}"),
            FeatureSpec::WmaFit { window } => format!("wma_fit_{window}"),
            FeatureSpec::EwmaFit { alpha } => format!("ewma_fit_{alpha}"),
        }
    }

    /// Minimum input length the feature is defined for.
    pub fn min_len(&self) -> usize {
        match self {
            FeatureSpec::SimpleThresholdGe { .. }
            | FeatureSpec::SimpleThresholdLt { .. }
            | FeatureSpec::Max
            | FeatureSpec::Min
            | FeatureSpec::Average
            | FeatureSpec::Integration
            | FeatureSpec::CountAboveMean
            | FeatureSpec::CountBelowMean => 1,
            FeatureSpec::Difference
            | FeatureSpec::AbsSumChanges
            | FeatureSpec::MeanChange
            | FeatureSpec::EwmaFit { .. } => 2,
            FeatureSpec::MeanSecondDerivativeCentral => 3,
            FeatureSpec::HistoricalChange { horizon } => horizon + 1,
            FeatureSpec::SmaFit { window } | FeatureSpec::WmaFit { window } => *window,
        }
    }

    /// Number of output coordinates for input length `n`.
    pub fn output_width(&self, n: usize) -> usize {
        match self {
            FeatureSpec::Difference => n - 1,
            _ => 1,
        }
    }

    /// True for the sigmoid-indicator features, whose compiled form is an
    /// approximation with a transition band around the decision threshold.
    pub fn is_indicator(&self) -> bool {
        matches!(
            self,
            FeatureSpec::SimpleThresholdGe { .. }
                | FeatureSpec::SimpleThresholdLt { .. }
                | FeatureSpec::CountAboveMean
                | FeatureSpec::CountBelowMean
        )
    }

    /// Reject malformed parameters (zero windows, factors outside [0, 1]).
    pub fn validate(&self) -> Result<(), FeatureError> {
        let err = |reason: &str| {
            Err(FeatureError::ParamError {
                feature: self.name(),
                reason: reason.into(),
            })
        };
        match self {
            FeatureSpec::SmaFit { window } | FeatureSpec::WmaFit { window } => {
                if *window < 1 {
                    return err("window must be >= 1");
                }
            }
            FeatureSpec::EwmaFit { alpha } => {
                if !(0.0..=1.0).contains(alpha) || !alpha.is_finite() {
                    return err("alpha must lie in [0, 1]");
                }
            }
            FeatureSpec::HistoricalChange { horizon } => {
                if *horizon < 1 {
                    return err("horizon must be >= 1");
                }
            }
            FeatureSpec::SimpleThresholdGe { threshold }
            | FeatureSpec::SimpleThresholdLt { threshold }
                if !threshold.is_finite() =>
            {
                return err("threshold must be finite");
            }
            _ => {}
        }
        Ok(())
    }
}

fn check_len(spec: &FeatureSpec, x: &[f64]) -> Result<(), FeatureError> {
    spec.validate()?;
    let needed = spec.min_len();
    if x.len() < needed {
        return Err(FeatureError::LengthError {
            feature: spec.name(),
            needed,
            got: x.len(),
        });
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// EWMA forecast by the defining recursion: `EWMA_1 = x_1`,
/// `EWMA_j = alpha * x_{j-1} + (1 - alpha) * EWMA_{j-1}` for j >= 2.
pub fn ewma_recursive(alpha: f64, x: &[f64]) -> f64 {
    let mut e = x[0];
    for j in 1..x.len() {
        e = alpha * x[j - 1] + (1.0 - alpha) * e;
    }
    e
}

/// Closed-form EWMA forecast weights on `x_1..x_{n-1}` (the last input
/// carries no weight): coefficient of `x_j` is `alpha * (1-alpha)^(n-1-j)`
/// for j >= 2 and `(1-alpha)^(n-2)` for j = 1. Used by the network builder;
/// the oracle keeps to the recursion so the two routes stay independent.
pub fn ewma_unrolled_weights(alpha: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let mut w = vec![0.0; n];
    w[0] = (1.0 - alpha).powi(n as i32 - 2);
    for j in 2..n {
        w[j - 1] = alpha * (1.0 - alpha).powi((n - 1 - j) as i32);
    }
    w
}

/// Compute one feature on `x`.
pub fn compute(spec: &FeatureSpec, x: &[f64]) -> Result<FeatureValue, FeatureError> {
    check_len(spec, x)?;
    let n = x.len();
    let last = x[n - 1];
    let value = match spec {
        FeatureSpec::SimpleThresholdGe { threshold } => {
            FeatureValue::Scalar(if last >= *threshold { 1.0 } else { 0.0 })
        }
        FeatureSpec::SimpleThresholdLt { threshold } => {
            FeatureValue::Scalar(if last < *threshold { 1.0 } else { 0.0 })
        }
        FeatureSpec::Max => {
            FeatureValue::Scalar(x.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        }
        FeatureSpec::Min => FeatureValue::Scalar(x.iter().copied().fold(f64::INFINITY, f64::min)),
        FeatureSpec::Average => FeatureValue::Scalar(mean(x)),
        FeatureSpec::Difference => {
            FeatureValue::Vector(x.windows(2).map(|w| w[1] - w[0]).collect())
        }
        FeatureSpec::Integration => FeatureValue::Scalar(x.iter().sum()),
        FeatureSpec::AbsSumChanges => {
            FeatureValue::Scalar(x.windows(2).map(|w| (w[1] - w[0]).abs()).sum())
        }
        FeatureSpec::MeanChange => FeatureValue::Scalar((last - x[0]) / n as f64),
        FeatureSpec::MeanSecondDerivativeCentral => {
            let sum: f64 = x.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).sum();
            FeatureValue::Scalar(sum / (2.0 * n as f64))
        }
        FeatureSpec::CountAboveMean => {
            let m = mean(x);
            FeatureValue::Scalar(x.iter().filter(|&&v| v > m).count() as f64)
        }
        FeatureSpec::CountBelowMean => {
            let m = mean(x);
            FeatureValue::Scalar(x.iter().filter(|&&v| v < m).count() as f64)
        }
        FeatureSpec::HistoricalChange { horizon } => {
            FeatureValue::Scalar(last - x[n - 1 - horizon])
        }
        FeatureSpec::SmaFit { window } => {
            let sma = x[n - window..].iter().sum::<f64>() / *window as f64;
            FeatureValue::Scalar(sma - last)
        }
        FeatureSpec::WmaFit { window } => {
            let w = *window;
            let weighted: f64 = (1..=w).map(|k| k as f64 * x[n - w + k - 1]).sum();
            let wma = 2.0 * weighted / (w as f64 * (w + 1) as f64);
            FeatureValue::Scalar(wma - last)
        }
        FeatureSpec::EwmaFit { alpha } => FeatureValue::Scalar(ewma_recursive(*alpha, x) - last),
    };
    Ok(value)
}

/// The ordered feature list computed per input, at the canonical
/// parameterizations that fit an input of length `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureProfile {
    specs: Vec<FeatureSpec>,
}

impl FeatureProfile {
    pub fn new(specs: Vec<FeatureSpec>) -> FeatureProfile {
        FeatureProfile { specs }
    }

    /// All canonical features whose minimum length fits `n`, in canonical order.
    /// The simple-threshold value `threshold` is a configuration parameter
    /// (0 is the natural choice on normalized data).
    pub fn for_length(n: usize, threshold: f64) -> FeatureProfile {
        let mut specs = vec![
            FeatureSpec::SimpleThresholdGe { threshold },
            FeatureSpec::SimpleThresholdLt { threshold },
            FeatureSpec::Max,
            FeatureSpec::Min,
            FeatureSpec::Average,
            FeatureSpec::Difference,
            FeatureSpec::Integration,
            FeatureSpec::AbsSumChanges,
            FeatureSpec::MeanChange,
            FeatureSpec::MeanSecondDerivativeCentral,
            FeatureSpec::CountAboveMean,
            FeatureSpec::CountBelowMean,
        ];
        for horizon in CANONICAL_HORIZONS {
            specs.push(FeatureSpec::HistoricalChange { horizon });
        }
        for window in CANONICAL_WINDOWS {
            specs.push(FeatureSpec::SmaFit { window });
        }
        for window in CANONICAL_WINDOWS {
            specs.push(FeatureSpec::WmaFit { window });
        }
        for alpha in CANONICAL_ALPHAS {
            specs.push(FeatureSpec::EwmaFit { alpha });
        }
        specs.retain(|s| s.min_len() <= n);
        FeatureProfile { specs }
    }

    pub fn specs(&self) -> &[FeatureSpec] {
        &self.specs
    }

    /// Flattened output names for input length `n` (vector features expand
    /// to one name per coordinate).
    pub fn output_names(&self, n: usize) -> Vec<String> {
        let mut names = Vec::new();
        for spec in &self.specs {
            let width = spec.output_width(n);
            if width == 1 {
                names.push(spec.name());
            } else {
                for i in 1..=width {
                    names.push(format!("{}_{i}", spec.name()));
                }
            }
        }
        names
    }
}

/// Compute every feature of the profile on `x`, flattened in profile order.
pub fn compute_all(
    profile: &FeatureProfile,
    x: &[f64],
) -> Result<(Vec<String>, Vec<f64>), FeatureError> {
    let mut values = Vec::new();
    for spec in profile.specs() {
        values.extend_from_slice(compute(spec, x)?.as_slice());
    }
    Ok((profile.output_names(x.len()), values))
}
