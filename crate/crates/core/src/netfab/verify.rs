//! Empirical verification of compiled feature networks against the oracle.
//!
//! Each feature graph is evaluated on seeded random vectors (uniform in
//! [-10, 10]) plus constant and monotone edge vectors. Exact constructions
//! must agree to 1e-9 relative error; sigmoid-indicator constructions to
//! 1e-3 absolute, with inputs inside the transition band around a decision
//! threshold excluded from pass/fail.

use super::build::build_feature;
use super::{eval, CompGraph, NetError, INDICATOR_BAND};
use crate::features::{compute, FeatureProfile, FeatureSpec};
use crate::seeds;
use rand::Rng;
use rayon::prelude::*;
use std::fmt;

/// Relative tolerance for the exact-arithmetic constructions.
pub const EXACT_REL_TOL: f64 = 1e-9;
/// Absolute tolerance for the indicator-based constructions.
pub const INDICATOR_ABS_TOL: f64 = 1e-3;

/// Verification outcome for one feature graph.
#[derive(Debug, Clone)]
pub struct VerifyOutcome {
    pub feature: String,
    pub trials_used: usize,
    pub trials_excluded: usize,
    pub max_abs_error: f64,
    /// |net - oracle| / max(1, |oracle|): relative error with the magnitude
    /// floored at one so near-zero oracle values stay comparable.
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub tolerance_is_relative: bool,
    pub pass: bool,
}

impl fmt::Display for VerifyOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = if self.tolerance_is_relative {
            "rel"
        } else {
            "abs"
        };
        let err = if self.tolerance_is_relative {
            self.max_rel_error
        } else {
            self.max_abs_error
        };
        write!(
            f,
            "{:<34} {} err {:.3e} (tol {:.0e}, {} trials, {} excluded): {}",
            self.feature,
            kind,
            err,
            self.tolerance,
            self.trials_used,
            self.trials_excluded,
            if self.pass { "ok" } else { "FAIL" }
        )
    }
}

/// Verification report over a whole feature profile at one input length.
#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub n: usize,
    pub outcomes: Vec<VerifyOutcome>,
}

impl VerificationReport {
    pub fn pass(&self) -> bool {
        self.outcomes.iter().all(|o| o.pass)
    }
}

/// Seeded trial inputs: `trials` uniform vectors plus the edge cases
/// (zero, constant, ascending and descending ramps).
pub fn trial_inputs(n: usize, trials: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut inputs = Vec::with_capacity(trials + 4);
    for t in 0..trials {
        let mut rng = seeds::rng(seeds::derive_indexed(seed, "netfab.verify.trial", t as u64));
        inputs.push((0..n).map(|_| rng.random_range(-10.0..10.0)).collect());
    }
    inputs.push(vec![0.0; n]);
    inputs.push(vec![3.7; n]);
    let ramp = |i: usize| {
        if n == 1 {
            0.0
        } else {
            -10.0 + 20.0 * i as f64 / (n - 1) as f64
        }
    };
    inputs.push((0..n).map(ramp).collect());
    inputs.push((0..n).map(|i| ramp(n - 1 - i)).collect());
    inputs
}

/// True when `x` lies inside the indicator transition band of `spec`, where
/// the sigmoid approximation is allowed to disagree with the hard indicator.
fn in_transition_band(spec: &FeatureSpec, x: &[f64]) -> bool {
    match spec {
        FeatureSpec::SimpleThresholdGe { threshold }
        | FeatureSpec::SimpleThresholdLt { threshold } => {
            (x[x.len() - 1] - threshold).abs() < INDICATOR_BAND
        }
        FeatureSpec::CountAboveMean | FeatureSpec::CountBelowMean => {
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            x.iter().any(|v| (v - mean).abs() < INDICATOR_BAND)
        }
        _ => false,
    }
}

/// Compare `graph` against the oracle for `spec` on seeded trials.
pub fn verify(
    graph: &CompGraph,
    spec: &FeatureSpec,
    trials: usize,
    seed: u64,
) -> Result<VerifyOutcome, NetError> {
    assert!(trials >= 1, "at least one trial required");
    let inputs = trial_inputs(graph.input_dim(), trials, seed);
    let indicator = spec.is_indicator();

    let per_input: Vec<Option<(f64, f64)>> = inputs
        .par_iter()
        .map(|x| -> Result<Option<(f64, f64)>, NetError> {
            if indicator && in_transition_band(spec, x) {
                return Ok(None);
            }
            let oracle = compute(spec, x)?;
            let got = eval(graph, x)?;
            let want = oracle.as_slice();
            debug_assert_eq!(got.len(), want.len());
            let mut abs: f64 = 0.0;
            let mut rel: f64 = 0.0;
            for (g, w) in got.iter().zip(want) {
                let d = (g - w).abs();
                abs = abs.max(d);
                rel = rel.max(d / w.abs().max(1.0));
            }
            Ok(Some((abs, rel)))
        })
        .collect::<Result<_, _>>()?;

    let mut outcome = VerifyOutcome {
        feature: spec.name(),
        trials_used: 0,
        trials_excluded: 0,
        max_abs_error: 0.0,
        max_rel_error: 0.0,
        tolerance: if indicator {
            INDICATOR_ABS_TOL
        } else {
            EXACT_REL_TOL
        },
        tolerance_is_relative: !indicator,
        pass: false,
    };
    for entry in per_input {
        match entry {
            Some((abs, rel)) => {
                outcome.trials_used += 1;
                outcome.max_abs_error = outcome.max_abs_error.max(abs);
                outcome.max_rel_error = outcome.max_rel_error.max(rel);
            }
            None => outcome.trials_excluded += 1,
        }
    }
    outcome.pass = if indicator {
        outcome.max_abs_error <= INDICATOR_ABS_TOL
    } else {
        outcome.max_rel_error <= EXACT_REL_TOL
    };
    Ok(outcome)
}

/// Build and verify every feature of `profile` at input length `n`.
pub fn verify_profile(
    profile: &FeatureProfile,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<VerificationReport, NetError> {
    let mut outcomes = Vec::with_capacity(profile.specs().len());
    for spec in profile.specs() {
        let graph = build_feature(spec, n)?;
        outcomes.push(verify(&graph, spec, trials, seed)?);
    }
    Ok(VerificationReport { n, outcomes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netfab::build::{build_primitive, Primitive};

    #[test]
    fn abs_graph_is_exact_on_random_inputs() {
        let graph = build_primitive(Primitive::Abs);
        for t in 0..1000 {
            let mut rng = seeds::rng(seeds::derive_indexed(7, "abs", t));
            let x: f64 = rng.random_range(-10.0..10.0);
            assert_eq!(eval(&graph, &[x]).unwrap()[0], x.abs());
        }
    }

    #[test]
    fn ewma_graph_verifies_tightly() {
        let spec = FeatureSpec::EwmaFit { alpha: 0.2 };
        let graph = build_feature(&spec, 50).unwrap();
        let outcome = verify(&graph, &spec, 1000, 11).unwrap();
        assert!(outcome.pass, "{outcome}");
        assert!(outcome.max_rel_error <= 1e-9);
    }

    #[test]
    fn count_above_mean_verifies_with_exclusion() {
        let spec = FeatureSpec::CountAboveMean;
        let graph = build_feature(&spec, 30).unwrap();
        let outcome = verify(&graph, &spec, 1000, 13).unwrap();
        assert!(outcome.pass, "{outcome}");
        // The two constant edge vectors tie every value with the mean.
        assert!(outcome.trials_excluded >= 2);
    }

    #[test]
    fn max_fold_verifies_at_moderate_length() {
        let spec = FeatureSpec::Max;
        let graph = build_feature(&spec, 40).unwrap();
        let outcome = verify(&graph, &spec, 300, 17).unwrap();
        assert!(outcome.pass, "{outcome}");
    }

    #[test]
    fn profile_verifies_at_small_length() {
        let profile = FeatureProfile::for_length(12, 0.0);
        let report = verify_profile(&profile, 12, 200, 23).unwrap();
        assert!(report.pass());
        assert_eq!(report.outcomes.len(), profile.specs().len());
    }

    #[test]
    fn indicator_band_excludes_threshold_hits() {
        let spec = FeatureSpec::SimpleThresholdGe { threshold: 0.0 };
        assert!(in_transition_band(&spec, &[1.0, 0.0005]));
        assert!(!in_transition_band(&spec, &[0.0005, 1.0]));
    }
}
