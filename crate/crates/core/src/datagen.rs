//! Seeded synthetic KPI generator with injected anomalies.
//!
//! Series carry daily (1440-minute) and weekly (10080-minute) periodic
//! structure plus Gaussian noise. Injected anomalies (spikes, dips, and
//! level shifts) are recorded exactly, point by point. The base signal and
//! the anomaly placement draw from separate derived rng streams, so two
//! specs differing only in anomaly rates share the same clean signal.

use crate::model::{TimeSeries, MINUTES_PER_DAY, MINUTES_PER_WEEK};
use crate::seeds;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("invalid generator spec: {0}")]
    Invalid(String),
}

/// Base daily/weekly shape of a family of series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternKind {
    /// Pure daily sine.
    SineDaily,
    /// Daily sine with weekly amplitude modulation.
    SineWeeklyModulated,
    /// Daily square wave (sharp level transitions twice a day).
    Square,
    /// Slow linear trend over a damped daily sine.
    Trend,
}

impl PatternKind {
    pub fn name(self) -> &'static str {
        match self {
            PatternKind::SineDaily => "sine-daily",
            PatternKind::SineWeeklyModulated => "sine-weekly-modulated",
            PatternKind::Square => "square",
            PatternKind::Trend => "trend",
        }
    }

    pub fn parse(name: &str) -> Result<PatternKind, SpecError> {
        match name {
            "sine-daily" => Ok(PatternKind::SineDaily),
            "sine-weekly-modulated" => Ok(PatternKind::SineWeeklyModulated),
            "square" => Ok(PatternKind::Square),
            "trend" => Ok(PatternKind::Trend),
            other => Err(SpecError::Invalid(format!("unknown pattern '{other}'"))),
        }
    }
}

/// Expected fraction of points carrying each anomaly kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalyRates {
    pub spike: f64,
    pub dip: f64,
    pub level_shift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_series: usize,
    /// Series length in days; at least 15 so windows exist past the
    /// two-week warmup.
    pub days: u32,
    pub pattern: PatternKind,
    pub base_level: f64,
    /// Amplitude of the periodic pattern.
    pub amplitude: f64,
    pub noise_sigma: f64,
    pub rates: AnomalyRates,
    /// Anomaly magnitude bounds in multiples of noise_sigma.
    pub magnitude: (f64, f64),
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> SynthSpec {
        SynthSpec {
            n_series: 12,
            days: 18,
            pattern: PatternKind::SineDaily,
            base_level: 10.0,
            amplitude: 5.0,
            noise_sigma: 1.0,
            rates: AnomalyRates {
                spike: 0.013,
                dip: 0.009,
                level_shift: 0.006,
            },
            magnitude: (6.0, 10.0),
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        let fail = |msg: &str| Err(SpecError::Invalid(msg.into()));
        if self.n_series < 1 {
            return fail("n_series must be >= 1");
        }
        if self.days < 15 {
            return fail("days must be >= 15 so windows exist past the two-week warmup");
        }
        for (name, rate) in [
            ("spike", self.rates.spike),
            ("dip", self.rates.dip),
            ("level_shift", self.rates.level_shift),
        ] {
            if !(0.0..=0.05).contains(&rate) {
                return fail(&format!("{name} rate must lie in [0, 0.05]"));
            }
        }
        if self.magnitude.0 < 3.0 || self.magnitude.1 < self.magnitude.0 {
            return fail("magnitudes must be >= 3 noise sigmas with min <= max");
        }
        if !(self.noise_sigma > 0.0) {
            return fail("noise_sigma must be positive");
        }
        Ok(())
    }

    pub fn minutes(&self) -> usize {
        self.days as usize * MINUTES_PER_DAY as usize
    }
}

/// One generated series with its ground-truth anomalous timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSeries {
    pub series: TimeSeries,
    /// Sorted timestamps of every injected anomalous point.
    pub anomalies: Vec<i64>,
}

/// Minimum and maximum duration (minutes) of a level-shift event.
const SHIFT_DURATION: (u64, u64) = (30, 180);

fn pattern_value(kind: PatternKind, base: f64, amp: f64, phase: f64, t: f64) -> f64 {
    let daily = 2.0 * std::f64::consts::PI * t / MINUTES_PER_DAY as f64 + phase;
    match kind {
        PatternKind::SineDaily => base + amp * daily.sin(),
        PatternKind::SineWeeklyModulated => {
            let weekly = 2.0 * std::f64::consts::PI * t / MINUTES_PER_WEEK as f64;
            base + amp * (1.0 + 0.3 * weekly.sin()) * daily.sin()
        }
        PatternKind::Square => base + amp * if daily.sin() >= 0.0 { 1.0 } else { -1.0 },
        PatternKind::Trend => {
            let slope = amp / (2.0 * MINUTES_PER_WEEK as f64);
            base + slope * t + 0.5 * amp * daily.sin()
        }
    }
}

fn draw_magnitude(rng: &mut ChaCha8Rng, spec: &SynthSpec) -> f64 {
    let (lo, hi) = spec.magnitude;
    let m = if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    };
    m * spec.noise_sigma
}

fn generate_one(spec: &SynthSpec, index: usize) -> SynthSeries {
    let n = spec.minutes();
    let mut base_rng = seeds::rng(seeds::derive_indexed(
        spec.seed,
        "gen.series.base",
        index as u64,
    ));
    let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");

    let phase = base_rng.random_range(0.0..std::f64::consts::TAU);
    let base = spec.base_level + base_rng.random_range(-2.0..2.0);
    let amp = spec.amplitude * base_rng.random_range(0.8..1.2);
    let mut values: Vec<f64> = (0..n)
        .map(|t| {
            pattern_value(spec.pattern, base, amp, phase, t as f64) + noise.sample(&mut base_rng)
        })
        .collect();

    // Anomaly injection draws from its own stream so the clean signal is
    // unchanged when rates change. Level shifts are placed first (they need
    // a contiguous unmarked span), then the single-point spikes and dips.
    let mut anom_rng = seeds::rng(seeds::derive_indexed(
        spec.seed,
        "gen.series.anomalies",
        index as u64,
    ));
    let mut marked: BTreeSet<usize> = BTreeSet::new();

    let shift_target = (spec.rates.level_shift * n as f64).round() as usize;
    let mut shift_points = 0usize;
    let mut attempts = 0usize;
    while shift_points < shift_target && attempts < 100 {
        let duration =
            (anom_rng.random_range(SHIFT_DURATION.0..=SHIFT_DURATION.1) as usize).min(n - 1);
        let start = anom_rng.random_range(0..n - duration);
        let magnitude = draw_magnitude(&mut anom_rng, spec);
        let sign = if anom_rng.random::<bool>() { 1.0 } else { -1.0 };
        if (start..start + duration).any(|t| marked.contains(&t)) {
            attempts += 1;
            continue;
        }
        for t in start..start + duration {
            values[t] += sign * magnitude;
            marked.insert(t);
        }
        shift_points += duration;
    }

    let n_spikes = (spec.rates.spike * n as f64).round() as usize;
    let n_dips = (spec.rates.dip * n as f64).round() as usize;
    let mut placed = 0usize;
    attempts = 0;
    while placed < n_spikes + n_dips && attempts < 100 * (n_spikes + n_dips).max(1) {
        let t = anom_rng.random_range(0..n);
        let magnitude = draw_magnitude(&mut anom_rng, spec);
        if marked.contains(&t) {
            attempts += 1;
            continue;
        }
        let sign = if placed < n_spikes { 1.0 } else { -1.0 };
        values[t] += sign * magnitude;
        marked.insert(t);
        placed += 1;
    }

    let series = TimeSeries::from_values(format!("synth-{index:03}"), 0, values)
        .expect("generated series is non-empty and finite");
    SynthSeries {
        series,
        anomalies: marked.into_iter().map(|t| t as i64).collect(),
    }
}

/// Generate all series of the spec; deterministic per seed.
pub fn generate(spec: &SynthSpec) -> Result<Vec<SynthSeries>, SpecError> {
    spec.validate()?;
    Ok((0..spec.n_series).map(|i| generate_one(spec, i)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let spec = SynthSpec {
            n_series: 2,
            ..SynthSpec::default()
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        let other = generate(&SynthSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn zero_rates_mean_zero_anomalies() {
        let spec = SynthSpec {
            n_series: 1,
            rates: AnomalyRates {
                spike: 0.0,
                dip: 0.0,
                level_shift: 0.0,
            },
            ..SynthSpec::default()
        };
        let out = generate(&spec).unwrap();
        assert!(out[0].anomalies.is_empty());
    }

    #[test]
    fn injected_anomalies_deviate_from_clean_signal() {
        let clean_spec = SynthSpec {
            n_series: 1,
            days: 15,
            rates: AnomalyRates {
                spike: 0.0,
                dip: 0.0,
                level_shift: 0.0,
            },
            ..SynthSpec::default()
        };
        let spiky_spec = SynthSpec {
            rates: AnomalyRates {
                spike: 0.01,
                dip: 0.01,
                level_shift: 0.005,
            },
            ..clean_spec.clone()
        };
        let clean = &generate(&clean_spec).unwrap()[0];
        let spiky = &generate(&spiky_spec).unwrap()[0];
        assert!(!spiky.anomalies.is_empty());
        for &t in &spiky.anomalies {
            let c = clean.series.value_at(t).unwrap();
            let v = spiky.series.value_at(t).unwrap();
            assert!(
                (v - c).abs() >= 6.0 * spiky_spec.noise_sigma - 1e-9,
                "t={t}: |{v} - {c}| below magnitude floor"
            );
        }
        // Non-anomalous points are untouched.
        let marked: std::collections::BTreeSet<i64> = spiky.anomalies.iter().copied().collect();
        for t in 0..spiky.series.len() as i64 {
            if !marked.contains(&t) {
                assert_eq!(spiky.series.value_at(t), clean.series.value_at(t));
            }
        }
    }

    #[test]
    fn expected_anomaly_volume() {
        let spec = SynthSpec::default();
        let out = generate(&spec).unwrap();
        let total: usize = out.iter().map(|s| s.anomalies.len()).sum();
        let expected = (spec.rates.spike + spec.rates.dip + spec.rates.level_shift)
            * (spec.n_series * spec.minutes()) as f64;
        // The last level shift may overshoot its target by one duration.
        assert!(
            (total as f64) > 0.95 * expected && (total as f64) < 1.1 * expected,
            "total {total}, expected about {expected}"
        );
    }

    #[test]
    fn spec_validation() {
        assert!(SynthSpec::default().validate().is_ok());
        assert!(SynthSpec {
            days: 14,
            ..SynthSpec::default()
        }
        .validate()
        .is_err());
        assert!(SynthSpec {
            magnitude: (2.0, 5.0),
            ..SynthSpec::default()
        }
        .validate()
        .is_err());
        assert!(SynthSpec {
            rates: AnomalyRates {
                spike: 0.06,
                dip: 0.0,
                level_shift: 0.0
            },
            ..SynthSpec::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn pattern_kinds_parse_and_differ() {
        for kind in [
            PatternKind::SineDaily,
            PatternKind::SineWeeklyModulated,
            PatternKind::Square,
            PatternKind::Trend,
        ] {
            assert_eq!(PatternKind::parse(kind.name()).unwrap(), kind);
        }
        assert!(PatternKind::parse("sawtooth").is_err());

        let sine = generate(&SynthSpec {
            n_series: 1,
            ..SynthSpec::default()
        })
        .unwrap();
        let square = generate(&SynthSpec {
            n_series: 1,
            pattern: PatternKind::Square,
            ..SynthSpec::default()
        })
        .unwrap();
        assert_ne!(sine[0].series, square[0].series);
    }
}
