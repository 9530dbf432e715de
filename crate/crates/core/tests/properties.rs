//! Property tests for the quantified invariants: windowing geometry and
//! normalization, feature shift/scale equivariances, metric bounds, and
//! the end-to-end affine invariance of the detectors.

use kpidet_core::baselines::{ewma_chart, poly_regression, three_sigma};
use kpidet_core::features::{compute, ewma_recursive, ewma_unrolled_weights, FeatureSpec};
use kpidet_core::io::{dataset_from_csv, dataset_to_csv, series_from_csv, series_to_csv};
use kpidet_core::metrics::{accumulate, scores};
use kpidet_core::model::{
    validate_window, ConfusionMatrix, Dataset, Label, TimeSeries, WindowSample,
};
use kpidet_core::windowing::{extract, normalize, WindowSpec};
use proptest::prelude::*;

fn series_values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-100.0..100.0f64, len)
}

fn ramp_series(len: usize) -> TimeSeries {
    TimeSeries::from_values("ramp", 0, (0..len).map(|i| i as f64).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn joint_length_is_5k_plus_3(k in 1u32..=300) {
        let len = 10080 + k as usize + 2;
        let series = ramp_series(len);
        let sample = extract(&series, 10080 + k as i64 + 1, &WindowSpec::new(k)).unwrap();
        prop_assert_eq!(sample.joint.len(), 5 * k as usize + 3);
        prop_assert!(validate_window(&sample));
    }

    #[test]
    fn normalization_spans_unit_interval(values in series_values(43)) {
        let (out, a, b, degenerate) = normalize(&values).unwrap();
        if degenerate {
            prop_assert!(out.iter().all(|&v| v == 0.0));
            prop_assert_eq!(a, b);
        } else {
            let min = out.iter().copied().fold(f64::INFINITY, f64::min);
            let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(min, 0.0);
            prop_assert_eq!(max, 1.0);
            prop_assert!(out.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn normalization_preserves_order(values in series_values(23)) {
        let (out, _, b, degenerate) = normalize(&values).unwrap();
        prop_assume!(!degenerate);
        let _ = b;
        for i in 0..values.len() {
            for j in 0..values.len() {
                if values[i] < values[j] {
                    prop_assert!(out[i] < out[j]);
                }
            }
        }
    }

    #[test]
    fn normalization_is_affine_invariant(
        values in series_values(23),
        c in 0.01..100.0f64,
        d in -1000.0..1000.0f64,
    ) {
        let (base, _, _, degenerate) = normalize(&values).unwrap();
        prop_assume!(!degenerate);
        let transformed: Vec<f64> = values.iter().map(|v| c * v + d).collect();
        let (out, _, _, deg2) = normalize(&transformed).unwrap();
        prop_assert!(!deg2);
        for (x, y) in base.iter().zip(&out) {
            prop_assert!((x - y).abs() < 1e-12, "{} vs {}", x, y);
        }
    }

    #[test]
    fn extract_denormalizes_to_raw(offset in 0i64..200, k in 1u32..8) {
        let len = 10080 + 600;
        let series = TimeSeries::from_values(
            "s", 0,
            (0..len).map(|i| ((i * 37) % 1009) as f64 * 0.37 - 100.0).collect(),
        ).unwrap();
        let t = 10080 + k as i64 + offset;
        let sample = extract(&series, t, &WindowSpec::new(k)).unwrap();
        prop_assume!(!sample.degenerate);
        let kk = k as i64;
        let mut raw = Vec::new();
        for ts in (t - 10080 - kk)..=(t - 10080 + kk) {
            raw.push(series.value_at(ts).unwrap());
        }
        for ts in (t - 1440 - kk)..=(t - 1440 + kk) {
            raw.push(series.value_at(ts).unwrap());
        }
        for ts in (t - kk)..=t {
            raw.push(series.value_at(ts).unwrap());
        }
        for (norm, want) in sample.joint.iter().zip(&raw) {
            let got = norm * (sample.raw_max - sample.raw_min) + sample.raw_min;
            prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn shift_invariant_features(values in series_values(30), c in -50.0..50.0f64) {
        let shifted: Vec<f64> = values.iter().map(|v| v + c).collect();
        for spec in [
            FeatureSpec::Difference,
            FeatureSpec::AbsSumChanges,
            FeatureSpec::MeanSecondDerivativeCentral,
            FeatureSpec::SmaFit { window: 10 },
            FeatureSpec::WmaFit { window: 10 },
            FeatureSpec::EwmaFit { alpha: 0.4 },
            FeatureSpec::HistoricalChange { horizon: 5 },
        ] {
            let base = compute(&spec, &values).unwrap();
            let moved = compute(&spec, &shifted).unwrap();
            for (a, b) in base.as_slice().iter().zip(moved.as_slice()) {
                prop_assert!((a - b).abs() < 1e-9, "{}: {} vs {}", spec.name(), a, b);
            }
        }
        // Max, min, average shift by c; integration by n*c.
        for spec in [FeatureSpec::Max, FeatureSpec::Min, FeatureSpec::Average] {
            let base = compute(&spec, &values).unwrap().scalar();
            let moved = compute(&spec, &shifted).unwrap().scalar();
            prop_assert!((moved - base - c).abs() < 1e-9);
        }
        let base = compute(&FeatureSpec::Integration, &values).unwrap().scalar();
        let moved = compute(&FeatureSpec::Integration, &shifted).unwrap().scalar();
        prop_assert!((moved - base - values.len() as f64 * c).abs() < 1e-7);
    }

    #[test]
    fn scale_equivariant_features(values in series_values(30), c in 0.01..50.0f64) {
        let scaled: Vec<f64> = values.iter().map(|v| c * v).collect();
        for spec in [
            FeatureSpec::Max,
            FeatureSpec::Min,
            FeatureSpec::Average,
            FeatureSpec::Difference,
            FeatureSpec::Integration,
            FeatureSpec::AbsSumChanges,
            FeatureSpec::MeanChange,
            FeatureSpec::MeanSecondDerivativeCentral,
            FeatureSpec::SmaFit { window: 10 },
            FeatureSpec::WmaFit { window: 10 },
            FeatureSpec::EwmaFit { alpha: 0.6 },
            FeatureSpec::HistoricalChange { horizon: 3 },
        ] {
            let base = compute(&spec, &values).unwrap();
            let got = compute(&spec, &scaled).unwrap();
            for (a, b) in base.as_slice().iter().zip(got.as_slice()) {
                let want = c * a;
                prop_assert!(
                    (b - want).abs() <= 1e-9 * want.abs().max(1.0),
                    "{}: {} vs {}", spec.name(), b, want
                );
            }
        }
    }

    #[test]
    fn counts_invariant_under_positive_affine(
        values in series_values(30),
        c in 0.01..50.0f64,
        d in -50.0..50.0f64,
    ) {
        let transformed: Vec<f64> = values.iter().map(|v| c * v + d).collect();
        for spec in [FeatureSpec::CountAboveMean, FeatureSpec::CountBelowMean] {
            let base = compute(&spec, &values).unwrap().scalar();
            let got = compute(&spec, &transformed).unwrap().scalar();
            // Rounding in c*v + d can flip exact ties only.
            prop_assert!((base - got).abs() < 1.5, "{}: {} vs {}", spec.name(), base, got);
        }
    }

    #[test]
    fn count_partition_sums_to_n(values in series_values(25)) {
        let above = compute(&FeatureSpec::CountAboveMean, &values).unwrap().scalar();
        let below = compute(&FeatureSpec::CountBelowMean, &values).unwrap().scalar();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let ties = values.iter().filter(|&&v| v == mean).count() as f64;
        prop_assert_eq!(above + below + ties, values.len() as f64);
    }

    #[test]
    fn ewma_unrolled_matches_recursion(values in series_values(40), alpha in 0.01..0.99f64) {
        let unrolled: f64 = ewma_unrolled_weights(alpha, values.len())
            .iter()
            .zip(&values)
            .map(|(w, v)| w * v)
            .sum();
        let recursive = ewma_recursive(alpha, &values);
        prop_assert!((unrolled - recursive).abs() < 1e-12 * recursive.abs().max(1.0));
    }

    #[test]
    fn f1_lies_between_min_and_geometric_mean(
        tp in 0u64..10000, fn_ in 0u64..10000, fp in 0u64..10000, tn in 0u64..10000,
    ) {
        prop_assume!(tp + fn_ + fp + tn > 0);
        let s = scores(&ConfusionMatrix::new(tp, fn_, fp, tn));
        if s.precision > 0.0 && s.recall > 0.0 {
            prop_assert!(s.f1 >= s.precision.min(s.recall) - 1e-12);
            prop_assert!(s.f1 <= (s.precision * s.recall).sqrt() + 1e-12);
        }
    }

    #[test]
    fn series_csv_round_trips(
        start in -5000i64..5000,
        cells in proptest::collection::vec(
            proptest::option::weighted(0.9, -1e6..1e6f64), 1..120,
        ),
    ) {
        let series = TimeSeries::new("s", start, cells).unwrap();
        let back = series_from_csv(&series_to_csv(&series), "s").unwrap();
        prop_assert_eq!(back.start(), series.start());
        prop_assert_eq!(back.len(), series.len());
        for t in series.start()..=series.end() {
            match (series.value_at(t), back.value_at(t)) {
                (None, None) => {}
                (Some(a), Some(b)) => {
                    prop_assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0))
                }
                other => prop_assert!(false, "missing-point mismatch {:?}", other),
            }
        }
        // Serialization is stable at fixed precision.
        prop_assert_eq!(series_to_csv(&back), series_to_csv(&series));
    }

    #[test]
    fn dataset_csv_round_trips(
        raws in proptest::collection::vec(
            proptest::collection::vec(-100.0..100.0f64, 13),
            1..12,
        ),
        anomaly_mask in proptest::collection::vec(any::<bool>(), 12),
    ) {
        let samples: Vec<WindowSample> = raws
            .iter()
            .zip(&anomaly_mask)
            .map(|(raw, &anomalous)| {
                let (joint, a, b, degenerate) = normalize(raw).unwrap();
                WindowSample {
                    k: 2,
                    joint,
                    raw_min: a,
                    raw_max: b,
                    degenerate,
                    source_id: "p".into(),
                    pending_timestamp: 0,
                    label: Some(if anomalous { Label::Anomaly } else { Label::Normal }),
                }
            })
            .collect();
        let dataset = Dataset::new(2, samples).unwrap();
        let back = dataset_from_csv(&dataset_to_csv(&dataset), 2).unwrap();
        prop_assert_eq!(back.len(), dataset.len());
        for (orig, got) in dataset.samples().iter().zip(back.samples()) {
            prop_assert_eq!(orig.label, got.label);
            prop_assert_eq!(orig.degenerate, got.degenerate);
            prop_assert!(validate_window(got));
            for (a, b) in orig.joint.iter().zip(&got.joint) {
                prop_assert!((a - b).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn accumulate_is_order_free(swap in any::<bool>()) {
        use Label::{Anomaly as A, Normal as N};
        let mut pairs = vec![(N, N), (A, A), (N, A), (A, N), (N, N)];
        if swap {
            pairs.reverse();
        }
        let m = accumulate(pairs).unwrap();
        prop_assert_eq!(m.total(), 5);
    }
}

proptest! {
    // Heavier end-to-end case: detectors see identical labels for a raw
    // series and any positive affine transform of it, because windows are
    // normalized first.
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn detectors_are_affine_invariant_end_to_end(
        seed_v in 0u64..1000,
        c in 0.1..10.0f64,
        d in -100.0..100.0f64,
    ) {
        let len = 10080 + 20;
        let base: Vec<f64> = (0..len)
            .map(|i| {
                let x = (i as u64).wrapping_mul(2654435761).wrapping_add(seed_v);
                ((x % 1000) as f64) * 0.01 + ((i % 1440) as f64 * 0.004)
            })
            .collect();
        let transformed: Vec<f64> = base.iter().map(|v| c * v + d).collect();
        let s1 = TimeSeries::from_values("a", 0, base).unwrap();
        let s2 = TimeSeries::from_values("b", 0, transformed).unwrap();
        let spec = WindowSpec::new(2);
        for t in [10082i64, 10090, 10099] {
            let w1 = extract(&s1, t, &spec).unwrap();
            let w2 = extract(&s2, t, &spec).unwrap();
            prop_assert_eq!(three_sigma(&w1, 3.0), three_sigma(&w2, 3.0));
            prop_assert_eq!(ewma_chart(&w1, 3.0, 0.3), ewma_chart(&w2, 3.0, 0.3));
            prop_assert_eq!(
                poly_regression(&w1, 4, 0.3),
                poly_regression(&w2, 4, 0.3)
            );
        }
    }
}
