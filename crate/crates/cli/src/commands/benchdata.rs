//! Benchmark assembly shared by `gen` and `bench`: generate series, window
//! them into labeled train/test pools, and under-sample the training pool.
//!
//! The earliest usable pending timestamp is one week plus k minutes into a
//! series; the last `bench.test_days` days form the test period and
//! everything between is the training period. Training anomalies are all
//! kept; normals are taken at the configured strides.

use crate::config::RunConfig;
use crate::CliError;
use kpidet_core::datagen::{generate, SynthSeries};
use kpidet_core::mlp::{undersample, UndersampleSummary};
use kpidet_core::model::{Dataset, WindowSample, MINUTES_PER_DAY, MINUTES_PER_WEEK};
use kpidet_core::seeds;
use kpidet_core::windowing::{label_windows, WindowSpec};
use std::collections::BTreeSet;

pub struct BenchmarkData {
    pub series: Vec<SynthSeries>,
    pub train: Dataset,
    pub test: Dataset,
    pub undersample: UndersampleSummary,
    /// Windows skipped because they fell off a series boundary.
    pub skipped: usize,
}

pub fn build(config: &RunConfig) -> Result<BenchmarkData, CliError> {
    let spec = config.gen_spec();
    let minutes = spec.minutes() as i64;
    let usable_start = MINUTES_PER_WEEK + i64::from(config.k);
    let test_start = minutes - i64::from(config.bench.test_days) * MINUTES_PER_DAY;
    if test_start <= usable_start {
        return Err(CliError::Usage(format!(
            "gen.days = {} leaves no training period before the {}-day test \
             window (first usable pending timestamp is {usable_start})",
            spec.days, config.bench.test_days
        )));
    }

    let series = generate(&spec)?;
    let wspec = WindowSpec::new(config.k);
    let mut train_pool: Vec<WindowSample> = Vec::new();
    let mut test_samples: Vec<WindowSample> = Vec::new();
    let mut skipped = 0usize;
    for s in &series {
        let truth: BTreeSet<i64> = s.anomalies.iter().copied().collect();
        let (mut train, sk1) = label_windows(
            &s.series,
            &truth,
            usable_start,
            test_start - 1,
            config.bench.train_normal_stride,
            &wspec,
        )?;
        let (mut test, sk2) = label_windows(
            &s.series,
            &truth,
            test_start,
            minutes - 1,
            config.bench.test_normal_stride,
            &wspec,
        )?;
        train_pool.append(&mut train);
        test_samples.append(&mut test);
        skipped += sk1 + sk2;
    }

    let (selected, summary) = undersample(
        &train_pool,
        config.bench.undersample_ratio,
        seeds::derive(config.seed, "undersample"),
    )?;
    let train = Dataset::new(config.k, selected)?;
    let test = Dataset::new(config.k, test_samples)?;
    Ok(BenchmarkData {
        series,
        train,
        test,
        undersample: summary,
        skipped,
    })
}
