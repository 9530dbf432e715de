//! Isolation forest over per-window 2-D summaries.
//!
//! Each window collapses to the point (pending value, pending value minus
//! the SMA-10 of its history); the forest isolates outliers with random
//! axis-aligned splits and flags the top `contamination` fraction by
//! anomaly score. Deterministic per seed.

use super::BaselineError;
use crate::model::{Label, WindowSample};
use crate::seeds;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationForestConfig {
    pub n_estimators: usize,
    /// Per-tree subsample cap; the effective size is min(this, batch).
    pub max_samples: usize,
    /// Fraction of the batch flagged as anomalous.
    pub contamination: f64,
    pub seed: u64,
}

impl Default for IsolationForestConfig {
    fn default() -> IsolationForestConfig {
        IsolationForestConfig {
            n_estimators: 3,
            max_samples: 256,
            contamination: 0.15,
            seed: 0,
        }
    }
}

impl IsolationForestConfig {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.n_estimators < 1 {
            return Err(BaselineError::ConfigError(
                "n_estimators must be >= 1".into(),
            ));
        }
        if !(self.contamination > 0.0 && self.contamination < 0.5) {
            return Err(BaselineError::ConfigError(
                "contamination must lie in (0, 0.5)".into(),
            ));
        }
        if self.max_samples < 2 {
            return Err(BaselineError::ConfigError(
                "max_samples must be >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// Average unsuccessful-search path length in a BST of m nodes.
fn c_factor(m: usize) -> f64 {
    match m {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let h = (m as f64 - 1.0).ln() + EULER_MASCHERONI;
            2.0 * h - 2.0 * (m as f64 - 1.0) / m as f64
        }
    }
}

enum Node {
    Internal {
        feature: usize,
        split: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
    External {
        size: usize,
    },
}

fn build_tree(
    points: &[[f64; 2]],
    indices: &mut [usize],
    depth: usize,
    height_limit: usize,
    rng: &mut ChaCha8Rng,
) -> Node {
    if indices.len() <= 1 || depth >= height_limit {
        return Node::External {
            size: indices.len(),
        };
    }
    // Pick a feature with spread; give both axes a chance before declaring
    // the node unsplittable.
    let first = rng.random_range(0..2usize);
    let mut chosen = None;
    for offset in 0..2 {
        let f = (first + offset) % 2;
        let lo = indices
            .iter()
            .map(|&i| points[i][f])
            .fold(f64::INFINITY, f64::min);
        let hi = indices
            .iter()
            .map(|&i| points[i][f])
            .fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            chosen = Some((f, lo, hi));
            break;
        }
    }
    let Some((feature, lo, hi)) = chosen else {
        return Node::External {
            size: indices.len(),
        };
    };
    let split = rng.random_range(lo..hi);
    let mid = partition(points, indices, feature, split);
    let (left_idx, right_idx) = indices.split_at_mut(mid);
    // A split strictly inside (lo, hi) leaves both sides non-empty.
    let left = build_tree(points, left_idx, depth + 1, height_limit, rng);
    let right = build_tree(points, right_idx, depth + 1, height_limit, rng);
    Node::Internal {
        feature,
        split,
        left: Box::new(left),
        right: Box::new(right),
    }
}

/// Stable partition: indices with value <= split first; returns the split
/// position.
fn partition(points: &[[f64; 2]], indices: &mut [usize], feature: usize, split: f64) -> usize {
    let mut ordered: Vec<usize> = Vec::with_capacity(indices.len());
    ordered.extend(
        indices
            .iter()
            .copied()
            .filter(|&i| points[i][feature] <= split),
    );
    let mid = ordered.len();
    ordered.extend(
        indices
            .iter()
            .copied()
            .filter(|&i| points[i][feature] > split),
    );
    indices.copy_from_slice(&ordered);
    mid
}

fn path_length(node: &Node, point: &[f64; 2], depth: usize) -> f64 {
    match node {
        Node::External { size } => depth as f64 + c_factor(*size),
        Node::Internal {
            feature,
            split,
            left,
            right,
        } => {
            if point[*feature] <= *split {
                path_length(left, point, depth + 1)
            } else {
                path_length(right, point, depth + 1)
            }
        }
    }
}

fn summarize(sample: &WindowSample) -> [f64; 2] {
    let joint = &sample.joint;
    let m = joint.len();
    let pending = joint[m - 1];
    let hist = &joint[..m - 1];
    let w = hist.len().min(10);
    let sma: f64 = hist[hist.len() - w..].iter().sum::<f64>() / w as f64;
    [pending, pending - sma]
}

/// Anomaly scores s(x) = 2^(-E[h(x)] / c(subsample)) for each window of the
/// batch, in input order.
pub fn isolation_forest_scores(
    samples: &[WindowSample],
    config: &IsolationForestConfig,
) -> Result<Vec<f64>, BaselineError> {
    config.validate()?;
    if samples.len() < 2 {
        return Err(BaselineError::BatchTooSmall(samples.len()));
    }
    let points: Vec<[f64; 2]> = samples.iter().map(summarize).collect();
    let subsample = config.max_samples.min(points.len());
    let height_limit = (subsample as f64).log2().ceil() as usize;

    let mut total_path = vec![0.0f64; points.len()];
    for t in 0..config.n_estimators {
        let mut rng = seeds::rng(seeds::derive_indexed(config.seed, "iforest.tree", t as u64));
        // Subsample without replacement.
        let mut indices: Vec<usize> = (0..points.len()).collect();
        for i in 0..subsample {
            let j = rng.random_range(i..indices.len());
            indices.swap(i, j);
        }
        indices.truncate(subsample);
        let tree = build_tree(&points, &mut indices, 0, height_limit, &mut rng);
        for (total, point) in total_path.iter_mut().zip(&points) {
            *total += path_length(&tree, point, 0);
        }
    }

    let denom = c_factor(subsample);
    let scores = total_path
        .into_iter()
        .map(|total| {
            let avg = total / config.n_estimators as f64;
            2f64.powf(-avg / denom)
        })
        .collect();
    Ok(scores)
}

/// Label the batch: the `floor(contamination * batch)` highest-scoring
/// windows are anomalies (ties broken by input order).
pub fn isolation_forest(
    samples: &[WindowSample],
    config: &IsolationForestConfig,
) -> Result<Vec<Label>, BaselineError> {
    let scores = isolation_forest_scores(samples, config)?;
    let flag_count = (config.contamination * samples.len() as f64).floor() as usize;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut labels = vec![Label::Normal; samples.len()];
    for &i in order.iter().take(flag_count) {
        labels[i] = Label::Anomaly;
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::sample_from_raw;

    fn batch_with_outlier() -> Vec<WindowSample> {
        let mut batch = Vec::new();
        for i in 0..99 {
            // Mild periodic windows, pending in line with history.
            let raw: Vec<f64> = (0..13).map(|j| ((i + j) % 4) as f64 * 0.1 + 0.3).collect();
            batch.push(sample_from_raw(&raw));
        }
        let mut raw: Vec<f64> = (0..13).map(|j| (j % 4) as f64 * 0.1 + 0.3).collect();
        raw[12] = 9.0; // pending far above everything
        batch.push(sample_from_raw(&raw));
        batch
    }

    #[test]
    fn outlier_is_flagged() {
        let batch = batch_with_outlier();
        let config = IsolationForestConfig {
            seed: 5,
            ..IsolationForestConfig::default()
        };
        let labels = isolation_forest(&batch, &config).unwrap();
        assert_eq!(labels[99], Label::Anomaly);
        let scores = isolation_forest_scores(&batch, &config).unwrap();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(scores[99], max);
    }

    #[test]
    fn contamination_sets_flag_count() {
        let batch = batch_with_outlier();
        let config = IsolationForestConfig {
            contamination: 0.15,
            seed: 5,
            ..IsolationForestConfig::default()
        };
        let labels = isolation_forest(&batch, &config).unwrap();
        let flagged = labels.iter().filter(|&&l| l == Label::Anomaly).count();
        assert_eq!(flagged, 15);
    }

    #[test]
    fn batch_of_one_is_rejected() {
        let batch = vec![sample_from_raw(&[
            0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0,
        ])];
        assert_eq!(
            isolation_forest(&batch, &IsolationForestConfig::default()).unwrap_err(),
            BaselineError::BatchTooSmall(1)
        );
    }

    #[test]
    fn scores_are_deterministic_per_seed() {
        let batch = batch_with_outlier();
        let config = IsolationForestConfig {
            seed: 9,
            ..IsolationForestConfig::default()
        };
        let a = isolation_forest_scores(&batch, &config).unwrap();
        let b = isolation_forest_scores(&batch, &config).unwrap();
        assert_eq!(a, b);
        let other = IsolationForestConfig { seed: 10, ..config };
        let c = isolation_forest_scores(&batch, &other).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn c_factor_reference_values() {
        assert_eq!(c_factor(1), 0.0);
        assert_eq!(c_factor(2), 1.0);
        // c(256) ~ 10.24 (standard reference value for psi = 256).
        assert!((c_factor(256) - 10.244).abs() < 0.01);
    }
}
