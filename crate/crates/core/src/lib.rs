//! KPI time-series anomaly detection toolkit.
//!
//! The pipeline classifies one pending minute of a KPI series at a time:
//! three subsequences around the pending timestamp (same window last week,
//! yesterday, and the trailing window today) are joined, min-max normalized,
//! and fed to a small feedforward network. No hand-built features are
//! required; [`netfab`] constructs explicit networks that compute the
//! classical time-series features directly, and [`features`] provides the
//! ground-truth oracle they are verified against.
//!
//! Modules:
//! - [`model`]: shared domain types (series, labels, window samples).
//! - [`windowing`]: subsequence extraction and min-max normalization.
//! - [`features`]: direct computation of the classical feature set.
//! - [`netfab`]: compiled feedforward networks for each feature, plus
//!   oracle verification.
//! - [`mlp`]: the trainable two-hidden-layer classifier.
//! - [`baselines`]: 3-sigma, EWMA control chart, polynomial regression,
//!   isolation forest.
//! - [`metrics`]: confusion matrices, recall/precision/F1, report rendering.
//! - [`ts2vec`]: hidden-layer embeddings, cosine similarity, k-means.
//! - [`datagen`]: seeded synthetic KPI generator with injected anomalies.
//! - [`io`]: CSV formats for raw series and labeled window datasets.
//! - [`seeds`]: deterministic seed derivation for all randomized stages.

pub mod baselines;
pub mod datagen;
pub mod features;
pub mod io;
pub mod metrics;
pub mod mlp;
pub mod model;
pub mod netfab;
pub mod seeds;
pub mod ts2vec;
pub mod windowing;

pub use model::{ConfusionMatrix, Dataset, Label, TimeSeries, WindowSample};
pub use windowing::WindowSpec;
