//! Constructions of explicit feature networks.
//!
//! The builder keeps a pending affine map from the last committed layer's
//! outputs to the current working values, so recombinations (e.g. restoring
//! `t` from the carried pair `ReLU(t), ReLU(-t)`) cost no extra layer: they
//! fold into the next layer's affine part.

use super::{
    Activation, CompGraph, Layer, LayerActivation, NetError, INDICATOR_OFFSET, INDICATOR_SLOPE,
};
use crate::features::{ewma_unrolled_weights, FeatureError, FeatureProfile, FeatureSpec};
use ndarray::{Array1, Array2};

/// Basic two-input (or n-input, for average) calculation blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Primitive {
    Add,
    Sub,
    Abs,
    Max2,
    Min2,
    /// Mean of n inputs.
    AverageN(usize),
}

struct AffineBuilder {
    input_dim: usize,
    layers: Vec<Layer>,
    /// Pending affine map: working = a . prev_output + c.
    a: Array2<f64>,
    c: Array1<f64>,
}

impl AffineBuilder {
    fn new(input_dim: usize) -> AffineBuilder {
        AffineBuilder {
            input_dim,
            layers: Vec::new(),
            a: Array2::eye(input_dim),
            c: Array1::zeros(input_dim),
        }
    }

    fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Compose an affine map onto the working values without committing a
    /// layer: working' = rows . working + bias.
    fn map(&mut self, rows: Array2<f64>, bias: Array1<f64>) {
        self.c = rows.dot(&self.c) + &bias;
        self.a = rows.dot(&self.a);
    }

    /// Commit a layer computing `act(rows . working + bias)`; the pending
    /// affine is folded into the layer and reset to the identity.
    fn commit(&mut self, rows: Array2<f64>, bias: Array1<f64>, act: Activation) {
        self.map(rows, bias);
        let out = self.dim();
        let weights = std::mem::replace(&mut self.a, Array2::eye(out));
        let b = std::mem::replace(&mut self.c, Array1::zeros(out));
        self.layers.push(Layer::new(weights, b, act));
    }

    /// Emit the pending affine as a final identity layer and close the graph.
    fn finish(mut self, output_names: Vec<String>) -> Result<CompGraph, NetError> {
        let out = self.dim();
        let weights = std::mem::replace(&mut self.a, Array2::eye(out));
        let bias = std::mem::replace(&mut self.c, Array1::zeros(out));
        self.layers
            .push(Layer::new(weights, bias, Activation::Identity));
        CompGraph::new(self.input_dim, self.layers, output_names)
    }
}

fn row(dim: usize, entries: &[(usize, f64)]) -> Array2<f64> {
    let mut r = Array2::zeros((1, dim));
    for &(j, v) in entries {
        r[(0, j)] += v;
    }
    r
}

/// Fold step: working values `[v_0..v_{m-2}, p, q]` become
/// `[v_0..v_{m-2}, max(p,q)]` (or min). Carries pass through the ReLU layer
/// as sign pairs; p, q enter as the sum/difference pairs of the closed form
/// `max(p,q) = (p + q + |p - q|) / 2`.
fn fold_extreme_step(b: &mut AffineBuilder, minimum: bool) {
    let m = b.dim();
    debug_assert!(m >= 2);
    let carries = m - 2;
    let width = 2 * carries + 4;
    let mut rows = Array2::zeros((width, m));
    for i in 0..carries {
        rows[(2 * i, i)] = 1.0;
        rows[(2 * i + 1, i)] = -1.0;
    }
    let (p, q) = (m - 2, m - 1);
    let base = 2 * carries;
    rows[(base, p)] = 1.0; // ReLU(p + q)
    rows[(base, q)] = 1.0;
    rows[(base + 1, p)] = -1.0; // ReLU(-(p + q))
    rows[(base + 1, q)] = -1.0;
    rows[(base + 2, p)] = 1.0; // ReLU(p - q)
    rows[(base + 2, q)] = -1.0;
    rows[(base + 3, p)] = -1.0; // ReLU(q - p)
    rows[(base + 3, q)] = 1.0;
    b.commit(rows, Array1::zeros(width), Activation::Relu);

    // Recombine: carries from their sign pairs, the extreme from
    // (s+ - s- +/- (d+ + d-)) / 2.
    let mut rec = Array2::zeros((carries + 1, width));
    for i in 0..carries {
        rec[(i, 2 * i)] = 1.0;
        rec[(i, 2 * i + 1)] = -1.0;
    }
    let sign = if minimum { -0.5 } else { 0.5 };
    rec[(carries, base)] = 0.5;
    rec[(carries, base + 1)] = -0.5;
    rec[(carries, base + 2)] = sign;
    rec[(carries, base + 3)] = sign;
    b.map(rec, Array1::zeros(carries + 1));
}

/// Build a graph computing a basic calculation exactly on all real inputs.
pub fn build_primitive(kind: Primitive) -> CompGraph {
    let graph = match kind {
        Primitive::Add => {
            let mut b = AffineBuilder::new(2);
            b.map(row(2, &[(0, 1.0), (1, 1.0)]), Array1::zeros(1));
            b.finish(vec!["add".into()])
        }
        Primitive::Sub => {
            let mut b = AffineBuilder::new(2);
            b.map(row(2, &[(0, 1.0), (1, -1.0)]), Array1::zeros(1));
            b.finish(vec!["sub".into()])
        }
        Primitive::Abs => {
            let mut b = AffineBuilder::new(1);
            let mut rows = Array2::zeros((2, 1));
            rows[(0, 0)] = 1.0;
            rows[(1, 0)] = -1.0;
            b.commit(rows, Array1::zeros(2), Activation::Relu);
            b.map(row(2, &[(0, 1.0), (1, 1.0)]), Array1::zeros(1));
            b.finish(vec!["abs".into()])
        }
        Primitive::Max2 => {
            let mut b = AffineBuilder::new(2);
            fold_extreme_step(&mut b, false);
            b.finish(vec!["max2".into()])
        }
        Primitive::Min2 => {
            let mut b = AffineBuilder::new(2);
            fold_extreme_step(&mut b, true);
            b.finish(vec!["min2".into()])
        }
        Primitive::AverageN(n) => {
            let mut b = AffineBuilder::new(n);
            let entries: Vec<(usize, f64)> = (0..n).map(|j| (j, 1.0 / n as f64)).collect();
            b.map(row(n, &entries), Array1::zeros(1));
            b.finish(vec!["average".into()])
        }
    };
    graph.expect("primitive graphs are well-formed by construction")
}

fn length_check(spec: &FeatureSpec, n: usize) -> Result<(), NetError> {
    spec.validate()?;
    if n < spec.min_len() {
        return Err(NetError::Feature(FeatureError::LengthError {
            feature: spec.name(),
            needed: spec.min_len(),
            got: n,
        }));
    }
    Ok(())
}

/// Indicator subnet: working values `v_0..v_{m-1}` become
/// `f_0(v_i) = sigmoid(-SLOPE * ReLU(-v_i) + OFFSET)`, which approximates
/// the indicator of `v_i >= 0` outside the transition band.
fn indicator_ge_zero(b: &mut AffineBuilder) {
    let m = b.dim();
    let mut neg = Array2::zeros((m, m));
    for i in 0..m {
        neg[(i, i)] = -1.0;
    }
    b.commit(neg, Array1::zeros(m), Activation::Relu);
    let mut scale = Array2::zeros((m, m));
    for i in 0..m {
        scale[(i, i)] = -INDICATOR_SLOPE;
    }
    b.commit(
        scale,
        Array1::from_elem(m, INDICATOR_OFFSET),
        Activation::Sigmoid,
    );
}

/// Summation weights for the count features. An indicator unit emits
/// exactly sigmoid(OFFSET) whenever its coordinate clears the threshold
/// (the ReLU is exactly zero there), so weighting the sum by its inverse
/// makes each cleared coordinate contribute exactly 1 and keeps the total
/// error from growing with n.
fn count_sum_row(n: usize) -> Array2<f64> {
    let unit = 1.0 / Activation::Sigmoid.apply(INDICATOR_OFFSET);
    let entries: Vec<(usize, f64)> = (0..n).map(|j| (j, unit)).collect();
    row(n, &entries)
}

/// Center working values at their mean: `v_i - average(v)`.
fn center_rows(n: usize) -> Array2<f64> {
    let mut rows = Array2::from_elem((n, n), -1.0 / n as f64);
    for i in 0..n {
        rows[(i, i)] += 1.0;
    }
    rows
}

/// Build the network computing `spec` on inputs of length `n`.
pub fn build_feature(spec: &FeatureSpec, n: usize) -> Result<CompGraph, NetError> {
    length_check(spec, n)?;
    let names = |width: usize| -> Vec<String> {
        if width == 1 {
            vec![spec.name()]
        } else {
            (1..=width)
                .map(|i| format!("{}_{i}", spec.name()))
                .collect()
        }
    };
    let mut b = AffineBuilder::new(n);
    match spec {
        FeatureSpec::Max | FeatureSpec::Min => {
            // Nested fold exactly as defined: the innermost pair is
            // (x_{n-1}, x_n), so each step combines the last two working
            // values; depth grows linearly with n.
            let minimum = matches!(spec, FeatureSpec::Min);
            if n == 1 {
                b.map(row(1, &[(0, 1.0)]), Array1::zeros(1));
            }
            for _ in 1..n {
                fold_extreme_step(&mut b, minimum);
            }
        }
        FeatureSpec::Average => {
            let entries: Vec<(usize, f64)> = (0..n).map(|j| (j, 1.0 / n as f64)).collect();
            b.map(row(n, &entries), Array1::zeros(1));
        }
        FeatureSpec::Integration => {
            let entries: Vec<(usize, f64)> = (0..n).map(|j| (j, 1.0)).collect();
            b.map(row(n, &entries), Array1::zeros(1));
        }
        FeatureSpec::Difference => {
            let mut rows = Array2::zeros((n - 1, n));
            for i in 0..n - 1 {
                rows[(i, i)] = -1.0;
                rows[(i, i + 1)] = 1.0;
            }
            b.map(rows, Array1::zeros(n - 1));
        }
        FeatureSpec::AbsSumChanges => {
            let mut rows = Array2::zeros((2 * (n - 1), n));
            for i in 0..n - 1 {
                rows[(2 * i, i + 1)] = 1.0;
                rows[(2 * i, i)] = -1.0;
                rows[(2 * i + 1, i + 1)] = -1.0;
                rows[(2 * i + 1, i)] = 1.0;
            }
            b.commit(rows, Array1::zeros(2 * (n - 1)), Activation::Relu);
            let entries: Vec<(usize, f64)> = (0..2 * (n - 1)).map(|j| (j, 1.0)).collect();
            b.map(row(2 * (n - 1), &entries), Array1::zeros(1));
        }
        FeatureSpec::MeanChange => {
            b.map(
                row(n, &[(n - 1, 1.0 / n as f64), (0, -1.0 / n as f64)]),
                Array1::zeros(1),
            );
        }
        FeatureSpec::MeanSecondDerivativeCentral => {
            let scale = 1.0 / (2.0 * n as f64);
            let mut entries = Vec::new();
            for i in 0..n - 2 {
                entries.push((i + 2, scale));
                entries.push((i + 1, -2.0 * scale));
                entries.push((i, scale));
            }
            b.map(row(n, &entries), Array1::zeros(1));
        }
        FeatureSpec::HistoricalChange { horizon } => {
            b.map(
                row(n, &[(n - 1, 1.0), (n - 1 - horizon, -1.0)]),
                Array1::zeros(1),
            );
        }
        FeatureSpec::SmaFit { window } => {
            let w = *window;
            let mut entries: Vec<(usize, f64)> = (n - w..n).map(|j| (j, 1.0 / w as f64)).collect();
            entries.push((n - 1, -1.0));
            b.map(row(n, &entries), Array1::zeros(1));
        }
        FeatureSpec::WmaFit { window } => {
            let w = *window;
            let denom = w as f64 * (w + 1) as f64;
            let mut entries: Vec<(usize, f64)> = (1..=w)
                .map(|k| (n - w + k - 1, 2.0 * k as f64 / denom))
                .collect();
            entries.push((n - 1, -1.0));
            b.map(row(n, &entries), Array1::zeros(1));
        }
        FeatureSpec::EwmaFit { alpha } => {
            let mut entries: Vec<(usize, f64)> = ewma_unrolled_weights(*alpha, n)
                .into_iter()
                .enumerate()
                .collect();
            entries.push((n - 1, -1.0));
            b.map(row(n, &entries), Array1::zeros(1));
        }
        FeatureSpec::SimpleThresholdGe { threshold } => {
            // f_a(x_n) = sigmoid(-SLOPE * ReLU(-x_n + a) + OFFSET).
            b.map(row(n, &[(n - 1, 1.0)]), Array1::zeros(1));
            indicator_ge_zero_shifted(&mut b, *threshold, false);
        }
        FeatureSpec::SimpleThresholdLt { threshold } => {
            // g_a(x_n) = sigmoid(-SLOPE * ReLU(x_n - a) + OFFSET).
            b.map(row(n, &[(n - 1, 1.0)]), Array1::zeros(1));
            indicator_ge_zero_shifted(&mut b, *threshold, true);
        }
        FeatureSpec::CountAboveMean => {
            b.map(center_rows(n), Array1::zeros(n));
            indicator_ge_zero(&mut b);
            b.map(count_sum_row(n), Array1::zeros(1));
        }
        FeatureSpec::CountBelowMean => {
            // g_0 over centered values: negate, then the >= 0 indicator.
            let mut rows = center_rows(n);
            rows.mapv_inplace(|v| -v);
            b.map(rows, Array1::zeros(n));
            indicator_ge_zero(&mut b);
            b.map(count_sum_row(n), Array1::zeros(1));
        }
    }
    let width = spec.output_width(n);
    b.finish(names(width))
}

/// Threshold indicator on a single working value v: approximates
/// `v >= a`, or `v < a` when `below` (loosely: both variants map the
/// boundary itself to ~1).
fn indicator_ge_zero_shifted(b: &mut AffineBuilder, a: f64, below: bool) {
    let sign = if below { 1.0 } else { -1.0 };
    let bias = if below { -a } else { a };
    let mut rows = Array2::zeros((1, 1));
    rows[(0, 0)] = sign;
    b.commit(rows, Array1::from_elem(1, bias), Activation::Relu);
    let mut scale = Array2::zeros((1, 1));
    scale[(0, 0)] = -INDICATOR_SLOPE;
    b.commit(
        scale,
        Array1::from_elem(1, INDICATOR_OFFSET),
        Activation::Sigmoid,
    );
}

/// Combine the per-feature graphs of `profile` into one network sharing the
/// input layer, with per-feature blocks padded to a common depth by identity
/// layers. Output order matches [`crate::features::compute_all`].
pub fn build_profile_network(profile: &FeatureProfile, n: usize) -> Result<CompGraph, NetError> {
    let blocks: Vec<CompGraph> = profile
        .specs()
        .iter()
        .map(|spec| build_feature(spec, n))
        .collect::<Result<_, _>>()?;
    if blocks.is_empty() {
        return CompGraph::new(n, vec![], vec![]);
    }
    let depth = blocks.iter().map(CompGraph::depth).max().unwrap();

    // Per-block layer at depth d: the block's own layer, or an identity
    // carry of its final output once it has finished.
    let layer_of = |block: &CompGraph, d: usize| -> Layer {
        if d < block.depth() {
            block.layers()[d].clone()
        } else {
            let w = block.output_dim();
            Layer::new(Array2::eye(w), Array1::zeros(w), Activation::Identity)
        }
    };

    let mut layers = Vec::with_capacity(depth);
    for d in 0..depth {
        let parts: Vec<Layer> = blocks.iter().map(|g| layer_of(g, d)).collect();
        let out: usize = parts.iter().map(Layer::out_dim).sum();
        let in_dim: usize = if d == 0 {
            n
        } else {
            parts.iter().map(Layer::in_dim).sum()
        };
        let mut weights = Array2::zeros((out, in_dim));
        let mut bias = Array1::zeros(out);
        let mut units = Vec::with_capacity(out);
        let (mut r0, mut c0) = (0usize, 0usize);
        for part in &parts {
            let (pr, pc) = (part.out_dim(), part.in_dim());
            // The first layer reads the shared input; later layers are
            // block-diagonal.
            let col = if d == 0 { 0 } else { c0 };
            weights
                .slice_mut(ndarray::s![r0..r0 + pr, col..col + pc])
                .assign(&part.weights);
            bias.slice_mut(ndarray::s![r0..r0 + pr]).assign(&part.bias);
            units.extend(part.activation.units(pr));
            r0 += pr;
            c0 += pc;
        }
        let activation = if units.iter().all(|a| *a == units[0]) {
            LayerActivation::Uniform(units[0])
        } else {
            LayerActivation::PerUnit(units)
        };
        layers.push(Layer {
            weights,
            bias,
            activation,
        });
    }

    let output_names = profile.output_names(n);
    CompGraph::new(n, layers, output_names)
}
