//! Explicit feedforward networks that compute classical time-series
//! features.
//!
//! Every graph is a chain of affine layers with pointwise activations. The
//! builders in [`build`] construct exact networks for the arithmetic
//! features (folded max/min, summations, smoother fits) and sigmoid-indicator
//! approximations for the threshold and count features; [`verify`] checks
//! each construction against the direct oracle in [`crate::features`].
//!
//! Exact passthrough of a real value through a ReLU layer uses the identity
//! `t = ReLU(t) - ReLU(-t)`, with the recombination folded into the next
//! layer's affine map. Sigmoid layers admit no such carry, so layers mixing
//! indicator units with carried values use per-unit activations.

pub mod build;
pub mod verify;

mod text;

pub use text::{graph_from_text, graph_to_text};

use crate::features::FeatureError;
use ndarray::{Array1, Array2};
use thiserror::Error;

/// Slope used by the sigmoid indicator approximations
/// `f_a(x) = sigmoid(-SLOPE * ReLU(a - x) + OFFSET)`.
pub const INDICATOR_SLOPE: f64 = 2e4;
/// Logit offset of the indicator approximations.
pub const INDICATOR_OFFSET: f64 = 10.0;
/// Half-width of the indicator transition band: for |x - a| >= this the
/// approximation error is at most sigmoid(-10) < 4.6e-5.
pub const INDICATOR_BAND: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("input has dimension {got}, graph expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("layer {index}: input dim {got} does not chain with previous output {expected}")]
    BadChain {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("layer {index}: non-finite weight or bias entry")]
    NonFinite { index: usize },
    #[error("layer {index}: bias/activation length does not match weight rows")]
    BadLayerShape { index: usize },
    #[error("output names count {got} does not match output dim {expected}")]
    BadOutputNames { expected: usize, got: usize },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("graph text line {line}: {msg}")]
    ParseError { line: usize, msg: String },
}

/// Pointwise activation applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

/// Activation assignment for one layer: a single kind for the whole layer,
/// or one kind per unit (needed when indicator units and carried values
/// share a depth in a combined graph).
#[derive(Debug, Clone, PartialEq)]
pub enum LayerActivation {
    Uniform(Activation),
    PerUnit(Vec<Activation>),
}

impl LayerActivation {
    fn len_matches(&self, out_dim: usize) -> bool {
        match self {
            LayerActivation::Uniform(_) => true,
            LayerActivation::PerUnit(v) => v.len() == out_dim,
        }
    }

    fn apply_in_place(&self, v: &mut Array1<f64>) {
        match self {
            LayerActivation::Uniform(a) => v.mapv_inplace(|x| a.apply(x)),
            LayerActivation::PerUnit(acts) => {
                for (x, a) in v.iter_mut().zip(acts) {
                    *x = a.apply(*x);
                }
            }
        }
    }

    /// Per-unit view, for concatenation when combining graphs.
    fn units(&self, out_dim: usize) -> Vec<Activation> {
        match self {
            LayerActivation::Uniform(a) => vec![*a; out_dim],
            LayerActivation::PerUnit(v) => v.clone(),
        }
    }
}

/// One affine layer: `activation(weights . x + bias)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: LayerActivation,
}

impl Layer {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>, activation: Activation) -> Layer {
        Layer {
            weights,
            bias,
            activation: LayerActivation::Uniform(activation),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }
}

/// A layered feedforward computation graph.
#[derive(Debug, Clone, PartialEq)]
pub struct CompGraph {
    input_dim: usize,
    layers: Vec<Layer>,
    output_names: Vec<String>,
}

impl CompGraph {
    /// Build a graph, checking dimension chaining, finiteness, and output
    /// naming.
    pub fn new(
        input_dim: usize,
        layers: Vec<Layer>,
        output_names: Vec<String>,
    ) -> Result<CompGraph, NetError> {
        let mut dim = input_dim;
        for (index, layer) in layers.iter().enumerate() {
            if layer.in_dim() != dim {
                return Err(NetError::BadChain {
                    index,
                    expected: dim,
                    got: layer.in_dim(),
                });
            }
            if layer.bias.len() != layer.out_dim() || !layer.activation.len_matches(layer.out_dim())
            {
                return Err(NetError::BadLayerShape { index });
            }
            if layer.weights.iter().any(|v| !v.is_finite())
                || layer.bias.iter().any(|v| !v.is_finite())
            {
                return Err(NetError::NonFinite { index });
            }
            dim = layer.out_dim();
        }
        if !output_names.is_empty() && output_names.len() != dim {
            return Err(NetError::BadOutputNames {
                expected: dim,
                got: output_names.len(),
            });
        }
        Ok(CompGraph {
            input_dim,
            layers,
            output_names,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, Layer::out_dim)
    }

    pub fn output_names(&self) -> &[String] {
        &self.output_names
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Total weight and bias entries, for inspection.
    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }
}

/// Forward-evaluate `graph` on `x`. An empty-layer graph returns its input
/// unchanged.
pub fn eval(graph: &CompGraph, x: &[f64]) -> Result<Vec<f64>, NetError> {
    if x.len() != graph.input_dim() {
        return Err(NetError::DimensionMismatch {
            expected: graph.input_dim(),
            got: x.len(),
        });
    }
    let mut v = Array1::from(x.to_vec());
    for layer in &graph.layers {
        let mut next = layer.weights.dot(&v);
        next += &layer.bias;
        layer.activation.apply_in_place(&mut next);
        v = next;
    }
    Ok(v.to_vec())
}
