//! The trainable classifier: input 5k+3, two leaky-ReLU hidden layers,
//! two-way softmax output, cross-entropy loss, optional inverted dropout on
//! the hidden layers.
//!
//! Output index 0 is the anomaly probability and index 1 the normal
//! probability, matching the label codes. Training is plain mini-batch
//! gradient descent with momentum; everything random (initialization,
//! shuffling, dropout masks) derives from the config seed, so a seed fixes
//! the trained weights bit for bit.

use crate::model::{Dataset, Label, WindowSample};
use crate::seeds;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Probabilities below this are clamped before the log in the loss.
const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MlpError {
    #[error("invalid configuration: {0}")]
    ConfigError(String),
    #[error("sample has dimension {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("samples and labels differ in length")]
    LengthMismatch,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("pool has no {0:?} samples")]
    EmptyClass(Label),
    #[error("training-mode forward with dropout needs an rng")]
    RngRequired,
    #[error("model text line {line}: {msg}")]
    ParseError { line: usize, msg: String },
}

/// Gradient-descent flavor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    /// Classical momentum: v <- m*v - lr*g, w <- w + v.
    Momentum(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dims: [usize; 2],
    /// Negative-side slope of the leaky ReLU.
    pub leaky_slope: f64,
    /// Keep probability for inverted dropout on hidden activations;
    /// 1.0 disables dropout.
    pub dropout_keep: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: Optimizer,
    /// Global L2 gradient-norm cap applied before each update step; 0
    /// disables clipping. Momentum amplifies occasional late-epoch gradient
    /// spikes enough to throw a converged model off a cliff without this.
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> MlpConfig {
        MlpConfig {
            input_dim: 903,
            hidden_dims: [50, 50],
            leaky_slope: 0.2,
            dropout_keep: 1.0,
            learning_rate: 0.01,
            batch_size: 256,
            epochs: 50,
            optimizer: Optimizer::Momentum(0.9),
            grad_clip: 1.0,
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<(), MlpError> {
        let fail = |msg: &str| Err(MlpError::ConfigError(msg.into()));
        if self.input_dim == 0 || self.hidden_dims.contains(&0) {
            return fail("layer dimensions must be positive");
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return fail("dropout_keep must lie in (0, 1]");
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return fail("leaky_slope must lie in (0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1");
        }
        if let Optimizer::Momentum(m) = self.optimizer {
            if !(0.0..1.0).contains(&m) {
                return fail("momentum must lie in [0, 1)");
            }
        }
        if !(self.grad_clip >= 0.0 && self.grad_clip.is_finite()) {
            return fail("grad_clip must be >= 0 (0 disables clipping)");
        }
        Ok(())
    }
}

/// Trained (or initialized) model parameters. Weight matrices are
/// (out_dim x in_dim).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub config: MlpConfig,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array2<f64>,
    pub b3: Array1<f64>,
    pub epochs_run: usize,
    pub final_loss: f64,
}

/// One row of the per-epoch training trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

fn leaky_relu(z: f64, slope: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        slope * z
    }
}

fn leaky_relu_grad(z: f64, slope: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        slope
    }
}

/// Row-wise stable softmax over two logits.
fn softmax2(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let m = row[0].max(row[1]);
        let e0 = (row[0] - m).exp();
        let e1 = (row[1] - m).exp();
        let s = e0 + e1;
        row[0] = e0 / s;
        row[1] = e1 / s;
    }
}

struct ForwardCache {
    z1: Array2<f64>,
    h1: Array2<f64>,
    z2: Array2<f64>,
    h2: Array2<f64>,
    probs: Array2<f64>,
}

struct Gradients {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
    w3: Array2<f64>,
    b3: Array1<f64>,
}

impl MlpModel {
    /// Seeded initialization: weights uniform in
    /// +-sqrt(6 / (fan_in + fan_out)) per layer, biases zero.
    pub fn init(config: &MlpConfig) -> Result<MlpModel, MlpError> {
        config.validate()?;
        let mut rng = seeds::rng(seeds::derive(config.seed, "mlp.init"));
        let mut glorot = |out: usize, inp: usize| -> Array2<f64> {
            let bound = (6.0 / (inp + out) as f64).sqrt();
            Array2::from_shape_fn((out, inp), |_| rng.random_range(-bound..bound))
        };
        let [h1, h2] = config.hidden_dims;
        Ok(MlpModel {
            w1: glorot(h1, config.input_dim),
            b1: Array1::zeros(h1),
            w2: glorot(h2, h1),
            b2: Array1::zeros(h2),
            w3: glorot(2, h2),
            b3: Array1::zeros(2),
            config: config.clone(),
            epochs_run: 0,
            final_loss: f64::NAN,
        })
    }

    fn check_dim(&self, got: usize) -> Result<(), MlpError> {
        if got != self.config.input_dim {
            return Err(MlpError::DimensionMismatch {
                expected: self.config.input_dim,
                got,
            });
        }
        Ok(())
    }

    /// Inverted-dropout mask: entries are 0 with probability 1-keep,
    /// otherwise 1/keep. Row-major fill from the given rng.
    fn dropout_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, keep: f64) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        })
    }

    fn forward_batch(
        &self,
        x: ArrayView2<f64>,
        masks: Option<(&Array2<f64>, &Array2<f64>)>,
    ) -> ForwardCache {
        let slope = self.config.leaky_slope;
        let z1 = x.dot(&self.w1.t()) + &self.b1;
        let mut h1 = z1.mapv(|z| leaky_relu(z, slope));
        if let Some((m1, _)) = masks {
            h1 *= m1;
        }
        let z2 = h1.dot(&self.w2.t()) + &self.b2;
        let mut h2 = z2.mapv(|z| leaky_relu(z, slope));
        if let Some((_, m2)) = masks {
            h2 *= m2;
        }
        let mut probs = h2.dot(&self.w3.t()) + &self.b3;
        softmax2(&mut probs);
        ForwardCache {
            z1,
            h1,
            z2,
            h2,
            probs,
        }
    }

    /// Single-sample forward pass returning (p_anomaly, p_normal).
    ///
    /// In training mode with dropout enabled an rng must be supplied; in
    /// inference mode no dropout is applied and the result is a pure
    /// function of the input.
    pub fn forward(
        &self,
        sample: &[f64],
        train_mode: bool,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, f64), MlpError> {
        self.check_dim(sample.len())?;
        let x = ArrayView2::from_shape((1, sample.len()), sample).expect("contiguous sample");
        let keep = self.config.dropout_keep;
        let cache = if train_mode && keep < 1.0 {
            let rng = rng.ok_or(MlpError::RngRequired)?;
            let m1 = Self::dropout_mask(rng, 1, self.config.hidden_dims[0], keep);
            let m2 = Self::dropout_mask(rng, 1, self.config.hidden_dims[1], keep);
            self.forward_batch(x, Some((&m1, &m2)))
        } else {
            self.forward_batch(x, None)
        };
        Ok((cache.probs[(0, 0)], cache.probs[(0, 1)]))
    }

    /// Post-activation hidden-layer outputs in inference mode.
    pub fn hidden_activations(&self, sample: &[f64]) -> Result<(Vec<f64>, Vec<f64>), MlpError> {
        self.check_dim(sample.len())?;
        let x = ArrayView2::from_shape((1, sample.len()), sample).expect("contiguous sample");
        let cache = self.forward_batch(x, None);
        Ok((cache.h1.row(0).to_vec(), cache.h2.row(0).to_vec()))
    }

    /// Mean cross-entropy of the batch in inference mode (no dropout).
    /// Probabilities are clamped below at 1e-12 so the loss stays finite.
    pub fn loss(&self, samples: &[Vec<f64>], labels: &[Label]) -> Result<f64, MlpError> {
        if samples.is_empty() {
            return Err(MlpError::EmptyBatch);
        }
        if samples.len() != labels.len() {
            return Err(MlpError::LengthMismatch);
        }
        let x = self.batch_matrix(samples)?;
        let cache = self.forward_batch(x.view(), None);
        Ok(Self::mean_cross_entropy(&cache.probs, labels))
    }

    fn mean_cross_entropy(probs: &Array2<f64>, labels: &[Label]) -> f64 {
        let mut total = 0.0;
        for (row, label) in probs.rows().into_iter().zip(labels) {
            let p = row[label.code() as usize].max(PROB_FLOOR);
            total -= p.ln();
        }
        total / labels.len() as f64
    }

    fn batch_matrix(&self, samples: &[Vec<f64>]) -> Result<Array2<f64>, MlpError> {
        let dim = self.config.input_dim;
        let mut x = Array2::zeros((samples.len(), dim));
        for (i, s) in samples.iter().enumerate() {
            self.check_dim(s.len())?;
            x.row_mut(i).assign(&ArrayView1::from(s.as_slice()));
        }
        Ok(x)
    }

    /// Backpropagation through the exact forward definition. Masks, when
    /// given, must be the ones used in the forward pass being differentiated.
    fn gradients(
        &self,
        x: ArrayView2<f64>,
        labels: &[Label],
        masks: Option<(&Array2<f64>, &Array2<f64>)>,
    ) -> (Gradients, f64) {
        let slope = self.config.leaky_slope;
        let batch = labels.len() as f64;
        let cache = self.forward_batch(x, masks);
        let loss = Self::mean_cross_entropy(&cache.probs, labels);

        // d(loss)/d(logits) = (p - onehot) / batch
        let mut dz3 = cache.probs.clone();
        for (mut row, label) in dz3.rows_mut().into_iter().zip(labels) {
            row[label.code() as usize] -= 1.0;
        }
        dz3 /= batch;

        let gw3 = dz3.t().dot(&cache.h2);
        let gb3 = dz3.sum_axis(Axis(0));

        let mut dh2 = dz3.dot(&self.w3);
        if let Some((_, m2)) = masks {
            dh2 *= m2;
        }
        let dz2 = &dh2 * &cache.z2.mapv(|z| leaky_relu_grad(z, slope));
        let gw2 = dz2.t().dot(&cache.h1);
        let gb2 = dz2.sum_axis(Axis(0));

        let mut dh1 = dz2.dot(&self.w2);
        if let Some((m1, _)) = masks {
            dh1 *= m1;
        }
        let dz1 = &dh1 * &cache.z1.mapv(|z| leaky_relu_grad(z, slope));
        let gw1 = dz1.t().dot(&x);
        let gb1 = dz1.sum_axis(Axis(0));

        (
            Gradients {
                w1: gw1,
                b1: gb1,
                w2: gw2,
                b2: gb2,
                w3: gw3,
                b3: gb3,
            },
            loss,
        )
    }

    /// Analytic gradient of the inference-mode batch loss with respect to
    /// every parameter, flattened in (w1, b1, w2, b2, w3, b3) order. The
    /// finite-difference check in the test suite compares against this.
    pub fn loss_gradient_flat(
        &self,
        samples: &[Vec<f64>],
        labels: &[Label],
    ) -> Result<Vec<f64>, MlpError> {
        if samples.is_empty() {
            return Err(MlpError::EmptyBatch);
        }
        if samples.len() != labels.len() {
            return Err(MlpError::LengthMismatch);
        }
        let x = self.batch_matrix(samples)?;
        let (g, _) = self.gradients(x.view(), labels, None);
        let mut flat = Vec::new();
        for w in [&g.w1, &g.w2, &g.w3] {
            flat.extend(w.iter());
        }
        for b in [&g.b1, &g.b2, &g.b3] {
            flat.extend(b.iter());
        }
        Ok(flat)
    }

    /// Mutable views of all parameters in the same flattened order as
    /// [`MlpModel::loss_gradient_flat`].
    pub fn params_mut(&mut self) -> Vec<&mut f64> {
        let mut refs: Vec<&mut f64> = Vec::new();
        refs.extend(self.w1.iter_mut());
        refs.extend(self.w2.iter_mut());
        refs.extend(self.w3.iter_mut());
        refs.extend(self.b1.iter_mut());
        refs.extend(self.b2.iter_mut());
        refs.extend(self.b3.iter_mut());
        refs
    }

    /// Classify one window: anomaly iff p_anomaly > 0.5 (ties go to
    /// normal); degenerate windows are normal by definition with
    /// p_anomaly = 0.
    pub fn predict(&self, sample: &WindowSample) -> Result<(Label, f64), MlpError> {
        if sample.degenerate {
            return Ok((Label::Normal, 0.0));
        }
        let (p_anomaly, _) = self.forward(&sample.joint, false, None)?;
        let label = if p_anomaly > 0.5 {
            Label::Anomaly
        } else {
            Label::Normal
        };
        Ok((label, p_anomaly))
    }
}

/// Rescale all gradients so their global L2 norm is at most `clip`.
fn clip_gradients(grads: &mut Gradients, clip: f64) {
    if clip <= 0.0 {
        return;
    }
    let mut sq = 0.0;
    for w in [&grads.w1, &grads.w2, &grads.w3] {
        sq += w.iter().map(|v| v * v).sum::<f64>();
    }
    for b in [&grads.b1, &grads.b2, &grads.b3] {
        sq += b.iter().map(|v| v * v).sum::<f64>();
    }
    let norm = sq.sqrt();
    if norm > clip {
        let scale = clip / norm;
        grads.w1 *= scale;
        grads.b1 *= scale;
        grads.w2 *= scale;
        grads.b2 *= scale;
        grads.w3 *= scale;
        grads.b3 *= scale;
    }
}

/// Mean loss and accuracy of `model` on raw arrays, inference mode.
fn evaluate_raw(model: &MlpModel, x: ArrayView2<f64>, labels: &[Label]) -> (f64, f64) {
    let cache = model.forward_batch(x, None);
    let loss = MlpModel::mean_cross_entropy(&cache.probs, labels);
    let correct = cache
        .probs
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, label)| {
            let predicted = if row[0] > 0.5 {
                Label::Anomaly
            } else {
                Label::Normal
            };
            predicted == **label
        })
        .count();
    (loss, correct as f64 / labels.len() as f64)
}

/// Train on raw arrays (any input dimension). `train` wraps this for
/// window datasets; small-scale tests and gradient checks call it directly.
pub fn train_raw(
    x: &Array2<f64>,
    labels: &[Label],
    validation: Option<(&Array2<f64>, &[Label])>,
    config: &MlpConfig,
) -> Result<(MlpModel, Vec<TraceRow>), MlpError> {
    config.validate()?;
    if x.nrows() == 0 {
        return Err(MlpError::EmptyDataset);
    }
    if x.nrows() != labels.len() {
        return Err(MlpError::LengthMismatch);
    }
    if x.ncols() != config.input_dim {
        return Err(MlpError::DimensionMismatch {
            expected: config.input_dim,
            got: x.ncols(),
        });
    }

    let mut model = MlpModel::init(config)?;
    let mut shuffle_rng = seeds::rng(seeds::derive(config.seed, "mlp.shuffle"));
    let mut dropout_rng = seeds::rng(seeds::derive(config.seed, "mlp.dropout"));
    let n = x.nrows();
    let keep = config.dropout_keep;

    let mut velocity: Option<Gradients> = None;
    let mut trace = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..config.epochs {
        // Fisher-Yates from the shuffle rng.
        for i in (1..n).rev() {
            let j = shuffle_rng.random_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(config.batch_size) {
            let mut bx = Array2::zeros((chunk.len(), config.input_dim));
            let mut by = Vec::with_capacity(chunk.len());
            for (row, &idx) in chunk.iter().enumerate() {
                bx.row_mut(row).assign(&x.row(idx));
                by.push(labels[idx]);
            }
            let masks = if keep < 1.0 {
                let m1 = MlpModel::dropout_mask(
                    &mut dropout_rng,
                    chunk.len(),
                    config.hidden_dims[0],
                    keep,
                );
                let m2 = MlpModel::dropout_mask(
                    &mut dropout_rng,
                    chunk.len(),
                    config.hidden_dims[1],
                    keep,
                );
                Some((m1, m2))
            } else {
                None
            };
            let (mut grads, _) =
                model.gradients(bx.view(), &by, masks.as_ref().map(|(m1, m2)| (m1, m2)));
            clip_gradients(&mut grads, config.grad_clip);

            let lr = config.learning_rate;
            match config.optimizer {
                Optimizer::Sgd => {
                    model.w1.scaled_add(-lr, &grads.w1);
                    model.b1.scaled_add(-lr, &grads.b1);
                    model.w2.scaled_add(-lr, &grads.w2);
                    model.b2.scaled_add(-lr, &grads.b2);
                    model.w3.scaled_add(-lr, &grads.w3);
                    model.b3.scaled_add(-lr, &grads.b3);
                }
                Optimizer::Momentum(m) => {
                    let v = velocity.get_or_insert_with(|| Gradients {
                        w1: Array2::zeros(grads.w1.dim()),
                        b1: Array1::zeros(grads.b1.dim()),
                        w2: Array2::zeros(grads.w2.dim()),
                        b2: Array1::zeros(grads.b2.dim()),
                        w3: Array2::zeros(grads.w3.dim()),
                        b3: Array1::zeros(grads.b3.dim()),
                    });
                    macro_rules! step {
                        ($v:ident, $w:ident) => {
                            v.$v.mapv_inplace(|u| u * m);
                            v.$v.scaled_add(-lr, &grads.$v);
                            model.$w += &v.$v;
                        };
                    }
                    step!(w1, w1);
                    step!(b1, b1);
                    step!(w2, w2);
                    step!(b2, b2);
                    step!(w3, w3);
                    step!(b3, b3);
                }
            }
        }

        let (loss, accuracy) = evaluate_raw(&model, x.view(), labels);
        let (val_loss, val_accuracy) = match validation {
            Some((vx, vy)) => {
                let (l, a) = evaluate_raw(&model, vx.view(), vy);
                (Some(l), Some(a))
            }
            None => (None, None),
        };
        trace.push(TraceRow {
            epoch,
            loss,
            accuracy,
            val_loss,
            val_accuracy,
        });
        model.final_loss = loss;
        model.epochs_run = epoch + 1;
    }
    Ok((model, trace))
}

fn dataset_arrays(dataset: &Dataset) -> (Array2<f64>, Vec<Label>) {
    let dim = dataset.input_dim();
    let mut x = Array2::zeros((dataset.len(), dim));
    let mut labels = Vec::with_capacity(dataset.len());
    for (i, s) in dataset.samples().iter().enumerate() {
        x.row_mut(i).assign(&ArrayView1::from(s.joint.as_slice()));
        labels.push(s.label.expect("dataset samples are labeled"));
    }
    (x, labels)
}

/// Train on a labeled window dataset.
pub fn train(dataset: &Dataset, config: &MlpConfig) -> Result<(MlpModel, Vec<TraceRow>), MlpError> {
    train_with_validation(dataset, None, config)
}

/// Train with an optional held-out dataset evaluated once per epoch.
pub fn train_with_validation(
    dataset: &Dataset,
    validation: Option<&Dataset>,
    config: &MlpConfig,
) -> Result<(MlpModel, Vec<TraceRow>), MlpError> {
    if dataset.is_empty() {
        return Err(MlpError::EmptyDataset);
    }
    let (x, labels) = dataset_arrays(dataset);
    let val = validation.map(dataset_arrays);
    train_raw(
        &x,
        &labels,
        val.as_ref().map(|(vx, vy)| (vx, vy.as_slice())),
        config,
    )
}

/// Result summary of under-sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct UndersampleSummary {
    pub anomalies: usize,
    pub normals_kept: usize,
    pub normals_available: usize,
    /// Achieved anomaly:normal ratio.
    pub achieved_ratio: f64,
}

/// Keep every anomaly sample and under-sample normals (uniformly, without
/// replacement) toward `ratio_anomaly_to_normal`; when too few normals
/// exist they are all kept and the achieved ratio is reported. Input order
/// is preserved; selection is deterministic per seed.
pub fn undersample(
    pool: &[WindowSample],
    ratio_anomaly_to_normal: f64,
    seed: u64,
) -> Result<(Vec<WindowSample>, UndersampleSummary), MlpError> {
    let anomalies = pool
        .iter()
        .filter(|s| s.label == Some(Label::Anomaly))
        .count();
    let normal_indices: Vec<usize> = pool
        .iter()
        .enumerate()
        .filter(|(_, s)| s.label == Some(Label::Normal))
        .map(|(i, _)| i)
        .collect();
    if anomalies == 0 {
        return Err(MlpError::EmptyClass(Label::Anomaly));
    }
    if normal_indices.is_empty() {
        return Err(MlpError::EmptyClass(Label::Normal));
    }
    if !(ratio_anomaly_to_normal > 0.0) {
        return Err(MlpError::ConfigError("ratio must be positive".into()));
    }

    let target = ((anomalies as f64 / ratio_anomaly_to_normal).round() as usize).max(1);
    let kept: Vec<usize> = if target >= normal_indices.len() {
        normal_indices.clone()
    } else {
        let mut rng = seeds::rng(seeds::derive(seed, "undersample"));
        let mut shuffled = normal_indices.clone();
        for i in (1..shuffled.len()).rev() {
            let j = rng.random_range(0..=i);
            shuffled.swap(i, j);
        }
        let mut chosen = shuffled[..target].to_vec();
        chosen.sort_unstable();
        chosen
    };

    let keep_set: std::collections::HashSet<usize> = kept.iter().copied().collect();
    let selected: Vec<WindowSample> = pool
        .iter()
        .enumerate()
        .filter(|(i, s)| s.label == Some(Label::Anomaly) || keep_set.contains(i))
        .map(|(_, s)| s.clone())
        .collect();
    let normals_kept = kept.len();
    Ok((
        selected,
        UndersampleSummary {
            anomalies,
            normals_kept,
            normals_available: normal_indices.len(),
            achieved_ratio: anomalies as f64 / normals_kept as f64,
        },
    ))
}

// --- text serialization -----------------------------------------------

/// Render a model into the layer-block text format (config header followed
/// by the three layers; the hidden layers are tagged `leaky_relu`, the
/// output layer `softmax`).
pub fn model_to_text(model: &MlpModel) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    out.push_str("mlpmodel v1\n");
    let c = &model.config;
    let _ = writeln!(out, "input_dim {}", c.input_dim);
    let _ = writeln!(out, "hidden {} {}", c.hidden_dims[0], c.hidden_dims[1]);
    let _ = writeln!(out, "leaky_slope {}", c.leaky_slope);
    let _ = writeln!(out, "dropout_keep {}", c.dropout_keep);
    let _ = writeln!(out, "learning_rate {}", c.learning_rate);
    let momentum = match c.optimizer {
        Optimizer::Sgd => 0.0,
        Optimizer::Momentum(m) => m,
    };
    let _ = writeln!(out, "momentum {}", momentum);
    let _ = writeln!(out, "grad_clip {}", c.grad_clip);
    let _ = writeln!(out, "batch_size {}", c.batch_size);
    let _ = writeln!(out, "epochs {}", c.epochs);
    let _ = writeln!(out, "seed {}", c.seed);
    let _ = writeln!(out, "epochs_run {}", model.epochs_run);
    let _ = writeln!(out, "final_loss {}", model.final_loss);
    let mut layer = |idx: usize, name: &str, w: &Array2<f64>, b: &Array1<f64>| {
        let _ = writeln!(out, "layer {idx} {name} {} {}", w.nrows(), w.ncols());
        out.push_str("weights\n");
        for row in w.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out.push_str("bias\n");
        let cells: Vec<String> = b.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    };
    layer(0, "leaky_relu", &model.w1, &model.b1);
    layer(1, "leaky_relu", &model.w2, &model.b2);
    layer(2, "softmax", &model.w3, &model.b3);
    out
}

struct ModelLines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> ModelLines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str), MlpError> {
        for (i, raw) in self.iter.by_ref() {
            let line = raw.trim();
            if !line.is_empty() {
                return Ok((i + 1, line));
            }
        }
        Err(MlpError::ParseError {
            line: 0,
            msg: "unexpected end of input".into(),
        })
    }

    fn expect(&mut self, keyword: &str) -> Result<(usize, Vec<String>), MlpError> {
        let (ln, line) = self.next()?;
        let mut parts = line.split_whitespace();
        let head = parts.next().unwrap_or("");
        if head != keyword {
            return Err(MlpError::ParseError {
                line: ln,
                msg: format!("expected '{keyword}', found '{head}'"),
            });
        }
        Ok((ln, parts.map(str::to_string).collect()))
    }

    fn field(&mut self, keyword: &str) -> Result<f64, MlpError> {
        let (ln, v) = self.expect(keyword)?;
        v.first()
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or(MlpError::ParseError {
                line: ln,
                msg: format!("bad value for '{keyword}'"),
            })
    }

    fn read_layer(
        &mut self,
        idx: usize,
        name: &str,
    ) -> Result<(Array2<f64>, Array1<f64>), MlpError> {
        let (ln, v) = self.expect("layer")?;
        if v.len() != 4 || v[0] != idx.to_string() || v[1] != name {
            return Err(MlpError::ParseError {
                line: ln,
                msg: format!("expected 'layer {idx} {name} <out> <in>'"),
            });
        }
        let parse_dim = |tok: &str| -> Result<usize, MlpError> {
            tok.parse().map_err(|_| MlpError::ParseError {
                line: ln,
                msg: format!("bad dimension '{tok}'"),
            })
        };
        let out_dim = parse_dim(&v[2])?;
        let in_dim = parse_dim(&v[3])?;
        self.expect("weights")?;
        let mut w = Array2::zeros((out_dim, in_dim));
        for r in 0..out_dim {
            let (ln, line) = self.next()?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| MlpError::ParseError {
                    line: ln,
                    msg: "bad weight value".into(),
                })?;
            if row.len() != in_dim {
                return Err(MlpError::ParseError {
                    line: ln,
                    msg: format!("row has {} values, expected {in_dim}", row.len()),
                });
            }
            for (c, val) in row.into_iter().enumerate() {
                w[(r, c)] = val;
            }
        }
        self.expect("bias")?;
        let (ln, line) = self.next()?;
        let b: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| MlpError::ParseError {
                line: ln,
                msg: "bad bias value".into(),
            })?;
        if b.len() != out_dim {
            return Err(MlpError::ParseError {
                line: ln,
                msg: format!("bias has {} values, expected {out_dim}", b.len()),
            });
        }
        Ok((w, Array1::from(b)))
    }
}

/// Parse the text format produced by [`model_to_text`].
pub fn model_from_text(text: &str) -> Result<MlpModel, MlpError> {
    let mut lines = ModelLines {
        iter: text.lines().enumerate(),
    };
    let (ln, header) = lines.next()?;
    if header != "mlpmodel v1" {
        return Err(MlpError::ParseError {
            line: ln,
            msg: format!("bad header '{header}'"),
        });
    }

    let input_dim = lines.field("input_dim")? as usize;
    let (ln, v) = lines.expect("hidden")?;
    let parse_dim = |tok: Option<&String>| -> Result<usize, MlpError> {
        tok.and_then(|t| t.parse().ok())
            .ok_or(MlpError::ParseError {
                line: ln,
                msg: "bad hidden dimensions".into(),
            })
    };
    let hidden_dims = [parse_dim(v.first())?, parse_dim(v.get(1))?];
    let leaky_slope = lines.field("leaky_slope")?;
    let dropout_keep = lines.field("dropout_keep")?;
    let learning_rate = lines.field("learning_rate")?;
    let momentum = lines.field("momentum")?;
    let grad_clip = lines.field("grad_clip")?;
    let batch_size = lines.field("batch_size")? as usize;
    let epochs = lines.field("epochs")? as usize;
    let seed = lines.field("seed")? as u64;
    let epochs_run = lines.field("epochs_run")? as usize;
    let final_loss = lines.field("final_loss")?;

    let (w1, b1) = lines.read_layer(0, "leaky_relu")?;
    let (w2, b2) = lines.read_layer(1, "leaky_relu")?;
    let (w3, b3) = lines.read_layer(2, "softmax")?;

    let config = MlpConfig {
        input_dim,
        hidden_dims,
        leaky_slope,
        dropout_keep,
        learning_rate,
        batch_size,
        epochs,
        optimizer: if momentum == 0.0 {
            Optimizer::Sgd
        } else {
            Optimizer::Momentum(momentum)
        },
        grad_clip,
        seed,
    };
    config.validate()?;
    Ok(MlpModel {
        config,
        w1,
        b1,
        w2,
        b2,
        w3,
        b3,
        epochs_run,
        final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(input_dim: usize, h: [usize; 2], seed: u64) -> MlpConfig {
        MlpConfig {
            input_dim,
            hidden_dims: h,
            seed,
            ..MlpConfig::default()
        }
    }

    fn zero_model(input_dim: usize) -> MlpModel {
        let mut m = MlpModel::init(&tiny_config(input_dim, [3, 3], 0)).unwrap();
        m.w1.fill(0.0);
        m.w2.fill(0.0);
        m.w3.fill(0.0);
        m
    }

    #[test]
    fn zero_model_outputs_half_half() {
        let m = zero_model(4);
        let (p0, p1) = m.forward(&[0.3, -1.0, 2.0, 0.0], false, None).unwrap();
        assert_eq!((p0, p1), (0.5, 0.5));
    }

    #[test]
    fn leaky_relu_negative_side() {
        assert_eq!(leaky_relu(-2.0, 0.2), -0.4);
        assert_eq!(leaky_relu(3.0, 0.2), 3.0);
    }

    #[test]
    fn softmax_of_known_logits() {
        // Logits (ln 3, 0) -> (0.75, 0.25).
        let mut m = zero_model(2);
        m.b3[0] = 3f64.ln();
        let (p0, p1) = m.forward(&[0.0, 0.0], false, None).unwrap();
        assert!((p0 - 0.75).abs() < 1e-12);
        assert!((p1 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let m = MlpModel::init(&tiny_config(6, [5, 4], 9)).unwrap();
        let mut rng = seeds::rng(1);
        for _ in 0..50 {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (p0, p1) = m.forward(&x, false, None).unwrap();
            assert!((p0 + p1 - 1.0).abs() < 1e-12);
            assert!(p0 > 0.0 && p1 > 0.0);
        }
    }

    #[test]
    fn loss_examples() {
        let m = zero_model(2);
        // (0.5, 0.5) prediction, true normal -> ln 2.
        let l = m.loss(&[vec![0.1, 0.2]], &[Label::Normal]).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-12);
        // Near-perfect prediction -> loss ~ 0.
        let mut confident = zero_model(2);
        confident.b3[0] = 40.0; // p_anomaly ~ 1
        let l = confident
            .loss(&[vec![0.0, 0.0]], &[Label::Anomaly])
            .unwrap();
        assert!(l < 1e-12);
        // Batch mean.
        let l1 = m.loss(&[vec![0.0, 0.0]], &[Label::Normal]).unwrap();
        let l2 = confident.loss(&[vec![0.0, 0.0]], &[Label::Normal]).unwrap();
        let _ = (l1, l2);
    }

    #[test]
    fn loss_is_batch_mean_and_permutation_invariant() {
        let m = MlpModel::init(&tiny_config(3, [4, 4], 3)).unwrap();
        let a = vec![0.1, -0.4, 0.9];
        let b = vec![1.2, 0.3, -0.8];
        let la = m.loss(std::slice::from_ref(&a), &[Label::Normal]).unwrap();
        let lb = m.loss(std::slice::from_ref(&b), &[Label::Anomaly]).unwrap();
        let lab = m
            .loss(&[a.clone(), b.clone()], &[Label::Normal, Label::Anomaly])
            .unwrap();
        assert!((lab - (la + lb) / 2.0).abs() < 1e-12);
        let lba = m.loss(&[b, a], &[Label::Anomaly, Label::Normal]).unwrap();
        assert!((lab - lba).abs() < 1e-12);
    }

    #[test]
    fn inference_is_dropout_free_and_deterministic() {
        let mut config = tiny_config(4, [6, 6], 5);
        config.dropout_keep = 0.5;
        let m = MlpModel::init(&config).unwrap();
        let x = vec![0.2, -0.7, 1.0, 0.0];
        let p1 = m.forward(&x, false, None).unwrap();
        let p2 = m.forward(&x, false, None).unwrap();
        assert_eq!(p1, p2);
        // Training mode without an rng is an error when dropout is on.
        assert_eq!(
            m.forward(&x, true, None).unwrap_err(),
            MlpError::RngRequired
        );
    }

    #[test]
    fn dropout_scales_surviving_units() {
        let mut rng = seeds::rng(3);
        let mask = MlpModel::dropout_mask(&mut rng, 200, 10, 0.8);
        for &v in mask.iter() {
            assert!(v == 0.0 || (v - 1.25).abs() < 1e-15);
        }
        let kept = mask.iter().filter(|&&v| v > 0.0).count();
        // ~80% of 2000.
        assert!((1400..=1800).contains(&kept));
    }

    #[test]
    fn gradient_matches_finite_differences_small_net() {
        let config = tiny_config(4, [3, 3], 11);
        let mut model = MlpModel::init(&config).unwrap();
        let mut rng = seeds::rng(21);
        let samples: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let labels = vec![Label::Normal, Label::Anomaly, Label::Normal];
        let analytic = model.loss_gradient_flat(&samples, &labels).unwrap();
        let h = 1e-5;
        let n_params = analytic.len();
        for p in 0..n_params {
            let orig = *model.params_mut()[p];
            *model.params_mut()[p] = orig + h;
            let lp = model.loss(&samples, &labels).unwrap();
            *model.params_mut()[p] = orig - h;
            let lm = model.loss(&samples, &labels).unwrap();
            *model.params_mut()[p] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            let denom = numeric.abs().max(analytic[p].abs()).max(1e-8);
            assert!(
                (numeric - analytic[p]).abs() / denom < 1e-4,
                "param {p}: analytic {} vs numeric {numeric}",
                analytic[p]
            );
        }
    }

    #[test]
    fn training_separates_toy_data() {
        // Two linearly separable samples.
        let x = ndarray::arr2(&[[1.0, 0.0], [0.0, 1.0]]);
        let labels = vec![Label::Anomaly, Label::Normal];
        let config = MlpConfig {
            input_dim: 2,
            hidden_dims: [4, 4],
            epochs: 500,
            batch_size: 2,
            learning_rate: 0.05,
            seed: 1,
            ..MlpConfig::default()
        };
        let (_, trace) = train_raw(&x, &labels, None, &config).unwrap();
        assert_eq!(trace.len(), 500);
        assert_eq!(trace.last().unwrap().accuracy, 1.0);
    }

    #[test]
    fn training_is_bit_deterministic() {
        let x = ndarray::arr2(&[[0.5, -0.2], [0.1, 0.9], [-0.4, 0.3], [0.8, 0.8]]);
        let labels = vec![Label::Anomaly, Label::Normal, Label::Normal, Label::Anomaly];
        let mut config = tiny_config(2, [3, 3], 7);
        config.epochs = 20;
        config.batch_size = 2;
        config.dropout_keep = 0.8;
        let (m1, t1) = train_raw(&x, &labels, None, &config).unwrap();
        let (m2, t2) = train_raw(&x, &labels, None, &config).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(t1, t2);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let x = ndarray::arr2(&[[0.5, -0.2]]);
        let labels = vec![Label::Normal];
        let mut config = tiny_config(2, [3, 3], 7);
        config.epochs = 0;
        let (model, trace) = train_raw(&x, &labels, None, &config).unwrap();
        assert!(trace.is_empty());
        assert_eq!(model.epochs_run, 0);
        let init = MlpModel::init(&config).unwrap();
        assert_eq!(model.w1, init.w1);
        assert_eq!(model.w2, init.w2);
        assert_eq!(model.w3, init.w3);
    }

    #[test]
    fn predict_rules() {
        let mut m = zero_model(8);
        m.b3[0] = 5.0; // confident anomaly
        let sample = WindowSample {
            k: 1,
            joint: vec![0.0, 0.5, 1.0, 0.25, 0.75, 0.5, 0.5, 0.5],
            raw_min: 0.0,
            raw_max: 1.0,
            degenerate: false,
            source_id: "s".into(),
            pending_timestamp: 0,
            label: None,
        };
        let (label, p) = m.predict(&sample).unwrap();
        assert_eq!(label, Label::Anomaly);
        assert!(p > 0.9);

        // Tie goes to normal.
        let tie = zero_model(8);
        let (label, p) = tie.predict(&sample).unwrap();
        assert_eq!(label, Label::Normal);
        assert_eq!(p, 0.5);

        // Degenerate window is normal with p = 0.
        let degenerate = WindowSample {
            joint: vec![0.0; 8],
            degenerate: true,
            raw_min: 3.0,
            raw_max: 3.0,
            ..sample
        };
        let (label, p) = m.predict(&degenerate).unwrap();
        assert_eq!(label, Label::Normal);
        assert_eq!(p, 0.0);
    }

    #[test]
    fn adding_constant_to_logits_keeps_prediction() {
        let sample = WindowSample {
            k: 1,
            joint: vec![0.0, 0.5, 1.0, 0.25, 0.75, 0.5, 0.5, 0.5],
            raw_min: 0.0,
            raw_max: 1.0,
            degenerate: false,
            source_id: "s".into(),
            pending_timestamp: 0,
            label: None,
        };
        let mut m = MlpModel::init(&tiny_config(8, [3, 3], 31)).unwrap();
        let (before, _) = m.predict(&sample).unwrap();
        m.b3 += 2.5;
        let (after, _) = m.predict(&sample).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn undersample_examples() {
        let mk = |label: Label, i: i64| WindowSample {
            k: 1,
            joint: vec![0.0, 0.5, 1.0, 0.25, 0.75, 0.5, 0.5, 0.5],
            raw_min: 0.0,
            raw_max: 1.0,
            degenerate: false,
            source_id: "s".into(),
            pending_timestamp: i,
            label: Some(label),
        };
        let mut pool: Vec<WindowSample> = (0..100).map(|i| mk(Label::Anomaly, i)).collect();
        pool.extend((0..1000).map(|i| mk(Label::Normal, 100 + i)));
        let (selected, summary) = undersample(&pool, 2.0, 42).unwrap();
        assert_eq!(summary.anomalies, 100);
        assert_eq!(summary.normals_kept, 50);
        assert_eq!(selected.len(), 150);
        assert_eq!(summary.achieved_ratio, 2.0);

        // Too few normals: keep all, report achieved ratio.
        let mut pool: Vec<WindowSample> = (0..100).map(|i| mk(Label::Anomaly, i)).collect();
        pool.extend((0..30).map(|i| mk(Label::Normal, 100 + i)));
        let (selected, summary) = undersample(&pool, 2.0, 42).unwrap();
        assert_eq!(selected.len(), 130);
        assert_eq!(summary.normals_kept, 30);
        assert!((summary.achieved_ratio - 100.0 / 30.0).abs() < 1e-12);

        // Missing class.
        let pool: Vec<WindowSample> = (0..5).map(|i| mk(Label::Normal, i)).collect();
        assert_eq!(
            undersample(&pool, 2.0, 42).unwrap_err(),
            MlpError::EmptyClass(Label::Anomaly)
        );
    }

    #[test]
    fn undersample_is_deterministic_per_seed() {
        let mk = |label: Label, i: i64| WindowSample {
            k: 1,
            joint: vec![0.0, 0.5, 1.0, 0.25, 0.75, 0.5, 0.5, 0.5],
            raw_min: 0.0,
            raw_max: 1.0,
            degenerate: false,
            source_id: "s".into(),
            pending_timestamp: i,
            label: Some(label),
        };
        let mut pool: Vec<WindowSample> = (0..10).map(|i| mk(Label::Anomaly, i)).collect();
        pool.extend((0..100).map(|i| mk(Label::Normal, 100 + i)));
        let (a, _) = undersample(&pool, 2.0, 1).unwrap();
        let (b, _) = undersample(&pool, 2.0, 1).unwrap();
        let (c, _) = undersample(&pool, 2.0, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn model_text_round_trip() {
        let config = tiny_config(5, [4, 3], 17);
        let model = MlpModel::init(&config).unwrap();
        let text = model_to_text(&model);
        let back = model_from_text(&text).unwrap();
        assert_eq!(model.w1, back.w1);
        assert_eq!(model.w2, back.w2);
        assert_eq!(model.w3, back.w3);
        assert_eq!(model.config, back.config);
    }

    #[test]
    fn model_text_rejects_garbage() {
        assert!(matches!(
            model_from_text("bogus\n").unwrap_err(),
            MlpError::ParseError { .. }
        ));
    }
}
