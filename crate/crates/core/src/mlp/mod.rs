//! Shallow MLP head:
//! `dense → sigmoid → batch-norm → dense → sigmoid → dropout → dense → softmax`.
//!
//! With more or fewer hidden layers the pattern generalizes to: every hidden
//! layer is a sigmoid dense layer, batch-norm follows each hidden layer but
//! the last, and dropout follows the last hidden layer.

pub mod layers;

use std::fmt::Write as _;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::classifier::Classifier;
use crate::dataset::{Label, LabeledSample};
use crate::error::{Error, Result};
use layers::{dropout_mask, sigmoid, softmax, BatchNorm, BatchNormCache, Dense};

pub const FILE_MAGIC: &str = "posewatch-mlp";
pub const FILE_VERSION: u32 = 1;

/// Probabilities are clamped to this before taking the log.
pub const LOSS_EPSILON: f64 = 1e-12;

const BN_EPSILON: f64 = 1e-3;
const BN_MOMENTUM: f64 = 0.9;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            input_dim: crate::keypoint::FEATURE_LEN,
            hidden_dims: vec![64, 32],
            dropout_rate: 0.5,
            learning_rate: 1e-3,
            epochs: 20,
            batch_size: 20,
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(Error::Config("input and hidden dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingHistory {
    pub loss: Vec<f64>,
    pub train_accuracy: Vec<f64>,
    /// `None` when no validation set was given.
    pub val_accuracy: Vec<Option<f64>>,
}

impl TrainingHistory {
    pub fn len(&self) -> usize {
        self.loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub config: MlpConfig,
    pub hidden: Vec<Dense>,
    /// `norms[k]` follows `hidden[k]`; the last hidden layer has none.
    pub norms: Vec<Option<BatchNorm>>,
    pub output: Dense,
}

/// Intermediate values of a training-mode pass, needed for backprop.
struct ForwardCache {
    /// Input to each hidden dense layer.
    layer_inputs: Vec<Array2<f64>>,
    activations: Vec<Array2<f64>>,
    bn: Vec<Option<BatchNormCache>>,
    mask: Array2<f64>,
    output_input: Array2<f64>,
    probs: Array2<f64>,
}

fn to_matrix<X: AsRef<[f64]>>(batch: &[X], dim: usize) -> Result<Array2<f64>> {
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let mut m = Array2::zeros((batch.len(), dim));
    for (mut row, x) in m.rows_mut().into_iter().zip(batch) {
        let x = x.as_ref();
        if x.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: x.len() });
        }
        row.assign(&ndarray::ArrayView1::from(x));
    }
    Ok(m)
}

fn rows_of(probs: &Array2<f64>) -> Vec<[f64; 2]> {
    probs.rows().into_iter().map(|r| [r[0], r[1]]).collect()
}

/// Mean sparse categorical cross-entropy, `−log p[label]` averaged over the
/// batch with `p` clamped below at [`LOSS_EPSILON`].
pub fn loss(probabilities: &[[f64; 2]], labels: &[Label]) -> Result<f64> {
    if probabilities.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: probabilities.len(), got: labels.len() });
    }
    if labels.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let total: f64 = probabilities
        .iter()
        .zip(labels)
        .map(|(p, l)| -p[l.index()].max(LOSS_EPSILON).ln())
        .sum();
    Ok(total / labels.len() as f64)
}

impl MlpModel {
    pub fn new(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self::init(config, &mut rng))
    }

    fn init(config: MlpConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut hidden = Vec::new();
        let mut norms = Vec::new();
        let mut fan_in = config.input_dim;
        let last = config.hidden_dims.len() - 1;
        for (k, &h) in config.hidden_dims.iter().enumerate() {
            hidden.push(Dense::glorot(fan_in, h, rng));
            norms.push((k < last).then(|| BatchNorm::new(h, BN_EPSILON, BN_MOMENTUM)));
            fan_in = h;
        }
        let output = Dense::glorot(fan_in, 2, rng);
        Self { config, hidden, norms, output }
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    fn forward_train_matrix(&self, x: &Array2<f64>, mask: &Array2<f64>) -> Result<ForwardCache> {
        if x.nrows() < 2 && self.norms.iter().any(Option::is_some) {
            return Err(Error::BatchNorm("training-mode batch norm needs at least 2 samples".into()));
        }
        let mut layer_inputs = Vec::with_capacity(self.hidden.len());
        let mut activations = Vec::with_capacity(self.hidden.len());
        let mut bn = Vec::with_capacity(self.hidden.len());
        let mut h = x.clone();
        for (dense, norm) in self.hidden.iter().zip(&self.norms) {
            let a = sigmoid(&dense.forward(&h));
            layer_inputs.push(h);
            h = match norm {
                Some(norm) => {
                    let (y, cache) = norm.forward_train(&a);
                    bn.push(Some(cache));
                    y
                }
                None => {
                    bn.push(None);
                    a.clone()
                }
            };
            activations.push(a);
        }
        let dropped = &h * mask;
        let probs = softmax(&self.output.forward(&dropped));
        Ok(ForwardCache { layer_inputs, activations, bn, mask: mask.clone(), output_input: dropped, probs })
    }

    fn forward_infer_matrix(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.clone();
        for (dense, norm) in self.hidden.iter().zip(&self.norms) {
            h = sigmoid(&dense.forward(&h));
            if let Some(norm) = norm {
                h = norm.forward_infer(&h);
            }
        }
        softmax(&self.output.forward(&h))
    }

    fn last_hidden_dim(&self) -> usize {
        self.output.inputs()
    }

    /// Class probabilities `[p_normal, p_fight]` per row. Training mode uses
    /// batch statistics and a fresh dropout mask drawn from `seed`.
    pub fn forward<X: AsRef<[f64]>>(&self, batch: &[X], mode: Mode, seed: u64) -> Result<Vec<[f64; 2]>> {
        let x = to_matrix(batch, self.input_dim())?;
        match mode {
            Mode::Infer => Ok(rows_of(&self.forward_infer_matrix(&x))),
            Mode::Train => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mask = dropout_mask(x.nrows(), self.last_hidden_dim(), self.config.dropout_rate, &mut rng);
                Ok(rows_of(&self.forward_train_matrix(&x, &mask)?.probs))
            }
        }
    }

    /// Gradients of the mean loss, in [`MlpModel::parameters`] order.
    fn backward(&self, cache: &ForwardCache, labels: &[Label]) -> Vec<Vec<f64>> {
        let m = labels.len() as f64;
        let mut d_logits = cache.probs.clone();
        for (mut row, l) in d_logits.rows_mut().into_iter().zip(labels) {
            row[l.index()] -= 1.0;
        }
        d_logits /= m;

        let mut per_layer: Vec<Vec<Vec<f64>>> = Vec::with_capacity(self.hidden.len());
        let d_out_w = cache.output_input.t().dot(&d_logits);
        let d_out_b = d_logits.sum_axis(Axis(0));
        let mut grad = d_logits.dot(&self.output.weight.t()) * &cache.mask;

        for k in (0..self.hidden.len()).rev() {
            let mut group = Vec::new();
            let mut bn_grads = None;
            if let (Some(norm), Some(bn_cache)) = (&self.norms[k], &cache.bn[k]) {
                let (d_in, d_gamma, d_beta) = norm.backward(&grad, bn_cache);
                bn_grads = Some((d_gamma, d_beta));
                grad = d_in;
            }
            let a = &cache.activations[k];
            let dz = &grad * &a.mapv(|v| v * (1.0 - v));
            let dw = cache.layer_inputs[k].t().dot(&dz);
            let db = dz.sum_axis(Axis(0));
            grad = dz.dot(&self.hidden[k].weight.t());
            group.push(flat2(&dw));
            group.push(db.to_vec());
            if let Some((dg, dbeta)) = bn_grads {
                group.push(dg.to_vec());
                group.push(dbeta.to_vec());
            }
            per_layer.push(group);
        }
        per_layer.reverse();
        let mut grads: Vec<Vec<f64>> = per_layer.into_iter().flatten().collect();
        grads.push(flat2(&d_out_w));
        grads.push(d_out_b.to_vec());
        grads
    }

    /// Trainable tensors in a fixed order: per hidden layer weight, bias and
    /// (if present) batch-norm gamma, beta; then output weight, bias.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for (dense, norm) in self.hidden.iter_mut().zip(self.norms.iter_mut()) {
            out.push(dense.weight.as_slice_mut().expect("standard layout"));
            out.push(dense.bias.as_slice_mut().expect("standard layout"));
            if let Some(norm) = norm {
                out.push(norm.gamma.as_slice_mut().expect("standard layout"));
                out.push(norm.beta.as_slice_mut().expect("standard layout"));
            }
        }
        out.push(self.output.weight.as_slice_mut().expect("standard layout"));
        out.push(self.output.bias.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.clone().parameters_mut().iter().map(|p| p.len()).sum()
    }

    /// Per-row fight probability in inference mode.
    pub fn predict_proba_batch<X: AsRef<[f64]>>(&self, batch: &[X]) -> Result<Vec<f64>> {
        Ok(self.forward(batch, Mode::Infer, 0)?.into_iter().map(|p| p[1]).collect())
    }

    pub fn accuracy(&self, samples: &[LabeledSample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::Data("empty sample set".into()));
        }
        let feats: Vec<&[f64]> = samples.iter().map(|s| s.features.as_slice()).collect();
        let p = self.predict_proba_batch(&feats)?;
        let correct = p
            .iter()
            .zip(samples)
            .filter(|(p, s)| (**p > 0.5) == (s.label == Label::Fight))
            .count();
        Ok(correct as f64 / samples.len() as f64)
    }

    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(s, "{FILE_MAGIC} {FILE_VERSION}");
        let _ = writeln!(s, "input_dim {}", c.input_dim);
        let dims: Vec<String> = c.hidden_dims.iter().map(ToString::to_string).collect();
        let _ = writeln!(s, "hidden_dims {}", dims.join(" "));
        let _ = writeln!(s, "dropout_rate {}", c.dropout_rate);
        let _ = writeln!(s, "learning_rate {}", c.learning_rate);
        let _ = writeln!(s, "epochs {}", c.epochs);
        let _ = writeln!(s, "batch_size {}", c.batch_size);
        let _ = writeln!(s, "seed {}", c.seed);
        for (name, rows, cols, values) in self.tensors() {
            let _ = write!(s, "tensor {name} {rows} {cols}");
            for v in values {
                let _ = write!(s, " {v}");
            }
            s.push('\n');
        }
        s
    }

    /// Every stored tensor (including batch-norm running statistics and
    /// constants) as `(name, rows, cols, row-major values)`.
    fn tensors(&self) -> Vec<(String, usize, usize, Vec<f64>)> {
        let mut t = Vec::new();
        for (k, (dense, norm)) in self.hidden.iter().zip(&self.norms).enumerate() {
            t.push((format!("hidden{k}.weight"), dense.inputs(), dense.outputs(), flat2(&dense.weight)));
            t.push((format!("hidden{k}.bias"), 1, dense.outputs(), dense.bias.to_vec()));
            if let Some(n) = norm {
                let len = n.gamma.len();
                t.push((format!("bn{k}.gamma"), 1, len, n.gamma.to_vec()));
                t.push((format!("bn{k}.beta"), 1, len, n.beta.to_vec()));
                t.push((format!("bn{k}.running_mean"), 1, len, n.running_mean.to_vec()));
                t.push((format!("bn{k}.running_var"), 1, len, n.running_var.to_vec()));
                t.push((format!("bn{k}.constants"), 1, 2, vec![n.epsilon, n.momentum]));
            }
        }
        t.push(("output.weight".into(), self.output.inputs(), 2, flat2(&self.output.weight)));
        t.push(("output.bias".into(), 1, 2, self.output.bias.to_vec()));
        t
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let err = |m: String| Error::ModelFormat(m);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut next = |key: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| err(format!("missing '{key}' line")))?;
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some(k) if k == key => Ok(parts.map(str::to_owned).collect()),
                other => Err(err(format!("expected '{key}', found {other:?}"))),
            }
        };
        fn one<T: std::str::FromStr>(v: &[String], key: &str) -> Result<T> {
            match v {
                [x] => x.parse().map_err(|_| Error::ModelFormat(format!("bad value for '{key}'"))),
                _ => Err(Error::ModelFormat(format!("'{key}' takes one value"))),
            }
        }

        let version = next(FILE_MAGIC)?;
        if version != [FILE_VERSION.to_string()] {
            return Err(err(format!("unsupported MLP model version {version:?}")));
        }
        let config = MlpConfig {
            input_dim: one(&next("input_dim")?, "input_dim")?,
            hidden_dims: next("hidden_dims")?
                .iter()
                .map(|v| v.parse().map_err(|_| err("bad hidden_dims".into())))
                .collect::<Result<_>>()?,
            dropout_rate: one(&next("dropout_rate")?, "dropout_rate")?,
            learning_rate: one(&next("learning_rate")?, "learning_rate")?,
            epochs: one(&next("epochs")?, "epochs")?,
            batch_size: one(&next("batch_size")?, "batch_size")?,
            seed: one(&next("seed")?, "seed")?,
        };
        config.validate()?;

        let mut model = Self::init(config, &mut ChaCha8Rng::seed_from_u64(0));
        let expected = model.tensors();
        let mut loaded = Vec::with_capacity(expected.len());
        for (name, rows, cols, _) in &expected {
            let parts = next("tensor")?;
            if parts.len() < 3 || &parts[0] != name {
                return Err(err(format!("expected tensor {name}")));
            }
            let (r, c): (usize, usize) = (one(&parts[1..2], "rows")?, one(&parts[2..3], "cols")?);
            if (r, c) != (*rows, *cols) || parts.len() != 3 + r * c {
                return Err(err(format!("tensor {name} has wrong shape")));
            }
            let values = parts[3..]
                .iter()
                .map(|v| v.parse::<f64>().map_err(|_| err(format!("bad value in {name}"))))
                .collect::<Result<Vec<_>>>()?;
            loaded.push(values);
        }
        let mut values = loaded.into_iter();
        let mut take = || values.next().expect("tensor count checked");
        for (dense, norm) in model.hidden.iter_mut().zip(model.norms.iter_mut()) {
            dense.weight = Array2::from_shape_vec(dense.weight.raw_dim(), take()).expect("shape checked");
            dense.bias = Array1::from(take());
            if let Some(n) = norm {
                n.gamma = Array1::from(take());
                n.beta = Array1::from(take());
                n.running_mean = Array1::from(take());
                n.running_var = Array1::from(take());
                let consts = take();
                n.epsilon = consts[0];
                n.momentum = consts[1];
            }
        }
        model.output.weight = Array2::from_shape_vec(model.output.weight.raw_dim(), take()).expect("shape checked");
        model.output.bias = Array1::from(take());
        Ok(model)
    }
}

fn flat2(a: &Array2<f64>) -> Vec<f64> {
    a.iter().copied().collect()
}

impl Classifier for MlpModel {
    fn p_fight(&self, features: &[f64]) -> Result<f64> {
        Ok(self.predict_proba_batch(&[features])?[0])
    }

    fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    fn predict_batch(&self, batch: &[&[f64]]) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        self.predict_proba_batch(batch)
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
    lr: f64,
}

impl Adam {
    fn new(shapes: &[usize], lr: f64) -> Self {
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: Vec<&mut [f64]>, grads: &[Vec<f64>]) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            for i in 0..p.len() {
                let m = &mut self.m[k][i];
                let v = &mut self.v[k][i];
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g[i];
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g[i] * g[i];
                p[i] -= self.lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPSILON);
            }
        }
    }
}

/// Splits shuffled indices into mini-batches, folding a trailing batch of
/// one sample into its predecessor (batch-norm needs two).
fn mini_batches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut batches: Vec<&[usize]> = order.chunks(batch_size).collect();
    if batches.len() >= 2 && batches.last().is_some_and(|b| b.len() == 1) {
        batches.pop();
        let start = (batches.len() - 1) * batch_size;
        *batches.last_mut().expect("at least one batch") = &order[start..];
    }
    batches
}

/// Trains with shuffled mini-batches and Adam. The returned model is meant
/// for inference (running batch-norm statistics).
pub fn train_mlp(train: &[LabeledSample], val: &[LabeledSample], config: &MlpConfig) -> Result<(MlpModel, TrainingHistory)> {
    let x: Vec<&[f64]> = train.iter().map(|s| s.features.as_slice()).collect();
    let y: Vec<Label> = train.iter().map(|s| s.label).collect();
    let val_x: Vec<&[f64]> = val.iter().map(|s| s.features.as_slice()).collect();
    let val_y: Vec<Label> = val.iter().map(|s| s.label).collect();
    train_mlp_raw(&x, &y, &val_x, &val_y, config)
}

/// [`train_mlp`] over raw rows of any dimension.
pub fn train_mlp_raw<X: AsRef<[f64]>>(
    x: &[X],
    y: &[Label],
    val_x: &[X],
    val_y: &[Label],
    config: &MlpConfig,
) -> Result<(MlpModel, TrainingHistory)> {
    config.validate()?;
    if x.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    if x.len() != y.len() || val_x.len() != val_y.len() {
        return Err(Error::Training("feature and label counts differ".into()));
    }
    if !y.contains(&Label::Normal) || !y.contains(&Label::Fight) {
        return Err(Error::Training("both classes must be present in the training set".into()));
    }
    let data = to_matrix(x, config.input_dim)?;
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite feature value".into()));
    }
    let val_data = if val_x.is_empty() { None } else { Some(to_matrix(val_x, config.input_dim)?) };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = MlpModel::init(config.clone(), &mut rng);
    let shapes: Vec<usize> = model.parameters_mut().iter().map(|p| p.len()).collect();
    let mut adam = Adam::new(&shapes, config.learning_rate);
    let mut history = TrainingHistory::default();
    let mut order: Vec<usize> = (0..x.len()).collect();

    let accuracy = |model: &MlpModel, data: &Array2<f64>, labels: &[Label]| {
        let probs = model.forward_infer_matrix(data);
        let correct = probs
            .rows()
            .into_iter()
            .zip(labels)
            .filter(|(p, l)| (p[1] > 0.5) == (**l == Label::Fight))
            .count();
        correct as f64 / labels.len() as f64
    };

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in mini_batches(&order, config.batch_size) {
            let bx = data.select(Axis(0), batch);
            let by: Vec<Label> = batch.iter().map(|&i| y[i]).collect();
            let mask = dropout_mask(bx.nrows(), model.last_hidden_dim(), config.dropout_rate, &mut rng);
            let cache = model.forward_train_matrix(&bx, &mask)?;
            epoch_loss += loss(&rows_of(&cache.probs), &by)? * batch.len() as f64;
            let grads = model.backward(&cache, &by);
            adam.step(model.parameters_mut(), &grads);
            for (norm, bn_cache) in model.norms.iter_mut().zip(&cache.bn) {
                if let (Some(norm), Some(c)) = (norm, bn_cache) {
                    norm.update_running(c);
                }
            }
        }
        history.loss.push(epoch_loss / x.len() as f64);
        history.train_accuracy.push(accuracy(&model, &data, y));
        history.val_accuracy.push(val_data.as_ref().map(|v| accuracy(&model, v, val_y)));
    }
    Ok((model, history))
}

/// Compares backprop gradients with central finite differences (step
/// `1e-5`) in training mode, with one dropout mask drawn from the model's
/// seed and reused for every evaluation. Returns the maximum over all
/// parameters of `|g_a − g_n| / max(|g_a|, |g_n|, 1e-8)`.
pub fn gradient_check<X: AsRef<[f64]>>(model: &MlpModel, batch: &[X], labels: &[Label]) -> Result<f64> {
    const STEP: f64 = 1e-5;
    let x = to_matrix(batch, model.input_dim())?;
    if labels.len() != x.nrows() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), got: labels.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed);
    let mask = dropout_mask(x.nrows(), model.last_hidden_dim(), model.config.dropout_rate, &mut rng);

    let analytic = model.backward(&model.forward_train_matrix(&x, &mask)?, labels);
    let mut scratch = model.clone();
    let eval = |m: &MlpModel| -> Result<f64> { loss(&rows_of(&m.forward_train_matrix(&x, &mask)?.probs), labels) };

    let mut worst: f64 = 0.0;
    for (t, grads) in analytic.iter().enumerate() {
        for (i, &ga) in grads.iter().enumerate() {
            let original = scratch.parameters_mut()[t][i];
            scratch.parameters_mut()[t][i] = original + STEP;
            let plus = eval(&scratch)?;
            scratch.parameters_mut()[t][i] = original - STEP;
            let minus = eval(&scratch)?;
            scratch.parameters_mut()[t][i] = original;
            let gn = (plus - minus) / (2.0 * STEP);
            let rel = (ga - gn).abs() / ga.abs().max(gn.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(seed: u64) -> MlpConfig {
        MlpConfig { input_dim: 4, hidden_dims: vec![3, 3], seed, ..MlpConfig::default() }
    }

    fn batch(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Label>) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
        let y = (0..n).map(|i| if i % 2 == 0 { Label::Normal } else { Label::Fight }).collect();
        (x, y)
    }

    #[test]
    fn zero_output_layer_gives_uniform_probabilities() {
        let mut m = MlpModel::new(small_config(1)).unwrap();
        m.output.weight.fill(0.0);
        m.output.bias.fill(0.0);
        let (x, _) = batch(5, 2);
        for p in m.forward(&x, Mode::Infer, 0).unwrap() {
            assert_eq!(p, [0.5, 0.5]);
        }
    }

    #[test]
    fn inference_is_deterministic_and_normalized() {
        let m = MlpModel::new(small_config(4)).unwrap();
        let (x, _) = batch(7, 5);
        let a = m.forward(&x, Mode::Infer, 0).unwrap();
        assert_eq!(a, m.forward(&x, Mode::Infer, 0).unwrap());
        for p in m.forward(&x, Mode::Train, 9).unwrap().iter().chain(&a) {
            assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn train_mode_rejects_single_sample() {
        let m = MlpModel::new(small_config(1)).unwrap();
        let (x, _) = batch(1, 1);
        assert!(matches!(m.forward(&x, Mode::Train, 0), Err(Error::BatchNorm(_))));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = MlpModel::new(small_config(1)).unwrap();
        assert!(matches!(m.forward(&[vec![0.0; 3]], Mode::Infer, 0), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn loss_reference_values() {
        assert_eq!(loss(&[[0.0, 1.0]], &[Label::Fight]).unwrap(), 0.0);
        assert!((loss(&[[0.5, 0.5]], &[Label::Normal]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((loss(&[[0.9, 0.1]], &[Label::Fight]).unwrap() - 2.302585).abs() < 1e-6);
        assert!((loss(&[[1.0, 0.0]], &[Label::Fight]).unwrap() - 1e12f64.ln()).abs() < 1e-9);
        assert!(loss(&[[0.5, 0.5]], &[]).is_err());
    }

    #[test]
    fn gradient_check_small_model() {
        let m = MlpModel::new(small_config(11)).unwrap();
        let (x, y) = batch(6, 12);
        let err = gradient_check(&m, &x, &y).unwrap();
        assert!(err < 1e-4, "relative error {err}");
        assert_eq!(err, gradient_check(&m, &x, &y).unwrap());
    }

    #[test]
    fn gradient_check_zero_inputs_is_finite() {
        let m = MlpModel::new(small_config(3)).unwrap();
        let x = vec![vec![0.0; 4]; 4];
        let y = vec![Label::Normal, Label::Fight, Label::Normal, Label::Fight];
        let err = gradient_check(&m, &x, &y).unwrap();
        assert!(err.is_finite());
    }

    #[test]
    fn mini_batches_fold_singletons() {
        let order: Vec<usize> = (0..41).collect();
        let b = mini_batches(&order, 20);
        assert_eq!(b.iter().map(|b| b.len()).collect::<Vec<_>>(), vec![20, 21]);
        let order: Vec<usize> = (0..45).collect();
        assert_eq!(mini_batches(&order, 20).len(), 3);
    }

    #[test]
    fn training_history_has_one_entry_per_epoch() {
        let (x, y) = batch(30, 3);
        let config = MlpConfig { epochs: 1, ..small_config(2) };
        let (_, h) = train_mlp_raw(&x, &y, &x[..0], &y[..0], &config).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h.val_accuracy, vec![None]);
    }

    #[test]
    fn training_rejects_single_class() {
        let (x, _) = batch(10, 3);
        let y = vec![Label::Fight; 10];
        assert!(matches!(
            train_mlp_raw(&x, &y, &x[..0], &y[..0], &small_config(1)),
            Err(Error::Training(_))
        ));
        let empty: Vec<Vec<f64>> = Vec::new();
        assert!(matches!(train_mlp_raw(&empty, &[], &empty, &[], &small_config(1)), Err(Error::Training(_))));
    }

    #[test]
    fn model_text_round_trip() {
        let (x, y) = batch(30, 8);
        let (m, _) = train_mlp_raw(&x, &y, &x[..0], &y[..0], &MlpConfig { epochs: 2, ..small_config(5) }).unwrap();
        let back = MlpModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert!(MlpModel::from_text(&m.to_text().replacen("posewatch-mlp 1", "posewatch-mlp 9", 1)).is_err());
    }
}
