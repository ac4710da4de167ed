use ndarray::{Array1, Array2, Axis};
use rand::Rng;

/// Fully connected layer, `out = input · weight + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `inputs × outputs`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weight = Array2::from_shape_fn((inputs, outputs), |_| rng.random_range(-limit..limit));
        Self { weight, bias: Array1::zeros(outputs) }
    }

    pub fn forward(&self, input: &Array2<f64>) -> Array2<f64> {
        input.dot(&self.weight) + &self.bias
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub epsilon: f64,
    pub momentum: f64,
}

/// Values saved by a training-mode batch-norm pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub normalized: Array2<f64>,
    pub inv_std: Array1<f64>,
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

impl BatchNorm {
    pub fn new(features: usize, epsilon: f64, momentum: f64) -> Self {
        Self {
            gamma: Array1::ones(features),
            beta: Array1::zeros(features),
            running_mean: Array1::zeros(features),
            running_var: Array1::ones(features),
            epsilon,
            momentum,
        }
    }

    /// Normalizes with the batch's own (biased) statistics.
    pub fn forward_train(&self, x: &Array2<f64>) -> (Array2<f64>, BatchNormCache) {
        let mean = x.mean_axis(Axis(0)).expect("non-empty batch");
        let centered = x - &mean;
        let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
        let inv_std = var.mapv(|v| 1.0 / (v + self.epsilon).sqrt());
        let normalized = &centered * &inv_std;
        let out = &normalized * &self.gamma + &self.beta;
        (out, BatchNormCache { normalized, inv_std, mean, var })
    }

    pub fn forward_infer(&self, x: &Array2<f64>) -> Array2<f64> {
        let inv_std = self.running_var.mapv(|v| 1.0 / (v + self.epsilon).sqrt());
        (x - &self.running_mean) * &inv_std * &self.gamma + &self.beta
    }

    /// Returns `(d_input, d_gamma, d_beta)`.
    pub fn backward(&self, grad_out: &Array2<f64>, cache: &BatchNormCache) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
        let m = grad_out.nrows() as f64;
        let d_beta = grad_out.sum_axis(Axis(0));
        let d_gamma = (grad_out * &cache.normalized).sum_axis(Axis(0));
        let d_norm = grad_out * &self.gamma;
        let sum_d = d_norm.sum_axis(Axis(0));
        let sum_dx = (&d_norm * &cache.normalized).sum_axis(Axis(0));
        let d_input = ((&d_norm * m) - &sum_d - &(&cache.normalized * &sum_dx)) * &cache.inv_std / m;
        (d_input, d_gamma, d_beta)
    }

    pub fn update_running(&mut self, cache: &BatchNormCache) {
        let mom = self.momentum;
        self.running_mean = &self.running_mean * mom + &cache.mean * (1.0 - mom);
        self.running_var = &self.running_var * mom + &cache.var * (1.0 - mom);
    }
}

pub fn sigmoid(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(crate::svm::sigmoid)
}

/// Row-wise softmax.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Inverted-dropout mask: each entry is `0` with probability `rate`,
/// otherwise `1 / (1 − rate)`.
pub fn dropout_mask<R: Rng>(rows: usize, cols: usize, rate: f64, rng: &mut R) -> Array2<f64> {
    if rate <= 0.0 {
        return Array2::ones((rows, cols));
    }
    let keep = 1.0 - rate;
    Array2::from_shape_fn((rows, cols), |_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
}
