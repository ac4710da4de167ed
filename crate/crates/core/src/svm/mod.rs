//! Binary SVM head trained with SMO and calibrated with Platt scaling.
//!
//! Training accepts any feature dimension; production models use the
//! 34-value normalized skeleton features.

mod platt;
pub mod smo;

use std::fmt::Write as _;

pub use platt::{fit_platt, platt_objective, platt_targets, sigmoid, PlattParams};

use crate::classifier::Classifier;
use crate::dataset::{Label, LabeledSample};
use crate::error::{Error, Result};
use smo::{GramMatrix, SmoParams};

pub const FILE_MAGIC: &str = "posewatch-svm";
pub const FILE_VERSION: u32 = 1;

/// Kernel requested at configuration time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: f64 },
    /// RBF with `gamma = 1 / (n_features · Var(X))` computed from the
    /// training matrix.
    RbfScaled,
}

/// Kernel as stored in a trained model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub kernel: KernelSpec,
    pub c: f64,
    pub tolerance: f64,
    pub max_passes: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { kernel: KernelSpec::RbfScaled, c: 1.0, tolerance: 1e-3, max_passes: 10, seed: 0 }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("c must be positive, got {}", self.c)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_passes == 0 {
            return Err(Error::Config("max_passes must be positive".into()));
        }
        if let KernelSpec::Rbf { gamma } = self.kernel {
            if !(gamma > 0.0 && gamma.is_finite()) {
                return Err(Error::Config(format!("rbf gamma must be positive, got {gamma}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportVector {
    pub x: Vec<f64>,
    pub alpha: f64,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    pub dim: usize,
    pub support_vectors: Vec<SupportVector>,
    pub bias: f64,
    pub platt: Option<PlattParams>,
}

fn scaled_gamma(x: &[Vec<f64>], dim: usize) -> f64 {
    let n = (x.len() * dim) as f64;
    let mean = x.iter().flatten().sum::<f64>() / n;
    let var = x.iter().flatten().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (dim as f64 * var)
    } else {
        1.0
    }
}

impl SvmModel {
    /// Trains on raw rows without calibrating.
    pub fn fit_uncalibrated(x: &[Vec<f64>], y: &[Label], config: &SvmConfig) -> Result<Self> {
        config.validate()?;
        if x.len() != y.len() {
            return Err(Error::Training(format!("{} rows but {} labels", x.len(), y.len())));
        }
        if !y.contains(&Label::Normal) || !y.contains(&Label::Fight) {
            return Err(Error::Training("both classes must be present".into()));
        }
        let dim = x[0].len();
        if dim == 0 {
            return Err(Error::Training("feature dimension is zero".into()));
        }
        for row in x {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data("non-finite feature value".into()));
            }
        }

        let kernel = match config.kernel {
            KernelSpec::Linear => Kernel::Linear,
            KernelSpec::Rbf { gamma } => Kernel::Rbf { gamma },
            KernelSpec::RbfScaled => Kernel::Rbf { gamma: scaled_gamma(x, dim) },
        };
        let gram = GramMatrix::build(x.len(), |i, j| kernel.eval(&x[i], &x[j]));
        let signs: Vec<f64> = y.iter().map(|l| l.sign()).collect();
        let params = SmoParams {
            c: config.c,
            tolerance: config.tolerance,
            max_passes: config.max_passes,
            seed: config.seed,
            max_iterations: 1_000_000.max(200 * x.len()),
        };
        let solution = smo::solve(&gram, &signs, &params);

        let support_vectors = solution
            .alphas
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > 0.0)
            .map(|(i, &a)| SupportVector { x: x[i].clone(), alpha: a, label: y[i] })
            .collect();
        Ok(Self { kernel, c: config.c, dim, support_vectors, bias: solution.bias, platt: None })
    }

    /// Trains and calibrates on the training decision values.
    pub fn fit(x: &[Vec<f64>], y: &[Label], config: &SvmConfig) -> Result<Self> {
        let mut model = Self::fit_uncalibrated(x, y, config)?;
        let decisions = x.iter().map(|r| model.decision_value(r)).collect::<Result<Vec<_>>>()?;
        model.platt = Some(fit_platt(&decisions, y)?);
        Ok(model)
    }

    /// `Σ αᵢ yᵢ K(xᵢ, x) + b`; positive means fight.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(self
            .support_vectors
            .iter()
            .map(|sv| sv.alpha * sv.label.sign() * self.kernel.eval(&sv.x, x))
            .sum::<f64>()
            + self.bias)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        Ok(if self.decision_value(x)? > 0.0 { Label::Fight } else { Label::Normal })
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        let platt = self.platt.ok_or(Error::Uncalibrated)?;
        Ok(platt.probability(self.decision_value(x)?))
    }

    /// Primal weight vector; only defined for the linear kernel.
    pub fn linear_weights(&self) -> Option<Vec<f64>> {
        if self.kernel != Kernel::Linear {
            return None;
        }
        let mut w = vec![0.0; self.dim];
        for sv in &self.support_vectors {
            for (wk, xk) in w.iter_mut().zip(&sv.x) {
                *wk += sv.alpha * sv.label.sign() * xk;
            }
        }
        Some(w)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{FILE_MAGIC} {FILE_VERSION}");
        match self.kernel {
            Kernel::Linear => s.push_str("kernel linear\n"),
            Kernel::Rbf { gamma } => {
                let _ = writeln!(s, "kernel rbf {gamma}");
            }
        }
        let _ = writeln!(s, "c {}", self.c);
        let _ = writeln!(s, "dim {}", self.dim);
        let _ = writeln!(s, "bias {}", self.bias);
        match self.platt {
            Some(p) => {
                let _ = writeln!(s, "platt {} {}", p.a, p.b);
            }
            None => s.push_str("platt none\n"),
        }
        let _ = writeln!(s, "support_vectors {}", self.support_vectors.len());
        for sv in &self.support_vectors {
            let _ = write!(s, "sv {} {}", sv.alpha, sv.label);
            for v in &sv.x {
                let _ = write!(s, " {v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let fmt_err = |m: String| Error::ModelFormat(m);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut next = |key: &str| -> Result<Vec<&str>> {
            let line = lines.next().ok_or_else(|| fmt_err(format!("missing '{key}' line")))?;
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some(k) if k == key => Ok(parts.collect()),
                other => Err(fmt_err(format!("expected '{key}', found {other:?}"))),
            }
        };
        let num = |s: &str| s.parse::<f64>().map_err(|e| fmt_err(format!("bad number '{s}': {e}")));

        let version = next(FILE_MAGIC)?;
        if version != [FILE_VERSION.to_string()] {
            return Err(fmt_err(format!("unsupported SVM model version {version:?}")));
        }
        let kernel = match next("kernel")?.as_slice() {
            ["linear"] => Kernel::Linear,
            ["rbf", g] => Kernel::Rbf { gamma: num(g)? },
            other => return Err(fmt_err(format!("bad kernel spec {other:?}"))),
        };
        let single = |v: Vec<&str>, key: &str| -> Result<f64> {
            match v.as_slice() {
                [x] => num(x),
                _ => Err(fmt_err(format!("'{key}' takes one value"))),
            }
        };
        let c = single(next("c")?, "c")?;
        let dim = single(next("dim")?, "dim")? as usize;
        let bias = single(next("bias")?, "bias")?;
        let platt = match next("platt")?.as_slice() {
            ["none"] => None,
            [a, b] => Some(PlattParams { a: num(a)?, b: num(b)? }),
            other => return Err(fmt_err(format!("bad platt line {other:?}"))),
        };
        let count = single(next("support_vectors")?, "support_vectors")? as usize;
        let mut support_vectors = Vec::with_capacity(count);
        for _ in 0..count {
            let parts = next("sv")?;
            if parts.len() != dim + 2 {
                return Err(fmt_err(format!("support vector has {} fields, expected {}", parts.len(), dim + 2)));
            }
            let label = match parts[1] {
                "0" => Label::Normal,
                "1" => Label::Fight,
                other => return Err(fmt_err(format!("bad label '{other}'"))),
            };
            support_vectors.push(SupportVector {
                alpha: num(parts[0])?,
                label,
                x: parts[2..].iter().map(|s| num(s)).collect::<Result<_>>()?,
            });
        }
        Ok(Self { kernel, c, dim, support_vectors, bias, platt })
    }
}

impl Classifier for SvmModel {
    fn p_fight(&self, features: &[f64]) -> Result<f64> {
        self.predict_proba(features)
    }

    fn input_dim(&self) -> usize {
        self.dim
    }
}

/// Trains a calibrated SVM on labeled feature vectors.
pub fn train_svm(samples: &[LabeledSample], config: &SvmConfig) -> Result<SvmModel> {
    if samples.is_empty() {
        return Err(Error::Training("no training samples".into()));
    }
    let x: Vec<Vec<f64>> = samples.iter().map(|s| s.features.as_slice().to_vec()).collect();
    let y: Vec<Label> = samples.iter().map(|s| s.label).collect();
    SvmModel::fit(&x, &y, config)
}
