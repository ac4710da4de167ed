//! The probability-scoring contract shared by both classifier heads.

use std::fs;
use std::path::Path;

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::mlp::MlpModel;
use crate::svm::SvmModel;

/// Anything that maps a feature vector to a fight probability.
pub trait Classifier: Send + Sync {
    /// Probability that the person is fighting, in `[0, 1]`.
    fn p_fight(&self, features: &[f64]) -> Result<f64>;

    fn input_dim(&self) -> usize;

    fn predict_batch(&self, batch: &[&[f64]]) -> Result<Vec<f64>> {
        batch.iter().map(|x| self.p_fight(x)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    Svm,
    Mlp,
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svm" => Ok(Self::Svm),
            "mlp" => Ok(Self::Mlp),
            other => Err(Error::Config(format!("unknown classifier '{other}' (expected svm or mlp)"))),
        }
    }
}

/// A trained head of either kind.
#[derive(Debug, Clone)]
pub enum Model {
    Svm(SvmModel),
    Mlp(MlpModel),
}

impl Model {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            Model::Svm(_) => ClassifierKind::Svm,
            Model::Mlp(_) => ClassifierKind::Mlp,
        }
    }

    /// Parses a model file, detecting the head from its first line.
    pub fn from_text(text: &str) -> Result<Self> {
        let first = text.lines().next().unwrap_or_default();
        if first.starts_with(crate::svm::FILE_MAGIC) {
            Ok(Model::Svm(SvmModel::from_text(text)?))
        } else if first.starts_with(crate::mlp::FILE_MAGIC) {
            Ok(Model::Mlp(MlpModel::from_text(text)?))
        } else {
            Err(Error::ModelFormat(format!("unrecognised model header '{first}'")))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }

    /// Loads a model and checks that it is of the expected kind.
    pub fn load_expecting(path: &Path, kind: Option<ClassifierKind>) -> Result<Self> {
        let model = Self::load(path)?;
        match kind {
            Some(k) if k != model.kind() => Err(Error::Config(format!(
                "model {} is a {:?} model, not {:?}",
                path.display(),
                model.kind(),
                k
            ))),
            _ => Ok(model),
        }
    }

    /// Hard label: the sign of the decision value for the SVM, `p ≥ 0.5`
    /// for the MLP.
    pub fn predict_label(&self, features: &[f64]) -> Result<Label> {
        match self {
            Model::Svm(m) => m.predict(features),
            Model::Mlp(m) => Ok(if m.p_fight(features)? >= 0.5 { Label::Fight } else { Label::Normal }),
        }
    }

    pub fn to_text(&self) -> String {
        match self {
            Model::Svm(m) => m.to_text(),
            Model::Mlp(m) => m.to_text(),
        }
    }
}

impl Classifier for Model {
    fn p_fight(&self, features: &[f64]) -> Result<f64> {
        match self {
            Model::Svm(m) => m.p_fight(features),
            Model::Mlp(m) => m.p_fight(features),
        }
    }

    fn input_dim(&self) -> usize {
        match self {
            Model::Svm(m) => m.input_dim(),
            Model::Mlp(m) => m.input_dim(),
        }
    }

    fn predict_batch(&self, batch: &[&[f64]]) -> Result<Vec<f64>> {
        match self {
            Model::Svm(m) => m.predict_batch(batch),
            Model::Mlp(m) => m.predict_batch(batch),
        }
    }
}
