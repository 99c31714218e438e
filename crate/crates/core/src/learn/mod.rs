//! Binary left/right classifiers: an Anova-kernel SVM trained by SMO and a
//! single-hidden-layer sigmoid network trained by backpropagation.

mod kernel;
mod mlp;
mod svm;

use serde::{Deserialize, Serialize};

use crate::edf::Side;
use crate::error::{Error, Result};

pub use kernel::{anova_kernel, AnovaKernel};
pub use mlp::{train_nn, MlpConfig, MlpGradient, MlpModel, MlpTrainInfo};
pub use svm::{solve_smo, train_svm, SmoSolution, SvmConfig, SvmModel, SvmTrainInfo};

/// Version tag written into serialized models.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// SVM label: Left → −1, Right → +1.
pub fn svm_label(side: Side) -> f64 {
    match side {
        Side::Left => -1.0,
        Side::Right => 1.0,
    }
}

pub fn side_from_svm_label(y: f64) -> Side {
    if y > 0.0 {
        Side::Right
    } else {
        Side::Left
    }
}

/// Network target: Left → 0.1, Right → 0.9.
pub fn nn_target(side: Side) -> f64 {
    match side {
        Side::Left => 0.1,
        Side::Right => 0.9,
    }
}

/// Output strictly above 0.5 is Right; exactly 0.5 falls to Left.
pub fn side_from_nn_output(o: f64) -> Side {
    if o > 0.5 {
        Side::Right
    } else {
        Side::Left
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<Side>,
}

impl LabeledDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<Side>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows for {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(first) = features.first() {
            if features.iter().any(|r| r.len() != first.len()) {
                return Err(Error::Shape("ragged feature rows".into()));
            }
        }
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        Ok(LabeledDataset { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn require_both_classes(&self) -> Result<()> {
        for side in Side::BOTH {
            if !self.labels.contains(&side) {
                return Err(Error::EmptySide(side));
            }
        }
        Ok(())
    }

    pub fn subset(&self, rows: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: rows.iter().map(|&i| self.features[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub side: Side,
    /// SVM decision value or network output.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "classifier", rename_all = "lowercase")]
pub enum TrainedModel {
    Nn(MlpModel),
    Svm(SvmModel),
}

impl TrainedModel {
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        match self {
            TrainedModel::Nn(m) => m.predict(x),
            TrainedModel::Svm(m) => m.predict(x),
        }
    }

    pub fn accuracy(&self, data: &LabeledDataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::InvalidInput("accuracy of an empty dataset".into()));
        }
        let mut hits = 0;
        for (x, y) in data.features.iter().zip(&data.labels) {
            if self.predict(x)?.side == *y {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len() as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Serialization(format!(
                "model format version {} (expected {MODEL_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        Ok(doc.model)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: TrainedModel,
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Shape(format!("model expects {expected} inputs, got {got}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_round_trips() {
        for s in Side::BOTH {
            assert_eq!(side_from_svm_label(svm_label(s)), s);
            assert_eq!(side_from_nn_output(nn_target(s)), s);
        }
        assert_eq!(side_from_nn_output(0.5), Side::Left);
    }
}
