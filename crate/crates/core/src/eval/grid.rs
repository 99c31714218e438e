use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::splits::{Split, SplitPlan};
use crate::edf::Side;
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureSubset, Normalization};
use crate::learn::{
    solve_smo, svm_label, train_nn, AnovaKernel, LabeledDataset, MlpConfig, SvmConfig,
    TrainedModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classifier {
    Nn,
    Svm,
}

impl Classifier {
    pub const ALL: [Classifier; 2] = [Classifier::Nn, Classifier::Svm];
}

impl fmt::Display for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classifier::Nn => "nn",
            Classifier::Svm => "svm",
        })
    }
}

impl FromStr for Classifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nn" => Ok(Classifier::Nn),
            "svm" => Ok(Classifier::Svm),
            other => Err(Error::Config(format!("unknown classifier {other:?} (nn, svm)"))),
        }
    }
}

/// Hyperparameters of one grid point. Ordering is the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "classifier", rename_all = "lowercase")]
pub enum GridPoint {
    Nn { hidden: usize },
    Svm { degree: u32, gamma: u32 },
}

impl GridPoint {
    pub fn classifier(&self) -> Classifier {
        match self {
            GridPoint::Nn { .. } => Classifier::Nn,
            GridPoint::Svm { .. } => Classifier::Svm,
        }
    }
}

impl fmt::Display for GridPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridPoint::Nn { hidden } => write!(f, "hidden={hidden}"),
            GridPoint::Svm { degree, gamma } => write!(f, "degree={degree} gamma={gamma}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationMode {
    /// Normalize the whole matrix once, before splitting.
    #[default]
    Full,
    /// Fit the column ranges on each training set and apply them to its test set.
    TrainOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub nn_hidden: Vec<usize>,
    pub svm_degrees: Vec<u32>,
    pub svm_gammas: Vec<u32>,
    pub svm: SvmConfig,
    pub mlp: MlpConfig,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            nn_hidden: (1..=20).collect(),
            svm_degrees: (1..=10).collect(),
            svm_gammas: (1..=10).collect(),
            svm: SvmConfig::default(),
            mlp: MlpConfig::default(),
        }
    }
}

impl GridConfig {
    pub fn points(&self, classifier: Classifier) -> Vec<GridPoint> {
        let mut pts: Vec<GridPoint> = match classifier {
            Classifier::Nn => self.nn_hidden.iter().map(|&hidden| GridPoint::Nn { hidden }).collect(),
            Classifier::Svm => self
                .svm_degrees
                .iter()
                .flat_map(|&degree| self.svm_gammas.iter().map(move |&gamma| GridPoint::Svm { degree, gamma }))
                .collect(),
        };
        pts.sort();
        pts.dedup();
        pts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub point: GridPoint,
    /// Per-repetition test accuracy in [0, 1]; empty when training failed.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation of `accuracies`.
    pub std: f64,
    pub failure: Option<String>,
}

impl PointResult {
    fn from_accuracies(point: GridPoint, accuracies: Vec<f64>) -> Self {
        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n.max(1.0);
        let var = if accuracies.len() > 1 {
            accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        PointResult {
            point,
            accuracies,
            mean,
            std: var.sqrt(),
            failure: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub subset: FeatureSubset,
    pub classifier: Classifier,
    pub points: Vec<PointResult>,
    /// Index into `points` of the best mean accuracy.
    pub best: Option<usize>,
}

impl ExperimentResult {
    pub fn best_point(&self) -> Option<&PointResult> {
        self.best.map(|i| &self.points[i])
    }

    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| p.failure.is_some()).count()
    }
}

/// Seed for one training run, mixed from the evaluation seed and the run's
/// coordinates with SplitMix64.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base;
    for &p in parts {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Input rows of `subset` for one repetition under `mode`.
fn rows_for(matrix: &FeatureMatrix, subset: FeatureSubset, mode: NormalizationMode, split: &Split) -> Result<Vec<Vec<f64>>> {
    let raw = matrix.subset_inputs(subset);
    Ok(match mode {
        NormalizationMode::Full => raw,
        NormalizationMode::TrainOnly => {
            let train: Vec<Vec<f64>> = split.train.iter().map(|&i| raw[i].clone()).collect();
            let norm = Normalization::fit(&train)?;
            raw.iter().map(|r| norm.apply(r)).collect()
        }
    })
}

fn accuracy(predicted: impl Iterator<Item = Side>, truth: impl Iterator<Item = Side>) -> f64 {
    let mut n = 0;
    let mut hits = 0;
    for (p, t) in predicted.zip(truth) {
        n += 1;
        hits += (p == t) as usize;
    }
    hits as f64 / n.max(1) as f64
}

fn svm_split_accuracy(
    gram: &DMatrix<f64>,
    labels: &[Side],
    split: &Split,
    cfg: &SvmConfig,
) -> Result<f64> {
    let y: Vec<f64> = split.train.iter().map(|&i| svm_label(labels[i])).collect();
    let sub = DMatrix::from_fn(split.train.len(), split.train.len(), |a, b| gram[(split.train[a], split.train[b])]);
    let sol = solve_smo(&sub, &y, cfg)?;
    let predicted = split.test.iter().map(|&t| {
        let f: f64 = split
            .train
            .iter()
            .zip(&sol.alpha)
            .zip(&y)
            .filter(|((_, a), _)| **a > 0.0)
            .map(|((&i, a), yi)| a * yi * gram[(i, t)])
            .sum::<f64>()
            + sol.bias;
        crate::learn::side_from_svm_label(f)
    });
    Ok(accuracy(predicted, split.test.iter().map(|&t| labels[t])))
}

fn evaluate_point(
    matrix: &FeatureMatrix,
    subset: FeatureSubset,
    point: GridPoint,
    plan: &SplitPlan,
    mode: NormalizationMode,
    cfg: &GridConfig,
) -> Result<Vec<f64>> {
    let labels = &matrix.targets;
    let mut shared_gram: Option<DMatrix<f64>> = None;
    let mut accs = Vec::with_capacity(plan.splits.len());
    for (rep, split) in plan.splits.iter().enumerate() {
        let acc = match point {
            GridPoint::Svm { degree, gamma } => {
                let kernel = AnovaKernel::new(gamma as f64, degree)?;
                let gram = match (mode, &shared_gram) {
                    (NormalizationMode::Full, Some(g)) => g.clone(),
                    _ => {
                        let g = kernel.gram(&rows_for(matrix, subset, mode, split)?);
                        if mode == NormalizationMode::Full {
                            shared_gram = Some(g.clone());
                        }
                        g
                    }
                };
                svm_split_accuracy(&gram, labels, split, &cfg.svm)?
            }
            GridPoint::Nn { hidden } => {
                let rows = rows_for(matrix, subset, mode, split)?;
                let all = LabeledDataset::new(rows, labels.clone())?;
                let seed = derive_seed(plan.seed, &[rep as u64, hidden as u64, subset as u64]);
                let model = TrainedModel::Nn(train_nn(&all.subset(&split.train), hidden, &cfg.mlp, seed)?);
                model.accuracy(&all.subset(&split.test))?
            }
        };
        accs.push(acc);
    }
    Ok(accs)
}

/// Trains and tests every grid point of `classifier` on every repetition.
/// Failed points are recorded and skipped.
pub fn run_grid(
    matrix: &FeatureMatrix,
    subset: FeatureSubset,
    classifier: Classifier,
    plan: &SplitPlan,
    mode: NormalizationMode,
    cfg: &GridConfig,
) -> ExperimentResult {
    let mut points: Vec<PointResult> = cfg
        .points(classifier)
        .into_par_iter()
        .map(|point| match evaluate_point(matrix, subset, point, plan, mode, cfg) {
            Ok(accuracies) => PointResult::from_accuracies(point, accuracies),
            Err(e) => {
                log::warn!("{subset} {point}: {e}");
                PointResult {
                    point,
                    accuracies: Vec::new(),
                    mean: f64::NAN,
                    std: f64::NAN,
                    failure: Some(e.to_string()),
                }
            }
        })
        .collect();
    points.sort_by_key(|p| p.point);
    let mut best: Option<usize> = None;
    for (i, p) in points.iter().enumerate() {
        if p.failure.is_none() && best.is_none_or(|b| p.mean > points[b].mean) {
            best = Some(i);
        }
    }
    ExperimentResult {
        subset,
        classifier,
        points,
        best,
    }
}
