use serde::{Deserialize, Serialize};

use super::grid::{run_grid, Classifier, ExperimentResult, GridConfig, NormalizationMode};
use super::splits::{SplitMode, SplitPlan, DEFAULT_REPETITIONS, DEFAULT_TRAIN_FRACTION};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureSubset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub seed: u64,
    pub repetitions: usize,
    pub train_fraction: f64,
    pub split_mode: SplitMode,
    pub normalization: NormalizationMode,
    pub subsets: Vec<FeatureSubset>,
    pub classifiers: Vec<Classifier>,
    pub grid: GridConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            seed: 7,
            repetitions: DEFAULT_REPETITIONS,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            split_mode: SplitMode::Stratified,
            normalization: NormalizationMode::Full,
            subsets: FeatureSubset::ALL.to_vec(),
            classifiers: Classifier::ALL.to_vec(),
            grid: GridConfig::default(),
        }
    }
}

/// Everything needed to render a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub n_rows: usize,
    pub seed: u64,
    pub repetitions: usize,
    pub train_fraction: f64,
    pub split_mode: SplitMode,
    pub normalization: NormalizationMode,
    /// One entry per (subset, classifier), in report order.
    pub experiments: Vec<ExperimentResult>,
}

impl ResultTable {
    pub fn get(&self, subset: FeatureSubset, classifier: Classifier) -> Option<&ExperimentResult> {
        self.experiments
            .iter()
            .find(|e| e.subset == subset && e.classifier == classifier)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// Runs every requested (subset, classifier) grid on one shared split plan.
///
/// With [`NormalizationMode::Full`] the matrix must already be normalized.
pub fn evaluate(matrix: &FeatureMatrix, cfg: &EvalConfig) -> Result<ResultTable> {
    if cfg.subsets.is_empty() || cfg.classifiers.is_empty() {
        return Err(Error::Config("evaluation needs at least one subset and one classifier".into()));
    }
    if cfg.repetitions == 0 {
        return Err(Error::Config("repetitions must be at least 1".into()));
    }
    if cfg.normalization == NormalizationMode::Full && matrix.normalization.is_none() {
        return Err(Error::InvalidInput(
            "full-matrix normalization selected but the matrix is not normalized".into(),
        ));
    }
    let plan = SplitPlan::new(
        &matrix.targets,
        cfg.seed,
        cfg.split_mode,
        cfg.repetitions,
        cfg.train_fraction,
    )?;
    let mut subsets = cfg.subsets.clone();
    subsets.sort();
    subsets.dedup();
    let mut classifiers = cfg.classifiers.clone();
    classifiers.sort();
    classifiers.dedup();
    let mut experiments = Vec::new();
    for &subset in &subsets {
        for &classifier in &classifiers {
            log::info!("evaluating {} / {classifier}", subset.label());
            experiments.push(run_grid(matrix, subset, classifier, &plan, cfg.normalization, &cfg.grid));
        }
    }
    Ok(ResultTable {
        n_rows: matrix.n_rows(),
        seed: cfg.seed,
        repetitions: cfg.repetitions,
        train_fraction: cfg.train_fraction,
        split_mode: cfg.split_mode,
        normalization: cfg.normalization,
        experiments,
    })
}
