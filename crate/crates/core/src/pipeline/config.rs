use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artifact::AarConfig;
use crate::dsp::{FilterMode, DEFAULT_NOTCH_Q, MOTOR_MONTAGE};
use crate::edf::SubsetSpec;
use crate::epoch::AnalysisType;
use crate::error::{Error, Result};
use crate::eval::{EvalConfig, SynthSpec};
use crate::ica::IcaConfig;

pub const DATA_DIR_ENV: &str = "EEGFIST_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Channels kept for epoching, ICA and features, in feature order.
    pub montage: Vec<String>,
    /// Broadband filter edges (Hz). An upper edge at or above Nyquist
    /// leaves only the highpass.
    pub bandpass_hz: [f64; 2],
    pub bandpass_order: usize,
    /// Line-noise notch centre (Hz); 0 disables it.
    pub notch_hz: f64,
    pub notch_q: f64,
    pub filter_mode: FilterMode,
    pub artifact_removal: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            montage: MOTOR_MONTAGE.iter().map(|s| s.to_string()).collect(),
            bandpass_hz: [0.5, 90.0],
            bandpass_order: 4,
            notch_hz: 50.0,
            notch_q: DEFAULT_NOTCH_Q,
            filter_mode: FilterMode::ZeroPhase,
            artifact_removal: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data_dir: PathBuf,
    pub cache_dir: PathBuf,
    pub output_dir: PathBuf,
    pub subset: SubsetSpec,
    pub preprocess: PreprocessConfig,
    pub aar: AarConfig,
    pub analyses: Vec<AnalysisType>,
    pub ica: IcaConfig,
    pub evaluation: EvalConfig,
    /// Generate records instead of reading `data_dir`.
    pub synthetic: Option<SynthSpec>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            data_dir: PathBuf::from("data"),
            cache_dir: PathBuf::from(".eegfist-cache"),
            output_dir: PathBuf::from("results"),
            subset: SubsetSpec::default(),
            preprocess: PreprocessConfig::default(),
            aar: AarConfig::default(),
            analyses: AnalysisType::ALL.to_vec(),
            ica: IcaConfig::default(),
            evaluation: EvalConfig::default(),
            synthetic: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// One seed for every stochastic stage.
    pub fn set_seed(&mut self, seed: u64) {
        self.ica.seed = seed;
        self.evaluation.seed = seed;
        if let Some(s) = &mut self.synthetic {
            s.seed = seed;
        }
    }

    /// Uses `EEGFIST_DATA_DIR` for the data directory when it is set.
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            if !dir.is_empty() {
                self.data_dir = PathBuf::from(dir);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.synthetic.is_none() {
            self.subset.validate()?;
        }
        if let Some(s) = &self.synthetic {
            s.validate()?;
        }
        if self.preprocess.montage.is_empty() {
            return Err(Error::Config("montage must list at least one channel".into()));
        }
        if self.analyses.is_empty() {
            return Err(Error::Config("at least one analysis type is required".into()));
        }
        let [lo, hi] = self.preprocess.bandpass_hz;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::Config(format!("bandpass edges {lo}..{hi} Hz are not increasing")));
        }
        if self.evaluation.repetitions == 0 {
            return Err(Error::Config("evaluation.repetitions must be at least 1".into()));
        }
        Ok(())
    }
}

/// Every configuration key with its default and meaning, for `--help`.
pub const CONFIG_KEYS: &[(&str, &str, &str)] = &[
    ("data_dir", "\"data\"", "dataset root holding Sxxx/SxxxRyy.edf (env EEGFIST_DATA_DIR overrides)"),
    ("cache_dir", "\".eegfist-cache\"", "stage cache, keyed by content hash"),
    ("output_dir", "\"results\"", "reports, feature matrix, models and manifest"),
    ("subset.subjects", "[1, 2, 3, 4, 5, 6]", "subjects S001..S006"),
    ("subset.runs", "[3, 7, 11]", "executed left/right fist runs"),
    ("preprocess.montage", "[FC3, FCZ, FC4, C3, C1, CZ, C2, C4]", "motor montage, in feature order"),
    ("preprocess.bandpass_hz", "[0.5, 90.0]", "broadband Butterworth filter; upper edge above Nyquist means highpass only"),
    ("preprocess.bandpass_order", "4", "Butterworth prototype order"),
    ("preprocess.notch_hz", "50.0", "line-noise notch centre, 0 disables"),
    ("preprocess.notch_q", "35.0", "notch quality factor"),
    ("preprocess.filter_mode", "\"zero_phase\"", "zero_phase or causal"),
    ("preprocess.artifact_removal", "true", "run EOG then EMG component removal"),
    ("aar.scope", "\"montage\"", "montage (8 channels) or full (every channel) before removal"),
    ("aar.max_lag", "50", "largest covariance lag for the blind source separation"),
    ("aar.eog_threshold", "0.6", "share of power below aar.eog_cutoff_hz that flags an EOG component"),
    ("aar.eog_cutoff_hz", "4.0", "EOG band upper edge"),
    ("aar.emg_threshold", "0.6", "share of power above aar.emg_cutoff_hz that flags an EMG component"),
    ("aar.emg_cutoff_hz", "30.0", "EMG band lower edge"),
    ("aar.emg_min_slope", "-0.5", "minimum log-log spectral slope of an EMG component"),
    ("aar.frontal_labels", "[FC3, FCZ, FC4]", "channels an EOG component must peak on"),
    ("analyses", "[erd, ers, mrcp]", "windows (-2, 0) s, (4.1, 5.1) s, (-2, 0) s around onset"),
    ("ica.seed", "7", "sample-order seed (--seed)"),
    ("ica.max_steps", "2048", "passes before giving up"),
    ("ica.tolerance", "1e-6", "squared weight change, relative to the mean squared row norm, that ends training"),
    ("ica.learning_rate", "0.00065 / ln(channels)", "initial learning rate when unset"),
    ("ica.anneal_degrees", "60.0", "update turn that triggers learning-rate annealing"),
    ("ica.anneal_factor", "0.98 (extended) / 0.9", "learning-rate annealing factor"),
    ("ica.extended", "true", "switch sub-Gaussian components to the sub-Gaussian score"),
    ("ica.order", "\"channel_assignment\"", "channel_assignment or variance component ordering"),
    ("evaluation.seed", "7", "split and network-initialisation seed (--seed)"),
    ("evaluation.repetitions", "10", "random train/test splits"),
    ("evaluation.train_fraction", "0.8", "training share of each split"),
    ("evaluation.split_mode", "\"stratified\"", "stratified, unstratified or diagnostic"),
    ("evaluation.normalization", "\"full\"", "full (whole matrix before splitting) or train-only"),
    ("evaluation.subsets", "[all, px, mx, ex, pmx, mex, pex]", "feature subsets"),
    ("evaluation.classifiers", "[nn, svm]", "classifiers"),
    ("evaluation.grid.nn_hidden", "1..=20", "hidden-node grid"),
    ("evaluation.grid.svm_degrees", "1..=10", "Anova kernel degree grid"),
    ("evaluation.grid.svm_gammas", "1..=10", "Anova kernel gamma grid"),
    ("evaluation.grid.svm.c", "1.0", "SVM box constraint"),
    ("evaluation.grid.svm.tolerance", "1e-3", "SMO stopping tolerance"),
    ("evaluation.grid.mlp.learning_rate", "0.1", "initial gradient-descent step"),
    ("evaluation.grid.mlp.max_epochs", "2000", "training epochs"),
    ("evaluation.grid.mlp.min_improvement", "1e-7", "loss improvement counted as progress"),
    ("evaluation.grid.mlp.patience", "50", "epochs without progress before stopping"),
    ("evaluation.grid.mlp.init_range", "0.5", "uniform initial weight range"),
    ("synthetic", "unset", "table of synthetic-record settings; replaces the dataset when present"),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(PipelineConfig::from_toml("").unwrap(), cfg);
    }

    #[test]
    fn partial_file_and_unknown_keys() {
        let cfg = PipelineConfig::from_toml("[evaluation]\nrepetitions = 3\nsubsets = [\"pex\"]\n").unwrap();
        assert_eq!(cfg.evaluation.repetitions, 3);
        assert_eq!(cfg.ica, IcaConfig::default());
        assert!(PipelineConfig::from_toml("colour = 1").is_err());
    }

    #[test]
    fn seed_reaches_every_stage() {
        let mut cfg = PipelineConfig {
            synthetic: Some(SynthSpec::default()),
            ..PipelineConfig::default()
        };
        cfg.set_seed(99);
        assert_eq!(cfg.ica.seed, 99);
        assert_eq!(cfg.evaluation.seed, 99);
        assert_eq!(cfg.synthetic.unwrap().seed, 99);
    }
}
