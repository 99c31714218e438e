//! Pure per-stage transformations. Caching and I/O live in `run`.

use serde::{Deserialize, Serialize};

use super::config::{PipelineConfig, PreprocessConfig};
use crate::artifact::{clean, AarConfig, AarScope, RemovalReport};
use crate::dsp::{FilterKind, FilterSpec, MultiChannelSignal};
use crate::edf::{MovementEvent, RawRecord, RecordId};
use crate::epoch::{extract_epochs, group_by_side, isolate_rhythm, AnalysisType, EpochedDataset, SkippedEvent};
use crate::error::Result;
use crate::eval::{evaluate, Classifier, EvalConfig, GridPoint, NormalizationMode, ResultTable};
use crate::features::{
    assemble_matrix, compute_stats, normalize_columns, FeatureMatrix, FeatureSubset, FeatureVector, RowKey,
};
use crate::ica::{fit_datasets, IcaConfig, IcaModel};
use crate::learn::{train_nn, train_svm, AnovaKernel, LabeledDataset, TrainedModel};

/// A filtered, artifact-cleaned montage signal with its events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanRecord {
    pub record: RecordId,
    pub signal: MultiChannelSignal,
    pub events: Vec<MovementEvent>,
    pub removals: Vec<RemovalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisEpochs {
    pub analysis: AnalysisType,
    /// Rhythm-isolated left and right datasets.
    pub left: EpochedDataset,
    pub right: EpochedDataset,
    pub skipped: Vec<SkippedEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEpochs {
    pub record: RecordId,
    pub analyses: Vec<AnalysisEpochs>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisIca {
    pub analysis: AnalysisType,
    pub model: IcaModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordIca {
    pub record: RecordId,
    pub models: Vec<AnalysisIca>,
    /// Two rows (left, right) per analysis.
    pub features: Vec<FeatureVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Features {
    pub raw: FeatureMatrix,
    /// `raw` scaled to [0.1, 0.9] column by column.
    pub normalized: FeatureMatrix,
}

impl Features {
    /// The matrix the evaluation consumes under `mode`.
    pub fn for_mode(&self, mode: NormalizationMode) -> &FeatureMatrix {
        match mode {
            NormalizationMode::Full => &self.normalized,
            NormalizationMode::TrainOnly => &self.raw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalModel {
    pub subset: FeatureSubset,
    pub classifier: Classifier,
    pub point: GridPoint,
    pub model: TrainedModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub table: ResultTable,
    /// Best grid point of each experiment retrained on every row.
    pub models: Vec<FinalModel>,
}

/// The broadband filter `preprocess` applies.
pub fn broadband_filter(cfg: &PreprocessConfig, fs: f64) -> Result<FilterSpec> {
    let [lo, hi] = cfg.bandpass_hz;
    FilterSpec::design(FilterKind::Bandpass, &[lo, hi], cfg.bandpass_order, fs)
}

/// Broadband filter, line notch, artifact removal, then montage selection.
pub fn preprocess(
    id: RecordId,
    raw: &RawRecord,
    cfg: &PreprocessConfig,
    aar: &AarConfig,
) -> Result<CleanRecord> {
    let mut signal = raw.to_signal()?;
    if aar.scope == AarScope::Montage || !cfg.artifact_removal {
        signal = signal.select_channels(&cfg.montage)?;
    }
    signal = broadband_filter(cfg, signal.fs)?.apply(&signal, cfg.filter_mode)?;
    if cfg.notch_hz > 0.0 && cfg.notch_hz < signal.fs / 2.0 {
        signal = FilterSpec::notch(cfg.notch_hz, cfg.notch_q, signal.fs)?.apply(&signal, cfg.filter_mode)?;
    }
    let mut removals = Vec::new();
    if cfg.artifact_removal {
        let (cleaned, reports) = clean(&signal, aar)?;
        signal = cleaned.select_channels(&cfg.montage)?;
        removals = reports;
    }
    Ok(CleanRecord {
        record: id,
        signal,
        events: raw.events.clone(),
        removals,
    })
}

/// Left and right rhythm-isolated datasets for each analysis.
pub fn epoch_record(clean: &CleanRecord, analyses: &[AnalysisType]) -> Result<RecordEpochs> {
    let mut out = Vec::with_capacity(analyses.len());
    for &analysis in analyses {
        let extraction = extract_epochs(&clean.signal, &clean.events, analysis);
        let (left, right) = group_by_side(clean.record, &clean.signal.labels, extraction.epochs)?;
        out.push(AnalysisEpochs {
            analysis,
            left: isolate_rhythm(&left)?,
            right: isolate_rhythm(&right)?,
            skipped: extraction.skipped,
        });
    }
    Ok(RecordEpochs {
        record: clean.record,
        analyses: out,
    })
}

/// One model per analysis, fitted on both sides together; activations and
/// statistics are then taken per side.
pub fn ica_record(epochs: &RecordEpochs, cfg: &IcaConfig) -> Result<RecordIca> {
    let mut models = Vec::new();
    let mut features = Vec::new();
    for a in &epochs.analyses {
        let model = fit_datasets(&[&a.left, &a.right], cfg)?;
        for dataset in [&a.left, &a.right] {
            let activations = model.dataset_activations(dataset)?;
            features.push(FeatureVector {
                key: RowKey {
                    record: epochs.record,
                    analysis: a.analysis,
                    side: dataset.side,
                },
                stats: compute_stats(&activations)?,
            });
        }
        models.push(AnalysisIca {
            analysis: a.analysis,
            model,
        });
    }
    Ok(RecordIca {
        record: epochs.record,
        models,
        features,
    })
}

pub fn build_features(icas: &[RecordIca]) -> Result<Features> {
    let raw = assemble_matrix(icas.iter().flat_map(|r| r.features.iter().cloned()).collect())?;
    let normalized = normalize_columns(&raw)?;
    Ok(Features { raw, normalized })
}

fn final_model(matrix: &FeatureMatrix, subset: FeatureSubset, point: GridPoint, cfg: &EvalConfig) -> Result<TrainedModel> {
    let mut rows = matrix.subset_inputs(subset);
    if cfg.normalization == NormalizationMode::TrainOnly {
        let norm = crate::features::Normalization::fit(&rows)?;
        rows = rows.iter().map(|r| norm.apply(r)).collect();
    }
    let data = LabeledDataset::new(rows, matrix.targets.clone())?;
    Ok(match point {
        GridPoint::Nn { hidden } => TrainedModel::Nn(train_nn(&data, hidden, &cfg.grid.mlp, cfg.seed)?),
        GridPoint::Svm { degree, gamma } => TrainedModel::Svm(train_svm(
            &data,
            AnovaKernel::new(gamma as f64, degree)?,
            &cfg.grid.svm,
            cfg.seed,
        )?),
    })
}

pub fn evaluate_features(features: &Features, cfg: &EvalConfig) -> Result<Evaluation> {
    let matrix = features.for_mode(cfg.normalization);
    let table = evaluate(matrix, cfg)?;
    let mut models = Vec::new();
    for e in &table.experiments {
        if let Some(best) = e.best_point() {
            models.push(FinalModel {
                subset: e.subset,
                classifier: e.classifier,
                point: best.point,
                model: final_model(matrix, e.subset, best.point, cfg)?,
            });
        }
    }
    Ok(Evaluation { table, models })
}

/// Runs every stage in memory, without caching.
pub fn run_in_memory(cfg: &PipelineConfig, records: &[(RecordId, RawRecord)]) -> Result<(Features, Evaluation)> {
    use rayon::prelude::*;
    let icas = records
        .par_iter()
        .map(|(id, raw)| {
            let clean = preprocess(*id, raw, &cfg.preprocess, &cfg.aar)
                .map_err(|e| e.in_stage("clean", Some(id.to_string())))?;
            let epochs = epoch_record(&clean, &cfg.analyses).map_err(|e| e.in_stage("epoch", Some(id.to_string())))?;
            ica_record(&epochs, &cfg.ica).map_err(|e| e.in_stage("ica", Some(id.to_string())))
        })
        .collect::<Result<Vec<_>>>()?;
    let features = build_features(&icas).map_err(|e| e.in_stage("features", None))?;
    let evaluation = evaluate_features(&features, &cfg.evaluation).map_err(|e| e.in_stage("evaluate", None))?;
    Ok((features, evaluation))
}
