//! Cached end-to-end runs and the run manifest.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cache::{sha256_hex, stage_key, write_atomic, Cache, Cached};
use super::config::PipelineConfig;
use super::stages::{
    build_features, epoch_record, evaluate_features, ica_record, preprocess, CleanRecord, Evaluation, Features,
    FinalModel, RecordEpochs, RecordIca,
};
use crate::artifact::RemovalReport;
use crate::edf::{parse_record, resolve_subset, RecordId, Side};
use crate::epoch::{AnalysisType, SkippedEvent};
use crate::error::{Error, Result};
use crate::eval::{emit_report, synth_edf, ReportFormat, ResultTable};
use crate::ica::Convergence;
use crate::learn::MODEL_FORMAT_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineStage {
    Ingest,
    Clean,
    Epoch,
    Ica,
    Features,
    Evaluate,
}

impl PipelineStage {
    pub const ALL: [PipelineStage; 6] = [
        PipelineStage::Ingest,
        PipelineStage::Clean,
        PipelineStage::Epoch,
        PipelineStage::Ica,
        PipelineStage::Features,
        PipelineStage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PipelineStage::Ingest => "ingest",
            PipelineStage::Clean => "clean",
            PipelineStage::Epoch => "epoch",
            PipelineStage::Ica => "ica",
            PipelineStage::Features => "features",
            PipelineStage::Evaluate => "evaluate",
        }
    }
}

impl fmt::Display for PipelineStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PipelineStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PipelineStage::ALL
            .into_iter()
            .find(|st| st.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

/// What ingest keeps of a record: enough to check it without the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub record: RecordId,
    pub n_channels: usize,
    pub fs: f64,
    pub n_samples: usize,
    pub duration_s: f64,
    pub left_events: usize,
    pub right_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: PipelineStage,
    pub record: Option<RecordId>,
    pub key: String,
    pub inputs: Vec<String>,
    pub output: String,
    pub cache_hit: bool,
    pub blob: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordReport {
    pub record: RecordId,
    pub source_sha256: String,
    pub ingest: Option<IngestSummary>,
    pub removals: Vec<RemovalReport>,
    pub skipped: Vec<(AnalysisType, Vec<SkippedEvent>)>,
    pub ica: Vec<(AnalysisType, Convergence)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    /// The effective configuration after file, flag and environment merging.
    pub config: PipelineConfig,
    pub until: PipelineStage,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
    pub stages: Vec<StageEntry>,
    pub records: Vec<RecordReport>,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn cache_hits(&self) -> usize {
        self.stages.iter().filter(|s| s.cache_hit).count()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub features: Option<Features>,
    pub evaluation: Option<Evaluation>,
}

#[derive(Serialize, Deserialize)]
struct ModelsFile {
    format_version: u32,
    models: Vec<FinalModel>,
}

pub fn models_to_json(models: &[FinalModel]) -> Result<String> {
    let doc = ModelsFile {
        format_version: MODEL_FORMAT_VERSION,
        models: models.to_vec(),
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Serialization(e.to_string()))
}

pub fn models_from_json(text: &str) -> Result<Vec<FinalModel>> {
    let doc: ModelsFile = serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
    if doc.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Serialization(format!(
            "models format version {} (expected {MODEL_FORMAT_VERSION})",
            doc.format_version
        )));
    }
    Ok(doc.models)
}

pub fn config_hash(cfg: &PipelineConfig) -> Result<String> {
    let json = serde_json::to_vec(cfg).map_err(|e| Error::Serialization(e.to_string()))?;
    Ok(sha256_hex(&json))
}

/// File names written below `output_dir`.
pub mod outputs {
    pub const MANIFEST: &str = "manifest.json";
    pub const FEATURES: &str = "features.csv";
    pub const FEATURES_NORMALIZED: &str = "features_normalized.csv";
    pub const REPORT_TEXT: &str = "report.txt";
    pub const REPORT_JSON: &str = "report.json";
    pub const ACCURACIES: &str = "accuracies.csv";
    pub const MODELS: &str = "models.json";
}

fn now_s() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Raw EDF bytes for every record, read from disk or synthesised.
fn sources(cfg: &PipelineConfig) -> Result<Vec<(RecordId, Vec<u8>)>> {
    if let Some(spec) = &cfg.synthetic {
        return synth_edf(spec);
    }
    let ids = resolve_subset(&cfg.subset)?;
    ids.par_iter()
        .map(|id| {
            let path = cfg.data_dir.join(id.relative_path());
            let bytes = std::fs::read(&path)
                .map_err(|e| Error::io(&path, e).in_stage("ingest", Some(id.to_string())))?;
            Ok((*id, bytes))
        })
        .collect()
}

fn entry<T>(stage: PipelineStage, record: Option<RecordId>, inputs: Vec<String>, c: &Cached<T>) -> StageEntry {
    StageEntry {
        stage,
        record,
        key: c.key.clone(),
        inputs,
        output: c.hash.clone(),
        cache_hit: c.hit,
        blob: c.path.clone(),
    }
}

/// Runs every stage up to and including `until`, reusing cached stage
/// outputs whose key (input hashes plus stage configuration) matches.
/// Outputs and the manifest go to `cfg.output_dir`.
pub fn run_pipeline(cfg: &PipelineConfig, until: PipelineStage) -> Result<RunOutcome> {
    cfg.validate()?;
    let started = now_s();
    let cache = Cache::new(&cfg.cache_dir);
    let sources = sources(cfg)?;
    let mut stages = Vec::new();
    let mut records: Vec<RecordReport> = sources
        .iter()
        .map(|(id, bytes)| RecordReport {
            record: *id,
            source_sha256: sha256_hex(bytes),
            ingest: None,
            removals: Vec::new(),
            skipped: Vec::new(),
            ica: Vec::new(),
        })
        .collect();
    let per_record = |stage: PipelineStage, e: Error, id: RecordId| e.in_stage(stage.name(), Some(id.to_string()));

    // ingest
    let ingested: Vec<Cached<IngestSummary>> = sources
        .par_iter()
        .zip(&records)
        .map(|((id, bytes), rep)| {
            let key = stage_key("ingest", &[&rep.source_sha256], &())?;
            cache
                .get_or_compute("ingest", key, || {
                    let raw = parse_record(bytes)?;
                    Ok(IngestSummary {
                        record: *id,
                        n_channels: raw.channels.len(),
                        fs: raw.fs,
                        n_samples: raw.n_samples(),
                        duration_s: raw.duration_s(),
                        left_events: raw.events.iter().filter(|e| e.side == Side::Left).count(),
                        right_events: raw.events.iter().filter(|e| e.side == Side::Right).count(),
                    })
                })
                .map_err(|e| per_record(PipelineStage::Ingest, e, *id))
        })
        .collect::<Result<_>>()?;
    for (rep, c) in records.iter_mut().zip(&ingested) {
        stages.push(entry(PipelineStage::Ingest, Some(rep.record), vec![rep.source_sha256.clone()], c));
        rep.ingest = Some(c.value.clone());
    }

    let mut outcome = RunOutcome {
        manifest: RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash(cfg)?,
            config: cfg.clone(),
            until,
            started_unix_s: started,
            finished_unix_s: started,
            stages: Vec::new(),
            records: Vec::new(),
            outputs: Vec::new(),
        },
        features: None,
        evaluation: None,
    };

    if until >= PipelineStage::Clean {
        let clean_cfg = (&cfg.preprocess, &cfg.aar);
        let cleaned: Vec<Cached<CleanRecord>> = sources
            .par_iter()
            .zip(&records)
            .map(|((id, bytes), rep)| {
                let key = stage_key("clean", &[&rep.source_sha256], &clean_cfg)?;
                cache
                    .get_or_compute("clean", key, || {
                        let raw = parse_record(bytes)?;
                        preprocess(*id, &raw, &cfg.preprocess, &cfg.aar)
                    })
                    .map_err(|e| per_record(PipelineStage::Clean, e, *id))
            })
            .collect::<Result<_>>()?;
        drop(sources);
        for (rep, c) in records.iter_mut().zip(&cleaned) {
            stages.push(entry(PipelineStage::Clean, Some(rep.record), vec![rep.source_sha256.clone()], c));
            rep.removals = c.value.removals.clone();
        }

        if until >= PipelineStage::Epoch {
            let epoched: Vec<Cached<RecordEpochs>> = cleaned
                .par_iter()
                .map(|c| {
                    let key = stage_key("epoch", &[&c.hash], &cfg.analyses)?;
                    cache
                        .get_or_compute("epoch", key, || epoch_record(&c.value, &cfg.analyses))
                        .map_err(|e| per_record(PipelineStage::Epoch, e, c.value.record))
                })
                .collect::<Result<_>>()?;
            for ((rep, e), c) in records.iter_mut().zip(&epoched).zip(&cleaned) {
                stages.push(entry(PipelineStage::Epoch, Some(rep.record), vec![c.hash.clone()], e));
                rep.skipped = e.value.analyses.iter().map(|a| (a.analysis, a.skipped.clone())).collect();
            }

            if until >= PipelineStage::Ica {
                let icas: Vec<Cached<RecordIca>> = epoched
                    .par_iter()
                    .map(|e| {
                        let key = stage_key("ica", &[&e.hash], &cfg.ica)?;
                        cache
                            .get_or_compute("ica", key, || ica_record(&e.value, &cfg.ica))
                            .map_err(|err| per_record(PipelineStage::Ica, err, e.value.record))
                    })
                    .collect::<Result<_>>()?;
                for ((rep, i), e) in records.iter_mut().zip(&icas).zip(&epoched) {
                    stages.push(entry(PipelineStage::Ica, Some(rep.record), vec![e.hash.clone()], i));
                    rep.ica = i.value.models.iter().map(|m| (m.analysis, m.model.convergence.clone())).collect();
                }

                if until >= PipelineStage::Features {
                    let inputs: Vec<String> = icas.iter().map(|i| i.hash.clone()).collect();
                    let refs: Vec<&str> = inputs.iter().map(String::as_str).collect();
                    let key = stage_key("features", &refs, &())?;
                    let features = cache
                        .get_or_compute("features", key, || {
                            let values: Vec<RecordIca> = icas.iter().map(|i| i.value.clone()).collect();
                            build_features(&values)
                        })
                        .map_err(|e| e.in_stage("features", None))?;
                    stages.push(entry(PipelineStage::Features, None, inputs, &features));

                    if until >= PipelineStage::Evaluate {
                        let key = stage_key("evaluate", &[&features.hash], &cfg.evaluation)?;
                        let evaluation = cache
                            .get_or_compute("evaluate", key, || evaluate_features(&features.value, &cfg.evaluation))
                            .map_err(|e| e.in_stage("evaluate", None))?;
                        stages.push(entry(
                            PipelineStage::Evaluate,
                            None,
                            vec![features.hash.clone()],
                            &evaluation,
                        ));
                        outcome.evaluation = Some(evaluation.value);
                    }
                    outcome.features = Some(features.value);
                }
            }
        }
    }

    outcome.manifest.stages = stages;
    outcome.manifest.records = records;
    outcome.manifest.outputs = write_outputs(&cfg.output_dir, &outcome)?;
    outcome.manifest.finished_unix_s = now_s();
    write_atomic(
        &cfg.output_dir.join(outputs::MANIFEST),
        outcome.manifest.to_json()?.as_bytes(),
    )?;
    Ok(outcome)
}

fn write_output(dir: &Path, name: &str, bytes: &[u8], out: &mut Vec<OutputFile>) -> Result<()> {
    let path = dir.join(name);
    write_atomic(&path, bytes)?;
    out.push(OutputFile {
        path,
        sha256: sha256_hex(bytes),
    });
    Ok(())
}

fn write_outputs(dir: &Path, outcome: &RunOutcome) -> Result<Vec<OutputFile>> {
    let mut out = Vec::new();
    if let Some(f) = &outcome.features {
        write_output(dir, outputs::FEATURES, f.raw.to_csv().as_bytes(), &mut out)?;
        write_output(dir, outputs::FEATURES_NORMALIZED, f.normalized.to_csv().as_bytes(), &mut out)?;
    }
    if let Some(ev) = &outcome.evaluation {
        write_output(dir, outputs::REPORT_TEXT, emit_report(&ev.table, ReportFormat::Text)?.as_bytes(), &mut out)?;
        write_output(dir, outputs::REPORT_JSON, emit_report(&ev.table, ReportFormat::Json)?.as_bytes(), &mut out)?;
        write_output(dir, outputs::ACCURACIES, emit_report(&ev.table, ReportFormat::Csv)?.as_bytes(), &mut out)?;
        write_output(dir, outputs::MODELS, models_to_json(&ev.models)?.as_bytes(), &mut out)?;
    }
    Ok(out)
}

/// The result table saved by an earlier run in `output_dir`.
pub fn load_result_table(output_dir: &Path) -> Result<ResultTable> {
    let path = output_dir.join(outputs::REPORT_JSON);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    ResultTable::from_json(&text)
}
