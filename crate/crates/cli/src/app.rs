use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use eegfist::artifact::AarScope;
use eegfist::dsp::{response_table, FilterSpec};
use eegfist::edf::{parse_runs, parse_subjects};
use eegfist::epoch::AnalysisType;
use eegfist::eval::{emit_report, synth_edf, Classifier, NormalizationMode, ReportFormat, SplitMode, SynthSpec};
use eegfist::features::FeatureSubset;
use eegfist::pipeline::{
    broadband_filter, load_result_table, outputs, run_pipeline, write_atomic, PipelineConfig, PipelineStage,
    RunOutcome, CONFIG_KEYS, DATA_DIR_ENV,
};

use crate::fetch::{fetch, FetchError, FileStatus, HttpTransport, Transport, DATASET_URL};

#[derive(Debug, Parser)]
#[command(name = "eegfist", version, about = "Left/right fist movement classification from scalp EEG")]
pub struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML configuration file; flags override its keys.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for every stochastic stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, env = DATA_DIR_ENV, value_name = "DIR")]
    data_dir: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR")]
    cache_dir: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    /// Subjects, e.g. S001..S006 or S001,S004.
    #[arg(long, global = true)]
    subjects: Option<String>,
    /// Run indices, e.g. 3,7,11.
    #[arg(long, global = true)]
    runs: Option<String>,
    /// Generate records instead of reading the dataset, e.g. depth=0.6,subjects=6.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "", value_name = "KEY=VALUE,...")]
    synthetic: Option<String>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Scope {
    Montage,
    Full,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Normalization {
    Full,
    TrainOnly,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Args, Default)]
struct CleanArgs {
    #[arg(long, value_enum)]
    aar_scope: Option<Scope>,
    #[arg(long)]
    eog_threshold: Option<f64>,
    #[arg(long)]
    emg_threshold: Option<f64>,
    /// Skip EOG and EMG component removal.
    #[arg(long)]
    no_artifact_removal: bool,
}

#[derive(Debug, Args, Default)]
struct EpochArgs {
    /// Analyses, e.g. erd,ers,mrcp.
    #[arg(long, value_delimiter = ',')]
    analysis: Option<Vec<String>>,
}

#[derive(Debug, Args, Default)]
struct IcaArgs {
    #[arg(long)]
    ica_max_steps: Option<usize>,
}

#[derive(Debug, Args, Default)]
struct EvalArgs {
    /// Feature subsets, e.g. all,px,mx,ex,pmx,mex,pex.
    #[arg(long, value_delimiter = ',')]
    subsets: Option<Vec<String>>,
    /// Classifiers, e.g. nn,svm.
    #[arg(long, value_delimiter = ',')]
    classifiers: Option<Vec<String>>,
    #[arg(long, value_enum)]
    normalization: Option<Normalization>,
    /// Stratified splits.
    #[arg(long, value_enum)]
    stratify: Option<OnOff>,
    #[arg(long)]
    repetitions: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Download and verify the dataset records into the data directory.
    Fetch {
        #[arg(long, default_value = DATASET_URL)]
        base_url: String,
    },
    /// Parse the records and summarise channels and events.
    Ingest,
    /// Filter and remove ocular and muscle artifacts.
    Clean {
        #[command(flatten)]
        clean: CleanArgs,
    },
    /// Cut event-locked epochs and isolate each analysis rhythm.
    Epoch {
        #[command(flatten)]
        clean: CleanArgs,
        #[command(flatten)]
        epoch: EpochArgs,
    },
    /// Fit one ICA model per record and analysis.
    Ica {
        #[command(flatten)]
        clean: CleanArgs,
        #[command(flatten)]
        epoch: EpochArgs,
        #[command(flatten)]
        ica: IcaArgs,
    },
    /// Build the feature matrix.
    Features {
        #[command(flatten)]
        clean: CleanArgs,
        #[command(flatten)]
        epoch: EpochArgs,
        #[command(flatten)]
        ica: IcaArgs,
    },
    /// Run the classifier grids over repeated train/test splits.
    Evaluate {
        #[command(flatten)]
        clean: CleanArgs,
        #[command(flatten)]
        epoch: EpochArgs,
        #[command(flatten)]
        ica: IcaArgs,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Print the report of the last evaluation in the output directory.
    Report {
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Write synthetic records in the dataset layout.
    Synth {
        /// Destination; defaults to the data directory.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Every stage end to end.
    Pipeline {
        #[command(flatten)]
        clean: CleanArgs,
        #[command(flatten)]
        epoch: EpochArgs,
        #[command(flatten)]
        ica: IcaArgs,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Filter design utilities.
    Dsp {
        #[command(subcommand)]
        command: DspCommand,
    },
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Debug, Subcommand)]
enum DspCommand {
    /// Magnitude response as CSV (frequency_hz, magnitude_db).
    Response {
        /// broadband, notch, mu-beta or delta.
        #[arg(long)]
        spec: String,
        /// Frequency range in Hz, e.g. 0..80.
        #[arg(long, default_value = "0..80")]
        grid: String,
        #[arg(long, default_value_t = 1024)]
        points: usize,
        #[arg(long, default_value_t = 160.0)]
        fs: f64,
    },
}

/// A failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<eegfist::Error> for CliError {
    fn from(e: eegfist::Error) -> Self {
        CliError {
            code: e.kind().exit_code(),
            message: e.to_string(),
        }
    }
}

impl From<FetchError> for CliError {
    fn from(e: FetchError) -> Self {
        CliError {
            code: e.exit_code(),
            message: e.to_string(),
        }
    }
}

fn config_error(message: impl Into<String>) -> CliError {
    CliError {
        code: 2,
        message: message.into(),
    }
}

fn config_help() -> String {
    let width = CONFIG_KEYS.iter().map(|k| k.0.len()).max().unwrap_or(0);
    let mut s = String::from("Configuration keys (TOML; default, then meaning):\n");
    for (key, default, doc) in CONFIG_KEYS {
        let _ = writeln!(s, "  {key:<width$}  {default}\n  {:<width$}  {doc}", "");
    }
    let _ = write!(
        s,
        "\nExit codes: 0 success, 2 configuration error, 3 data or parse error, 4 numerical convergence error."
    );
    s
}

pub fn command() -> clap::Command {
    Cli::command().after_help(config_help())
}

/// Parses `depth=0.6,subjects=6,runs=3,events=15,noise=2.5,seed=7`.
pub fn parse_synthetic(text: &str) -> Result<SynthSpec, String> {
    let mut spec = SynthSpec::default();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("expected key=value in --synthetic, got {part:?}"))?;
        let bad = |e: &dyn std::fmt::Display| format!("bad value for {key}: {e}");
        match key.trim() {
            "depth" => spec.erd_depth = value.parse().map_err(|e| bad(&e))?,
            "subjects" => spec.n_subjects = value.parse().map_err(|e| bad(&e))?,
            "runs" => spec.n_runs = value.parse().map_err(|e| bad(&e))?,
            "events" => spec.events_per_run = value.parse().map_err(|e| bad(&e))?,
            "noise" => spec.noise_level = value.parse().map_err(|e| bad(&e))?,
            "mu" => spec.mu_amplitude = value.parse().map_err(|e| bad(&e))?,
            "mrcp" => spec.mrcp_amplitude = value.parse().map_err(|e| bad(&e))?,
            "fs" => spec.fs = value.parse().map_err(|e| bad(&e))?,
            "seed" => spec.seed = value.parse().map_err(|e| bad(&e))?,
            other => return Err(format!("unknown --synthetic key {other:?}")),
        }
    }
    Ok(spec)
}

fn parse_list<T: std::str::FromStr<Err = eegfist::Error>>(items: &[String]) -> Result<Vec<T>, CliError> {
    items.iter().map(|s| s.trim().parse::<T>().map_err(CliError::from)).collect()
}

fn effective_config(g: &GlobalArgs) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &g.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    cfg.apply_env();
    if let Some(d) = &g.data_dir {
        cfg.data_dir = d.clone();
    }
    if let Some(d) = &g.cache_dir {
        cfg.cache_dir = d.clone();
    }
    if let Some(d) = &g.output_dir {
        cfg.output_dir = d.clone();
    }
    if let Some(s) = &g.subjects {
        cfg.subset.subjects = parse_subjects(s)?;
    }
    if let Some(r) = &g.runs {
        cfg.subset.runs = parse_runs(r)?;
    }
    if let Some(text) = &g.synthetic {
        let mut spec = parse_synthetic(text).map_err(config_error)?;
        if let Some(seed) = g.seed.or(cfg.synthetic.as_ref().map(|s| s.seed)) {
            spec.seed = seed;
        }
        cfg.synthetic = Some(spec);
    }
    if let Some(seed) = g.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

fn apply_clean(cfg: &mut PipelineConfig, a: &CleanArgs) {
    if let Some(s) = a.aar_scope {
        cfg.aar.scope = match s {
            Scope::Montage => AarScope::Montage,
            Scope::Full => AarScope::Full,
        };
    }
    if let Some(t) = a.eog_threshold {
        cfg.aar.eog_threshold = t;
    }
    if let Some(t) = a.emg_threshold {
        cfg.aar.emg_threshold = t;
    }
    if a.no_artifact_removal {
        cfg.preprocess.artifact_removal = false;
    }
}

fn apply_epoch(cfg: &mut PipelineConfig, a: &EpochArgs) -> Result<(), CliError> {
    if let Some(list) = &a.analysis {
        cfg.analyses = parse_list::<AnalysisType>(list)?;
    }
    Ok(())
}

fn apply_ica(cfg: &mut PipelineConfig, a: &IcaArgs) {
    if let Some(n) = a.ica_max_steps {
        cfg.ica.max_steps = n;
    }
}

fn apply_eval(cfg: &mut PipelineConfig, a: &EvalArgs) -> Result<(), CliError> {
    let e = &mut cfg.evaluation;
    if let Some(list) = &a.subsets {
        e.subsets = parse_list::<FeatureSubset>(list)?;
    }
    if let Some(list) = &a.classifiers {
        e.classifiers = parse_list::<Classifier>(list)?;
    }
    if let Some(n) = a.normalization {
        e.normalization = match n {
            Normalization::Full => NormalizationMode::Full,
            Normalization::TrainOnly => NormalizationMode::TrainOnly,
        };
    }
    if let Some(s) = a.stratify {
        e.split_mode = match s {
            OnOff::On => SplitMode::Stratified,
            OnOff::Off => SplitMode::Unstratified,
        };
    }
    if let Some(r) = a.repetitions {
        e.repetitions = r;
    }
    Ok(())
}

fn parse_grid(text: &str) -> Result<(f64, f64), CliError> {
    let (a, b) = text
        .split_once("..")
        .ok_or_else(|| config_error(format!("--grid expects LO..HI, got {text:?}")))?;
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| config_error(format!("--grid bound {s:?} is not a number")))
    };
    let (lo, hi) = (num(a)?, num(b)?);
    if !(hi > lo && lo >= 0.0) {
        return Err(config_error(format!("--grid range {lo}..{hi} is empty")));
    }
    Ok((lo, hi))
}

/// The named filters of the processing chain, designed at `fs`.
pub fn named_filter(name: &str, cfg: &PipelineConfig, fs: f64) -> Result<FilterSpec, CliError> {
    Ok(match name {
        "broadband" => broadband_filter(&cfg.preprocess, fs)?,
        "notch" => FilterSpec::notch(cfg.preprocess.notch_hz, cfg.preprocess.notch_q, fs)?,
        "mu-beta" | "erd" | "ers" => AnalysisType::Erd.rhythm_filter(fs)?,
        "delta" | "mrcp" => AnalysisType::Mrcp.rhythm_filter(fs)?,
        other => {
            return Err(config_error(format!(
                "unknown filter {other:?}; expected broadband, notch, mu-beta or delta"
            )))
        }
    })
}

fn ingest_summary(out: &RunOutcome) -> String {
    let mut s = String::from("record   channels  fs     samples  duration_s  left  right\n");
    for r in &out.manifest.records {
        if let Some(i) = &r.ingest {
            let _ = writeln!(
                s,
                "{:<8} {:>8}  {:<5}  {:>7}  {:>10.1}  {:>4}  {:>5}",
                r.record.to_string(),
                i.n_channels,
                i.fs,
                i.n_samples,
                i.duration_s,
                i.left_events,
                i.right_events
            );
        }
    }
    s
}

fn clean_summary(out: &RunOutcome) -> String {
    let mut s = String::from("record   stage  removed_components  variance_removed\n");
    for r in &out.manifest.records {
        for rep in &r.removals {
            let _ = writeln!(
                s,
                "{:<8} {:<6} {:<19} {:.4}",
                r.record.to_string(),
                format!("{:?}", rep.stage),
                format!("{:?}", rep.removed_component_indices),
                rep.variance_removed_fraction
            );
        }
    }
    s
}

fn epoch_summary(out: &RunOutcome) -> String {
    let mut s = String::from("record   analysis  skipped_events\n");
    for r in &out.manifest.records {
        for (a, skipped) in &r.skipped {
            let _ = writeln!(s, "{:<8} {:<9} {}", r.record.to_string(), a.to_string(), skipped.len());
        }
    }
    s
}

fn ica_summary(out: &RunOutcome) -> String {
    let mut s = String::from("record   analysis  steps  final_change  learning_rate  restarts\n");
    for r in &out.manifest.records {
        for (a, c) in &r.ica {
            let _ = writeln!(
                s,
                "{:<8} {:<9} {:>5}  {:>12.3e}  {:>13.3e}  {:>8}",
                r.record.to_string(),
                a.to_string(),
                c.steps,
                c.final_change,
                c.learning_rate,
                c.restarts
            );
        }
    }
    s
}

fn features_summary(out: &RunOutcome, dir: &Path) -> String {
    match &out.features {
        Some(f) => format!(
            "feature matrix: {} rows x {} columns\nwritten to {}\n",
            f.raw.n_rows(),
            f.raw.columns.len(),
            dir.join(outputs::FEATURES).display()
        ),
        None => String::new(),
    }
}

fn run_stage(cfg: &PipelineConfig, until: PipelineStage) -> Result<RunOutcome, CliError> {
    let out = run_pipeline(cfg, until)?;
    log::info!(
        "{} of {} stage entries reused from cache; manifest {}",
        out.manifest.cache_hits(),
        out.manifest.stages.len(),
        cfg.output_dir.join(outputs::MANIFEST).display()
    );
    Ok(out)
}

fn write_synthetic(cfg: &PipelineConfig, dest: &Path) -> Result<String, CliError> {
    let spec = cfg.synthetic.clone().unwrap_or_default();
    spec.validate()?;
    let mut s = String::new();
    for (id, bytes) in synth_edf(&spec)? {
        let path = dest.join(id.relative_path());
        write_atomic(&path, &bytes)?;
        let _ = writeln!(s, "{}", path.display());
    }
    Ok(s)
}

fn execute(cli: Cli, transport: &dyn Transport) -> Result<String, CliError> {
    let mut cfg = effective_config(&cli.global)?;
    let text = match cli.command {
        Command::Fetch { base_url } => {
            let files = fetch(&cfg.subset, &cfg.data_dir, &base_url, transport)?;
            let downloaded = files.iter().filter(|f| f.status == FileStatus::Downloaded).count();
            let mut s = String::new();
            for f in &files {
                let tag = match f.status {
                    FileStatus::Downloaded => "downloaded",
                    FileStatus::Verified => "present",
                };
                let _ = writeln!(s, "{tag:<10} {}", f.path.display());
            }
            let _ = writeln!(s, "{} files, {downloaded} downloaded", files.len());
            s
        }
        Command::Ingest => ingest_summary(&run_stage(&cfg, PipelineStage::Ingest)?),
        Command::Clean { clean } => {
            apply_clean(&mut cfg, &clean);
            clean_summary(&run_stage(&cfg, PipelineStage::Clean)?)
        }
        Command::Epoch { clean, epoch } => {
            apply_clean(&mut cfg, &clean);
            apply_epoch(&mut cfg, &epoch)?;
            epoch_summary(&run_stage(&cfg, PipelineStage::Epoch)?)
        }
        Command::Ica { clean, epoch, ica } => {
            apply_clean(&mut cfg, &clean);
            apply_epoch(&mut cfg, &epoch)?;
            apply_ica(&mut cfg, &ica);
            ica_summary(&run_stage(&cfg, PipelineStage::Ica)?)
        }
        Command::Features { clean, epoch, ica } => {
            apply_clean(&mut cfg, &clean);
            apply_epoch(&mut cfg, &epoch)?;
            apply_ica(&mut cfg, &ica);
            features_summary(&run_stage(&cfg, PipelineStage::Features)?, &cfg.output_dir)
        }
        Command::Evaluate { clean, epoch, ica, eval } | Command::Pipeline { clean, epoch, ica, eval } => {
            apply_clean(&mut cfg, &clean);
            apply_epoch(&mut cfg, &epoch)?;
            apply_ica(&mut cfg, &ica);
            apply_eval(&mut cfg, &eval)?;
            let out = run_stage(&cfg, PipelineStage::Evaluate)?;
            let mut s = features_summary(&out, &cfg.output_dir);
            if let Some(ev) = &out.evaluation {
                s.push('\n');
                s.push_str(&emit_report(&ev.table, ReportFormat::Text)?);
            }
            s
        }
        Command::Report { format } => {
            let table = load_result_table(&cfg.output_dir)?;
            let format = match format {
                Format::Text => ReportFormat::Text,
                Format::Json => ReportFormat::Json,
                Format::Csv => ReportFormat::Csv,
            };
            emit_report(&table, format)?
        }
        Command::Synth { out } => {
            let dest = out.unwrap_or_else(|| cfg.data_dir.clone());
            write_synthetic(&cfg, &dest)?
        }
        Command::Dsp {
            command: DspCommand::Response { spec, grid, points, fs },
        } => {
            let (lo, hi) = parse_grid(&grid)?;
            let filter = named_filter(&spec, &cfg, fs)?;
            let mut s = String::from("frequency_hz,magnitude_db\n");
            for (f, db) in response_table(&filter, lo, hi, points) {
                let _ = writeln!(s, "{f},{db}");
            }
            s
        }
        Command::Config => {
            cfg.validate()?;
            cfg.to_toml()?
        }
    };
    Ok(text)
}

fn init_logging(g: &GlobalArgs) {
    let level = match (g.quiet, g.verbose) {
        (true, _) => "error",
        (false, 0) => "warn",
        (false, 1) => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
}

/// Parses `args`, runs the command with `transport` for downloads, and
/// returns the text for stdout.
pub fn run_with<I, T>(args: I, transport: &dyn Transport) -> Result<String, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = command().try_get_matches_from(args).map_err(|e| CliError {
        code: if e.use_stderr() { 2 } else { 0 },
        message: e.render().to_string(),
    })?;
    let cli = Cli::from_arg_matches(&matches).map_err(|e| config_error(e.to_string()))?;
    init_logging(&cli.global);
    execute(cli, transport)
}

/// Process entry point; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match run_with(args, &HttpTransport::default()) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) if e.code == 0 => {
            print!("{}", e.message);
            0
        }
        Err(e) => {
            eprintln!("error: {}", e.message.trim_end());
            e.code
        }
    }
}
