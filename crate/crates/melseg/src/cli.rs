//! Command-line front end: corpus → train → IC → pseudo-train → segment →
//! evaluate → plot, driven by one flat JSON config document.
//!
//! Every command is a pure function of (input files, config, seed):
//! re-running with the same inputs produces byte-identical outputs. All
//! file writes are atomic (write to a temporary file in the target
//! directory, then rename). Exit codes: 0 success, 1 validation error
//! (bad flags, malformed or unknown config keys, inputs that fail to load
//! or schema-validate), 2 runtime error (training, sampling, or output
//! failures).
//!
//! The master seed resolves with precedence: `--seed` flag, then the
//! `MELSEG_SEED` environment variable, then the config file's `seed` key.

use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::baselines::{
    baseline_always, baseline_digram, baseline_gpr2a, baseline_never, DigramMethod, DigramStats,
};
use crate::corpus::{boundary_vector, load_corpus, parse_melody, serialize_melody, Corpus, Melody};
use crate::encoding::{derive_seed, encode_corpus, ViewpointConfig};
use crate::evalharness::{
    emit_aggregate_csv, emit_f_scores_csv, emit_rows_csv, emit_text_table,
    generate_synthetic_corpus, run_cv, EvalError, EvalReport, Pipeline, PipelineSpec, SynthSpec,
};
use crate::infocontent::{bsp_for_melody, bsp_from_csv, bsp_to_csv, Bsp};
use crate::peakpick::{
    pick_boundaries, PeakPickConfig, VarianceMode, RAW_K_SET, SMOOTHED_K_SET,
};
use crate::pseudosup::{pretrain_config, smooth_corpus, smoothed_bsp, FineTuneConfig};
use crate::rbm::{train_fpcd, RbmModel, TrainConfig};
use crate::sampler::SamplerConfig;

pub const SEGMENTATION_CSV_HEADER: &str = "melody_id,note_index,boundary";

/// Errors split by exit code: validation failures exit 1, runtime
/// failures exit 2.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(msg) => write!(f, "{msg}"),
            CliError::Runtime(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

fn validation(msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(msg.to_string())
}

fn runtime(msg: impl std::fmt::Display) -> CliError {
    CliError::Runtime(msg.to_string())
}

fn eval_err(e: EvalError) -> CliError {
    match e {
        EvalError::InvalidSpec(_) | EvalError::FoldTooSmall { .. } => validation(e),
        other => runtime(other),
    }
}

/// Flat key/value run configuration. Every hyperparameter of training,
/// sampling, fine-tuning, and peak picking is a top-level key; unknown
/// keys are rejected with a message naming the key. Missing keys take the
/// reference defaults shown by `--help`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed (overridden by MELSEG_SEED, then by --seed).
    pub seed: u64,
    /// n-gram length.
    pub ngram: usize,
    /// RBM hidden units.
    pub hidden: usize,
    /// Cross-validation folds.
    pub folds: usize,
    // RBM training.
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub fast_lr_start: f64,
    pub fast_lr_end: f64,
    pub fast_decay: f64,
    pub l2: f64,
    pub sparsity_mu: f64,
    pub sparsity_phi: f64,
    pub dropout_hidden: f64,
    pub dropout_visible: f64,
    pub n_chains: usize,
    // Sampler.
    pub n_particles: usize,
    pub gibbs_steps: usize,
    // Feed-forward fine-tuning.
    pub ft_epochs: usize,
    pub ft_batch_size: usize,
    pub ft_learning_rate: f64,
    pub ft_momentum: f64,
    pub ft_l2: f64,
    pub ft_dropout_hidden: f64,
    pub ft_dropout_input: f64,
    /// Optional second hidden layer width for the smoothing network.
    pub second_hidden: Option<usize>,
    // Peak picking.
    pub k: f64,
    pub variance: VarianceMode,
    pub raw_k_set: Vec<f64>,
    pub smoothed_k_set: Vec<f64>,
    // Optional path fallbacks for commands run without path flags.
    pub corpus: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let sampler = SamplerConfig::default();
        let ft = FineTuneConfig::default();
        RunConfig {
            seed: 0,
            ngram: 3,
            hidden: 200,
            folds: 5,
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            momentum: train.momentum,
            fast_lr_start: train.fast_lr_start,
            fast_lr_end: train.fast_lr_end,
            fast_decay: train.fast_decay,
            l2: train.l2,
            sparsity_mu: train.sparsity_mu,
            sparsity_phi: train.sparsity_phi,
            dropout_hidden: train.dropout_hidden,
            dropout_visible: train.dropout_visible,
            n_chains: train.n_chains,
            n_particles: sampler.n_particles,
            gibbs_steps: sampler.gibbs_steps,
            ft_epochs: ft.epochs,
            ft_batch_size: ft.batch_size,
            ft_learning_rate: ft.learning_rate,
            ft_momentum: ft.momentum,
            ft_l2: ft.l2,
            ft_dropout_hidden: ft.dropout_hidden,
            ft_dropout_input: ft.dropout_input,
            second_hidden: None,
            k: PeakPickConfig::default().k,
            // Conventional weighted variance: the literal as-printed form
            // suppresses all interior peaks on realistic profiles, so the
            // CLI defaults to the form the published k sets work under.
            variance: VarianceMode::StandardWeighted,
            raw_k_set: RAW_K_SET.to_vec(),
            smoothed_k_set: SMOOTHED_K_SET.to_vec(),
            corpus: None,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = read_input(p)?;
                serde_json::from_str(&text)
                    .map_err(|e| validation(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            fast_lr_start: self.fast_lr_start,
            fast_lr_end: self.fast_lr_end,
            fast_decay: self.fast_decay,
            l2: self.l2,
            sparsity_mu: self.sparsity_mu,
            sparsity_phi: self.sparsity_phi,
            dropout_hidden: self.dropout_hidden,
            dropout_visible: self.dropout_visible,
            n_chains: self.n_chains,
            seed,
        }
    }

    pub fn sampler_config(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            n_particles: self.n_particles,
            gibbs_steps: self.gibbs_steps,
            seed,
        }
    }

    pub fn finetune_config(&self, seed: u64) -> FineTuneConfig {
        FineTuneConfig {
            epochs: self.ft_epochs,
            batch_size: self.ft_batch_size,
            learning_rate: self.ft_learning_rate,
            momentum: self.ft_momentum,
            l2: self.ft_l2,
            dropout_hidden: self.ft_dropout_hidden,
            dropout_input: self.ft_dropout_input,
            seed,
        }
    }

    pub fn pick_config(&self) -> PeakPickConfig {
        PeakPickConfig {
            k: self.k,
            variance: self.variance,
        }
    }

    /// Cross-validation spec for one pipeline at n-gram length `n`.
    pub fn pipeline_spec(&self, pipeline: Pipeline, n: usize) -> PipelineSpec {
        let k_set = if pipeline == Pipeline::RbmPseudo {
            self.smoothed_k_set.clone()
        } else {
            self.raw_k_set.clone()
        };
        PipelineSpec {
            pipeline,
            n,
            hidden: self.hidden,
            viewpoint: ViewpointConfig::default(),
            train: self.train_config(self.seed),
            sampler: self.sampler_config(self.seed),
            finetune: self.finetune_config(self.seed),
            second_hidden: self.second_hidden,
            variance: self.variance,
            k_set,
        }
    }
}

/// Resolve the master seed with precedence: flag, then MELSEG_SEED, then
/// the config file.
fn effective_seed(
    flag: Option<u64>,
    env: Option<&str>,
    config: &RunConfig,
) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(v) = env {
        return v
            .trim()
            .parse()
            .map_err(|_| validation(format!("MELSEG_SEED is not an unsigned integer: `{v}`")));
    }
    Ok(config.seed)
}

#[derive(Debug, Parser)]
#[command(
    name = "melseg",
    version,
    about = "Segments monophonic melodies at information-content peaks under an RBM n-gram model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
    /// Flat JSON config file (default: built-in reference values).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides MELSEG_SEED and the config key (default: 0).
    #[arg(long, global = true, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Worker thread cap; outputs are independent of it (default: all cores).
    #[arg(long, global = true, value_name = "T")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Train an RBM n-gram model and write it as JSON.
    Train(TrainArgs),
    /// Estimate per-note information content and write a BSP CSV.
    Ic(IcArgs),
    /// Fit the pseudo-supervised smoothing network; write it and smoothed BSPs.
    Pseudo(PseudoArgs),
    /// Threshold a BSP CSV into boundary decisions.
    Segment(SegmentArgs),
    /// Run a rule or digram baseline over a corpus.
    Baseline(BaselineArgs),
    /// Cross-validate a pipeline and write report files.
    Cv(CvArgs),
    /// Generate a synthetic corpus with planted phrase boundaries.
    Synth(SynthArgs),
    /// Render a melody's BSP as an SVG panel with a data CSV beside it.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus directory or manifest file.
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    /// n-gram length (default: config `ngram`, 3).
    #[arg(long, value_name = "N")]
    pub ngram: Option<usize>,
    /// Output model file (JSON).
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IcArgs {
    /// Trained RBM model file.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Corpus directory or manifest file.
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    /// Output BSP CSV.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PseudoArgs {
    /// Trained RBM model file.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Corpus directory or manifest file.
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    /// Output network file (JSON).
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Smoothed BSP CSV (default: --out with its extension replaced by `bsp.csv`).
    #[arg(long, value_name = "FILE")]
    pub bsp_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// BSP CSV to threshold.
    #[arg(long, value_name = "FILE")]
    pub bsp: PathBuf,
    /// Threshold multiplier (default: config `k`, 0.85).
    #[arg(long, value_name = "K")]
    pub k: Option<f64>,
    /// Running-variance form: as-printed or standard-weighted (default: config `variance`).
    #[arg(long, value_name = "MODE")]
    pub variance: Option<String>,
    /// Output segmentation CSV.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// One of: always, never, gpr2a, tp, pmi.
    #[arg(long, value_name = "METHOD")]
    pub method: String,
    /// Corpus directory or manifest file.
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    /// Output CSV: segmentation for rule methods, BSP for tp/pmi.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    /// Corpus directory or manifest file.
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    /// Pipeline: rbm, rbm+ps, or baseline:<always|never|gpr2a|tp|pmi>.
    #[arg(long, value_name = "NAME")]
    pub pipeline: String,
    /// Inclusive n-gram sweep `a..b` or a single `n` (default: config `ngram`).
    #[arg(long, value_name = "A..B")]
    pub ngram_range: Option<String>,
    /// Directory for report files (default: config `out_dir`).
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator spec JSON (default: built-in: 200 melodies, 4-8 phrases of 5-12 notes).
    #[arg(long, value_name = "FILE")]
    pub spec: Option<PathBuf>,
    /// Directory for melody CSVs and manifest.txt (default: config `out_dir`).
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// BSP CSV holding the melody's profile.
    #[arg(long, value_name = "FILE")]
    pub bsp: PathBuf,
    /// Melody CSV file.
    #[arg(long, value_name = "FILE")]
    pub melody: PathBuf,
    /// Truth segmentation CSV (default: the melody's phrase-start column).
    #[arg(long, value_name = "FILE")]
    pub truth: Option<PathBuf>,
    /// Predicted segmentation CSV (default: no predicted lines).
    #[arg(long, value_name = "FILE")]
    pub pred: Option<PathBuf>,
    /// Output SVG; the plotted data lands beside it as CSV.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

/// Parse flags, run the chosen command, and map errors to exit codes.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli, std::env::var("MELSEG_SEED").ok().as_deref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Dispatch a parsed invocation. `env_seed` carries MELSEG_SEED when set.
pub fn run(cli: Cli, env_seed: Option<&str>) -> Result<(), CliError> {
    let config = RunConfig::load(cli.config.as_deref())?;
    let seed = effective_seed(cli.seed, env_seed, &config)?;
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(validation("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| runtime(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Cmd::Train(args) => cmd_train(&config, seed, &args),
        Cmd::Ic(args) => cmd_ic(&config, seed, &args),
        Cmd::Pseudo(args) => cmd_pseudo(&config, seed, &args),
        Cmd::Segment(args) => cmd_segment(&config, &args),
        Cmd::Baseline(args) => cmd_baseline(&config, &args),
        Cmd::Cv(args) => cmd_cv(&config, seed, &args),
        Cmd::Synth(args) => cmd_synth(&config, seed, &args),
        Cmd::Plot(args) => cmd_plot(&args),
    }
}

fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| validation(format!("{}: {e}", path.display())))
}

/// Atomic write: the content lands in a temporary file in the target's
/// directory and is renamed over the destination.
fn write_atomic(path: &Path, content: &str) -> Result<(), CliError> {
    use std::io::Write as _;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let err = |e: &dyn std::fmt::Display| runtime(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| err(&e))?;
    tmp.write_all(content.as_bytes()).map_err(|e| err(&e))?;
    tmp.persist(path).map_err(|e| err(&e))?;
    Ok(())
}

fn corpus_path<'a>(flag: &'a Option<PathBuf>, config: &'a RunConfig) -> Result<&'a Path, CliError> {
    flag.as_deref()
        .or(config.corpus.as_deref())
        .ok_or_else(|| validation("no corpus given: pass --corpus or set `corpus` in the config"))
}

fn out_dir_path<'a>(
    flag: &'a Option<PathBuf>,
    config: &'a RunConfig,
) -> Result<&'a Path, CliError> {
    flag.as_deref()
        .or(config.out_dir.as_deref())
        .ok_or_else(|| validation("no output directory: pass --out-dir or set `out_dir`"))
}

fn load_corpus_validated(path: &Path) -> Result<Corpus, CliError> {
    load_corpus(path).map_err(|e| validation(e))
}

fn load_rbm(path: &Path) -> Result<RbmModel, CliError> {
    let text = read_input(path)?;
    RbmModel::from_json(&text).map_err(|e| validation(format!("{}: {e}", path.display())))
}

fn cmd_train(config: &RunConfig, seed: u64, args: &TrainArgs) -> Result<(), CliError> {
    let n = args.ngram.unwrap_or(config.ngram);
    if n == 0 {
        return Err(validation("--ngram must be at least 1"));
    }
    let corpus = load_corpus_validated(corpus_path(&args.corpus, config)?)?;
    let batch = encode_corpus(&corpus, n, &ViewpointConfig::default(), seed);
    let (model, _) = train_fpcd(&batch, config.hidden, &config.train_config(seed))
        .map_err(|e| runtime(e))?;
    write_atomic(&args.out, &model.to_json())
}

fn cmd_ic(config: &RunConfig, seed: u64, args: &IcArgs) -> Result<(), CliError> {
    let model = load_rbm(&args.model)?;
    let corpus = load_corpus_validated(corpus_path(&args.corpus, config)?)?;
    let sampler = config.sampler_config(seed);
    let bsps = corpus
        .melodies
        .iter()
        .map(|m| bsp_for_melody(&model, m, model.n, &sampler))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| runtime(e))?;
    write_atomic(&args.out, &bsp_to_csv(&bsps))
}

fn cmd_pseudo(config: &RunConfig, seed: u64, args: &PseudoArgs) -> Result<(), CliError> {
    let rbm = load_rbm(&args.model)?;
    let corpus = load_corpus_validated(corpus_path(&args.corpus, config)?)?;
    let sampler = config.sampler_config(derive_seed(&[seed, 1]));
    let pretrain = TrainConfig {
        seed: derive_seed(&[seed, 2]),
        ..pretrain_config(0)
    };
    let ft = config.finetune_config(derive_seed(&[seed, 3]));
    let (ffnn, _, _) = smooth_corpus(
        &rbm,
        &corpus,
        rbm.n,
        &sampler,
        &pretrain,
        &ft,
        config.second_hidden,
    )
    .map_err(|e| runtime(e))?;
    let bsps = corpus
        .melodies
        .iter()
        .map(|m| smoothed_bsp(&ffnn, m, rbm.n, sampler.seed))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| runtime(e))?;
    let bsp_out = args
        .bsp_out
        .clone()
        .unwrap_or_else(|| args.out.with_extension("bsp.csv"));
    write_atomic(&args.out, &ffnn.to_json())?;
    write_atomic(&bsp_out, &bsp_to_csv(&bsps))
}

fn parse_variance(s: &str) -> Result<VarianceMode, CliError> {
    match s {
        "as-printed" => Ok(VarianceMode::AsPrinted),
        "standard-weighted" => Ok(VarianceMode::StandardWeighted),
        other => Err(validation(format!(
            "unknown variance mode `{other}` (expected as-printed or standard-weighted)"
        ))),
    }
}

fn segmentation_to_csv(items: &[(String, Vec<u8>)]) -> String {
    use std::fmt::Write as _;
    let mut out = String::from(SEGMENTATION_CSV_HEADER);
    out.push('\n');
    for (id, bits) in items {
        for (i, b) in bits.iter().enumerate() {
            let _ = writeln!(out, "{id},{i},{}", u8::from(*b != 0));
        }
    }
    out
}

fn segmentation_from_csv(text: &str) -> Result<Vec<(String, Vec<u8>)>, CliError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != SEGMENTATION_CSV_HEADER {
        return Err(validation(format!(
            "expected header `{SEGMENTATION_CSV_HEADER}`, got `{header}`"
        )));
    }
    let mut items: Vec<(String, Vec<u8>)> = Vec::new();
    for (ln, line) in lines.enumerate() {
        let bad = |msg: &str| validation(format!("segmentation line {}: {msg}", ln + 2));
        let mut parts = line.splitn(3, ',');
        let (id, idx, bit) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(bad("expected melody_id,note_index,boundary")),
        };
        let idx: usize = idx.parse().map_err(|_| bad("bad note index"))?;
        let bit: u8 = match bit {
            "0" => 0,
            "1" => 1,
            _ => return Err(bad("boundary must be 0 or 1")),
        };
        match items.last_mut() {
            Some((last_id, bits)) if last_id == id => {
                if idx != bits.len() {
                    return Err(bad("note indices must be consecutive from 0"));
                }
                bits.push(bit);
            }
            _ => {
                if idx != 0 {
                    return Err(bad("each melody must start at note index 0"));
                }
                if items.iter().any(|(seen, _)| seen == id) {
                    return Err(bad("melody rows must be contiguous"));
                }
                items.push((id.to_string(), vec![bit]));
            }
        }
    }
    Ok(items)
}

fn cmd_segment(config: &RunConfig, args: &SegmentArgs) -> Result<(), CliError> {
    let k = args.k.unwrap_or(config.k);
    if !(k > 0.0) {
        return Err(validation(format!("k must be positive, got {k}")));
    }
    let variance = match &args.variance {
        Some(s) => parse_variance(s)?,
        None => config.variance,
    };
    let bsps = bsp_from_csv(&read_input(&args.bsp)?).map_err(|e| validation(e))?;
    let cfg = PeakPickConfig { k, variance };
    let mut items = Vec::with_capacity(bsps.len());
    for bsp in &bsps {
        let bits = pick_boundaries(bsp, &cfg).map_err(|e| runtime(e))?;
        items.push((bsp.melody_id.clone(), bits));
    }
    write_atomic(&args.out, &segmentation_to_csv(&items))
}

fn cmd_baseline(config: &RunConfig, args: &BaselineArgs) -> Result<(), CliError> {
    enum Method {
        Rule(fn(&Melody) -> Vec<u8>),
        Digram(DigramMethod),
    }
    // Resolve the method before touching the corpus so a typo is diagnosed
    // without requiring valid input data.
    let method = match args.method.as_str() {
        "always" => Method::Rule(baseline_always),
        "never" => Method::Rule(baseline_never),
        "gpr2a" => Method::Rule(baseline_gpr2a),
        "tp" => Method::Digram(DigramMethod::Tp),
        "pmi" => Method::Digram(DigramMethod::Pmi),
        other => {
            return Err(validation(format!(
                "unknown method `{other}` (expected always, never, gpr2a, tp, or pmi)"
            )))
        }
    };
    let corpus = load_corpus_validated(corpus_path(&args.corpus, config)?)?;
    let text = match method {
        Method::Rule(f) => {
            let items: Vec<(String, Vec<u8>)> = corpus
                .melodies
                .iter()
                .map(|m| (m.id.clone(), f(m)))
                .collect();
            segmentation_to_csv(&items)
        }
        Method::Digram(method) => {
            let stats =
                DigramStats::from_melodies(&corpus.melodies, &ViewpointConfig::default())
                    .map_err(|e| validation(e))?;
            let bsps: Vec<Bsp> = corpus
                .melodies
                .iter()
                .map(|m| baseline_digram(&stats, m, method))
                .collect();
            bsp_to_csv(&bsps)
        }
    };
    write_atomic(&args.out, &text)
}

/// Inclusive `a..b` sweep, or a single `n`.
fn parse_ngram_range(s: &str) -> Result<RangeInclusive<usize>, CliError> {
    let bad = || validation(format!("bad n-gram range `{s}` (expected `a..b` or `n`)"));
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (s.trim(), s.trim()),
    };
    let lo: usize = lo.parse().map_err(|_| bad())?;
    let hi: usize = hi.parse().map_err(|_| bad())?;
    if lo == 0 || hi < lo {
        return Err(validation(format!(
            "n-gram range `{s}` must satisfy 1 <= a <= b"
        )));
    }
    Ok(lo..=hi)
}

fn cmd_cv(config: &RunConfig, seed: u64, args: &CvArgs) -> Result<(), CliError> {
    let pipeline = Pipeline::parse(&args.pipeline).map_err(|e| validation(e))?;
    let corpus = load_corpus_validated(corpus_path(&args.corpus, config)?)?;
    let out_dir = out_dir_path(&args.out_dir, config)?;
    // Rule and digram baselines have no n-gram sweep; a single run suffices.
    let range = match (&args.ngram_range, pipeline) {
        (_, p) if !matches!(p, Pipeline::Rbm | Pipeline::RbmPseudo) => {
            config.ngram..=config.ngram
        }
        (Some(s), _) => parse_ngram_range(s)?,
        (None, _) => config.ngram..=config.ngram,
    };
    let mut reports: Vec<EvalReport> = Vec::new();
    for n in range {
        let spec = config.pipeline_spec(pipeline, n);
        spec.validate().map_err(|e| validation(e))?;
        reports.push(run_cv(&corpus, &spec, config.folds, seed).map_err(eval_err)?);
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|e| runtime(format!("{}: {e}", out_dir.display())))?;
    write_atomic(&out_dir.join("cv_rows.csv"), &emit_rows_csv(&reports))?;
    write_atomic(&out_dir.join("cv_aggregate.csv"), &emit_aggregate_csv(&reports))?;
    write_atomic(&out_dir.join("cv_table.txt"), &emit_text_table(&reports))?;
    write_atomic(&out_dir.join("f_scores.csv"), &emit_f_scores_csv(&reports))
}

fn cmd_synth(config: &RunConfig, seed: u64, args: &SynthArgs) -> Result<(), CliError> {
    let spec: SynthSpec = match &args.spec {
        None => SynthSpec::default(),
        Some(p) => serde_json::from_str(&read_input(p)?)
            .map_err(|e| validation(format!("{}: {e}", p.display())))?,
    };
    let out_dir = out_dir_path(&args.out_dir, config)?;
    let corpus = generate_synthetic_corpus(&spec, seed).map_err(eval_err)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| runtime(format!("{}: {e}", out_dir.display())))?;
    let mut manifest = String::new();
    for m in &corpus.melodies {
        let name = format!("{}.csv", m.id);
        write_atomic(&out_dir.join(&name), &serialize_melody(m))?;
        manifest.push_str(&name);
        manifest.push('\n');
    }
    write_atomic(&out_dir.join("manifest.txt"), &manifest)
}

/// Boundary bits for one melody out of a segmentation CSV, checked
/// against the melody's length.
fn boundary_bits_for(
    path: &Path,
    melody: &Melody,
) -> Result<Vec<u8>, CliError> {
    let items = segmentation_from_csv(&read_input(path)?)?;
    let bits = items
        .into_iter()
        .find(|(id, _)| *id == melody.id)
        .map(|(_, bits)| bits)
        .ok_or_else(|| {
            validation(format!(
                "{}: no rows for melody `{}`",
                path.display(),
                melody.id
            ))
        })?;
    if bits.len() != melody.notes.len() {
        return Err(validation(format!(
            "{}: {} rows for melody `{}` with {} notes",
            path.display(),
            bits.len(),
            melody.id,
            melody.notes.len()
        )));
    }
    Ok(bits)
}

fn cmd_plot(args: &PlotArgs) -> Result<(), CliError> {
    let stem = args
        .melody
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let melody =
        parse_melody(&read_input(&args.melody)?, &stem).map_err(|e| validation(e))?;
    let bsps = bsp_from_csv(&read_input(&args.bsp)?).map_err(|e| validation(e))?;
    let bsp = bsps
        .iter()
        .find(|b| b.melody_id == melody.id)
        .ok_or_else(|| {
            validation(format!(
                "{}: no profile for melody `{}`",
                args.bsp.display(),
                melody.id
            ))
        })?;
    if bsp.values.len() != melody.notes.len() {
        return Err(validation(format!(
            "profile has {} values but melody `{}` has {} notes",
            bsp.values.len(),
            melody.id,
            melody.notes.len()
        )));
    }
    let truth = match &args.truth {
        Some(p) => boundary_bits_for(p, &melody)?,
        None => boundary_vector(&melody),
    };
    let pred = match &args.pred {
        Some(p) => Some(boundary_bits_for(p, &melody)?),
        None => None,
    };
    write_atomic(&args.out, &render_bsp_panel(&melody, bsp, &truth, pred.as_deref()))?;
    write_atomic(
        &args.out.with_extension("csv"),
        &plot_data_csv(&melody, bsp, &truth, pred.as_deref()),
    )
}

fn plot_data_csv(melody: &Melody, bsp: &Bsp, truth: &[u8], pred: Option<&[u8]>) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("note_index,onset,pitch,ic,truth,predicted\n");
    for (i, note) in melody.notes.iter().enumerate() {
        let predicted = pred.map(|p| p[i].to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{i},{},{},{:.8e},{},{predicted}",
            note.onset, note.pitch, bsp.values[i], truth[i]
        );
    }
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Two-panel SVG: a piano-roll strip above the boundary-strength curve,
/// with truth boundaries as gray bars across both panels and predicted
/// boundaries as dashed red lines.
pub fn render_bsp_panel(melody: &Melody, bsp: &Bsp, truth: &[u8], pred: Option<&[u8]>) -> String {
    use std::fmt::Write as _;
    assert_eq!(melody.notes.len(), bsp.values.len());
    assert_eq!(melody.notes.len(), truth.len());
    if let Some(p) = pred {
        assert_eq!(melody.notes.len(), p.len());
    }
    const W: f64 = 880.0;
    const H: f64 = 430.0;
    const LEFT: f64 = 56.0;
    const RIGHT: f64 = 16.0;
    const TOP: f64 = 34.0;
    const ROLL_H: f64 = 140.0;
    const GAP: f64 = 28.0;
    const CURVE_H: f64 = 190.0;
    let plot_w = W - LEFT - RIGHT;
    let notes = &melody.notes;
    let t0 = f64::from(notes[0].onset);
    let t1 = notes.iter().map(|n| n.offset()).max().unwrap_or(1);
    let span = (f64::from(t1) - t0).max(1.0);
    let x = |t: f64| LEFT + (t - t0) / span * plot_w;
    let pmin = notes.iter().map(|n| n.pitch).min().unwrap_or(0);
    let pmax = notes.iter().map(|n| n.pitch).max().unwrap_or(127);
    let rows = f64::from(pmax - pmin) + 1.0;
    let row_h = ROLL_H / rows;
    let pitch_y = |p: u8| TOP + f64::from(pmax - p) * row_h;
    let curve_top = TOP + ROLL_H + GAP;
    let curve_bottom = curve_top + CURVE_H;
    let vmax = bsp.values.iter().cloned().fold(0.0f64, f64::max).max(1e-9);
    let vy = |v: f64| curve_bottom - v / vmax * CURVE_H;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{LEFT}" y="20" font-size="14">{}</text>"#,
        xml_escape(&melody.id)
    );

    // Boundary markers span both panels.
    for (i, note) in notes.iter().enumerate() {
        if truth[i] != 0 {
            let bx = x(f64::from(note.onset));
            let _ = writeln!(
                svg,
                r##"<rect x="{:.2}" y="{TOP}" width="3" height="{:.2}" fill="#bbbbbb" opacity="0.6"/>"##,
                bx - 1.5,
                curve_bottom - TOP
            );
        }
    }
    if let Some(p) = pred {
        for (i, note) in notes.iter().enumerate() {
            if p[i] != 0 {
                let bx = x(f64::from(note.onset));
                let _ = writeln!(
                    svg,
                    r##"<line x1="{bx:.2}" y1="{TOP}" x2="{bx:.2}" y2="{curve_bottom:.2}" stroke="#cc3311" stroke-width="1.5" stroke-dasharray="6,4"/>"##
                );
            }
        }
    }

    // Piano-roll strip.
    for note in notes {
        let _ = writeln!(
            svg,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4477aa"/>"##,
            x(f64::from(note.onset)),
            pitch_y(note.pitch),
            (f64::from(note.duration) / span * plot_w).max(1.0),
            (row_h * 0.85).max(1.0)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="10" y="{:.2}" transform="rotate(-90 10 {0:.2})" text-anchor="middle">pitch</text>"#,
        TOP + ROLL_H / 2.0
    );

    // Boundary-strength curve with markers at note onsets.
    let points: Vec<String> = notes
        .iter()
        .zip(&bsp.values)
        .map(|(note, v)| format!("{:.2},{:.2}", x(f64::from(note.onset)), vy(*v)))
        .collect();
    let _ = writeln!(
        svg,
        r##"<polyline points="{}" fill="none" stroke="#222222" stroke-width="1.5"/>"##,
        points.join(" ")
    );
    for point in &points {
        let (px, py) = point.split_once(',').expect("point format");
        let _ = writeln!(svg, r##"<circle cx="{px}" cy="{py}" r="2.2" fill="#222222"/>"##);
    }

    // Axes for the curve panel.
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{curve_bottom:.2}" x2="{:.2}" y2="{curve_bottom:.2}" stroke="black"/>"#,
        W - RIGHT
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{curve_top:.2}" x2="{LEFT}" y2="{curve_bottom:.2}" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{vmax:.2}</text>"#,
        LEFT - 6.0,
        curve_top + 4.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">0</text>"#,
        LEFT - 6.0,
        curve_bottom + 4.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="10" y="{:.2}" transform="rotate(-90 10 {0:.2})" text-anchor="middle">bits</text>"#,
        curve_top + CURVE_H / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">ticks (16ths)</text>"#,
        LEFT + plot_w / 2.0,
        curve_bottom + 18.0
    );
    svg.push_str("</svg>\n");
    svg
}
