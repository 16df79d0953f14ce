//! The `relex` command line: synthetic data generation, training,
//! evaluation, explanation, explanation scoring and distractor inspection.
//!
//! Every command writes a `manifest.json` (or `<file>.manifest.json`)
//! recording the command, its configuration, the configuration hash, input
//! digests and a metric summary. Exit codes: 0 success, 2 missing input or
//! bad usage, 3 validation failure, 1 anything else.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{
    build_expl_eval, generate_synthetic_corpus, load_corpus, write_corpus, Bag, CorpusError,
    GenConfig, Inventory, ReprMode,
};
use crate::distractor::{augment_bag, DistractorIndex};
use crate::encoder::EncoderConfig;
use crate::evalsuite::{kendall_report, KendallReport, ScoreTable};
use crate::explain::{ImportanceScores, Method};
use crate::models::{train, Model, ModelConfig, ModelError, ModelKind, TrainConfig};
use crate::pipeline::{evaluate, explain_corpus, label_shuffle_auc};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing input {}: {message}", path.display())]
    MissingInput { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingInput { .. } | CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { path, source } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::MissingInput {
                    path,
                    message: source.to_string(),
                }
            }
            CorpusError::Io { .. } => CliError::Other(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Corpus(c) => c.into(),
            ModelError::File { .. } => CliError::Other(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "relex", version = VERSION, about = "Bag-level relation extraction with sentence explanations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic train/test corpus.
    GenData(GenDataArgs),
    /// Train a model and write its checkpoint.
    Train(TrainArgs),
    /// Score a test corpus: precision-recall curve and AUC up to recall 0.4.
    Eval(EvalArgs),
    /// Write per-sentence importance scores for every labeled relation.
    Explain(ExplainArgs),
    /// Kendall tau of explanations against rationale annotations.
    ExplEval(ExplEvalArgs),
    /// Write bags augmented with sampled distractor sentences.
    Augment(AugmentArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// JSON generator configuration (`{}` for defaults).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Inventory written by gen-data; needed when the test split uses
    /// tokens absent from the training split.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    /// Output directory for the checkpoint and training history.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "cnns-att")]
    pub model: ModelKind,
    #[arg(long, default_value = "raw")]
    pub repr: ReprMode,
    /// Fuse entity embeddings into the bag representation.
    #[arg(long)]
    pub fusion: bool,
    /// Learn from distractors.
    #[arg(long)]
    pub ld: bool,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub validation_fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    pub negative_sample_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    pub relevance_weight: f64,
    #[arg(long, default_value_t = 300)]
    pub word_dim: usize,
    #[arg(long, default_value_t = 5)]
    pub position_dim: usize,
    /// Comma-separated convolution widths.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5")]
    pub widths: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    pub channels: usize,
    #[arg(long, default_value_t = 50)]
    pub max_distance: usize,
    #[arg(long, default_value_t = 64)]
    pub entity_dim: usize,
    /// JSON object mapping token ids to word vectors.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub test: PathBuf,
    /// Checkpoint to evaluate; repeat together with `--avg` to average runs.
    #[arg(long = "checkpoint", required = true)]
    pub checkpoints: Vec<PathBuf>,
    /// Average metrics over all given checkpoints.
    #[arg(long)]
    pub avg: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Seed of the label-shuffle baseline.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub shuffle_rounds: usize,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output JSONL file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "attention,saliency,gi,loo")]
    pub methods: Vec<Method>,
}

#[derive(Debug, Args)]
pub struct ExplEvalArgs {
    /// Annotated test corpus.
    #[arg(long)]
    pub test: PathBuf,
    /// Output of `explain`.
    #[arg(long)]
    pub explanations: PathBuf,
    /// Checkpoint whose probabilities define the confidence buckets.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Output JSONL file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// What a command produced, for callers that run the CLI in-process.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub command: String,
    pub config_hash: String,
    pub outputs: Vec<PathBuf>,
    pub metrics: Value,
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, S>(args: I) -> Result<RunSummary>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    run(cli)
}

pub fn run(cli: Cli) -> Result<RunSummary> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Explain(a) => explain_cmd(a),
        Command::ExplEval(a) => expl_eval_cmd(a),
        Command::Augment(a) => augment_cmd(a),
    }
}

/// Entry point for the binary: parses the process arguments, prints
/// errors and returns the exit code.
pub fn main_exit_code() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(summary) => {
            for p in &summary.outputs {
                println!("wrote {}", p.display());
            }
            if !summary.metrics.is_null() {
                println!("{}", summary.metrics);
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingInput {
                path: path.to_path_buf(),
                message: e.to_string(),
            }
        } else {
            CliError::Other(format!("{}: {e}", path.display()))
        }
    })
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_digest(path: &Path) -> Result<String> {
    Ok(digest(&read_input(path)?))
}

/// First 16 hex digits of the SHA-256 of the canonical JSON of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let text = serde_json::to_string(config).expect("serializable config");
    digest(text.as_bytes())[..16].to_string()
}

fn other<E: std::fmt::Display>(path: &Path) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Other(format!("{}: {e}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(other(dir))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text + "\n").map_err(other(path))
}

fn write_csv(path: &Path, seed: u64, hash: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut file = BufWriter::new(File::create(path).map_err(other(path))?);
    writeln!(file, "# seed={seed} config_hash={hash}").map_err(other(path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(other(path))?;
    for r in rows {
        w.write_record(r).map_err(other(path))?;
    }
    w.flush().map_err(other(path))
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config_hash: &'a str,
    config: &'a C,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    metrics: &'a Value,
}

fn finish<C: Serialize>(
    command: &str,
    manifest_path: &Path,
    seed: u64,
    config: &C,
    inputs: &[&Path],
    mut outputs: Vec<PathBuf>,
    metrics: Value,
) -> Result<RunSummary> {
    let hash = config_hash(config);
    let mut digests = BTreeMap::new();
    for p in inputs {
        digests.insert(p.display().to_string(), file_digest(p)?);
    }
    let manifest = Manifest {
        command,
        version: VERSION,
        seed,
        config_hash: &hash,
        config,
        inputs: digests,
        outputs: outputs
            .iter()
            .map(|p| p.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()))
            .collect(),
        metrics: &metrics,
    };
    write_json(manifest_path, &manifest)?;
    outputs.push(manifest_path.to_path_buf());
    Ok(RunSummary {
        command: command.to_string(),
        config_hash: hash,
        outputs,
        metrics,
    })
}

fn sibling_manifest(file: &Path) -> PathBuf {
    let mut s = file.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Generator output stored next to the corpus files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub inventory: Inventory,
    pub gen_config: GenConfig,
    pub seed: u64,
    pub config_hash: String,
}

fn gen_data(a: GenDataArgs) -> Result<RunSummary> {
    let text = read_input(&a.config)?;
    let cfg: GenConfig = serde_json::from_slice(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", a.config.display())))?;
    let corpus = generate_synthetic_corpus(&cfg, a.seed)?;
    ensure_dir(&a.out)?;
    let train_path = a.out.join("train.jsonl");
    let test_path = a.out.join("test.jsonl");
    let meta_path = a.out.join("meta.json");
    write_corpus(&train_path, &corpus.train)?;
    write_corpus(&test_path, &corpus.test)?;
    let run_config = json!({ "gen_config": cfg, "seed": a.seed });
    let hash = config_hash(&run_config);
    write_json(
        &meta_path,
        &CorpusMeta {
            inventory: corpus.inventory,
            gen_config: cfg,
            seed: a.seed,
            config_hash: hash,
        },
    )?;
    let metrics = json!({
        "train_bags": corpus.train.len(),
        "test_bags": corpus.test.len(),
        "train_positive": corpus.train.iter().filter(|b| b.is_positive()).count(),
        "test_positive": corpus.test.iter().filter(|b| b.is_positive()).count(),
    });
    finish(
        "gen-data",
        &a.out.join("manifest.json"),
        a.seed,
        &run_config,
        &[&a.config],
        vec![train_path, test_path, meta_path],
        metrics,
    )
}

#[derive(Serialize)]
struct TrainRun<'a> {
    model: &'a ModelConfig,
    training: &'a TrainConfig,
    embeddings: Option<String>,
}

fn train_cmd(a: TrainArgs) -> Result<RunSummary> {
    let corpus = load_corpus(&a.train)?;
    let mut inventory = corpus.inventory;
    let mut inputs: Vec<&Path> = vec![&a.train];
    if let Some(meta) = &a.meta {
        let text = read_input(meta)?;
        let meta_value: CorpusMeta = serde_json::from_slice(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", meta.display())))?;
        inventory = inventory.union(meta_value.inventory);
        inputs.push(meta);
    }
    let mut config = ModelConfig::new(a.model, a.repr, a.fusion, inventory);
    config.entity_dim = a.entity_dim;
    config.encoder = EncoderConfig {
        word_dim: a.word_dim,
        position_dim: a.position_dim,
        widths: a.widths.clone(),
        channels: a.channels,
        max_distance: a.max_distance,
        ..EncoderConfig::default()
    };
    let tc = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        seed: a.seed,
        validation_fraction: a.validation_fraction,
        ld: a.ld,
        lambda: a.lambda,
        gamma: a.gamma,
        relevance_weight: a.relevance_weight,
        negative_sample_rate: a.negative_sample_rate,
    };
    let embeddings = match &a.embeddings {
        Some(p) => {
            inputs.push(p);
            Some(String::from_utf8(read_input(p)?).map_err(|e| CliError::Validation(e.to_string()))?)
        }
        None => None,
    };
    let run_config = TrainRun {
        model: &config,
        training: &tc,
        embeddings: embeddings.as_deref().map(|t| digest(t.as_bytes())),
    };
    let outcome = match &embeddings {
        None => train(config.clone(), &corpus.bags, &tc)?,
        Some(text) => {
            let mut model = Model::new(config.clone(), tc.seed)?;
            model.load_embeddings(text)?;
            crate::models::train_model(model, &corpus.bags, &tc)?
        }
    };
    ensure_dir(&a.out)?;
    let ckpt = a.out.join("model.json");
    outcome.model.save(&ckpt, tc.seed)?;
    let history = a.out.join("history.json");
    let hash = config_hash(&run_config);
    write_json(
        &history,
        &json!({
            "seed": tc.seed,
            "config_hash": hash,
            "best_epoch": outcome.best_epoch,
            "epochs": outcome.history,
            "validation_bags": outcome.validation_bags,
        }),
    )?;
    let best_auc = outcome
        .best_epoch
        .and_then(|e| outcome.history.get(e - 1))
        .and_then(|r| r.validation_auc);
    let metrics = json!({ "best_epoch": outcome.best_epoch, "validation_auc": best_auc });
    finish(
        "train",
        &a.out.join("manifest.json"),
        tc.seed,
        &run_config,
        &inputs,
        vec![ckpt.clone(), crate::models::sidecar_path(&ckpt), history],
        metrics,
    )
}

fn load_model(path: &Path) -> Result<Model> {
    if !path.exists() {
        return Err(CliError::MissingInput {
            path: path.to_path_buf(),
            message: "checkpoint not found".into(),
        });
    }
    Ok(Model::load(path)?.0)
}

fn check_coverage(model: &Model, bags: &[Bag], path: &Path) -> Result<()> {
    if !model.config().inventory.covers(bags) {
        return Err(CliError::Validation(format!(
            "{} uses ids outside the model inventory; train with --meta from gen-data",
            path.display()
        )));
    }
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<RunSummary> {
    if a.checkpoints.len() > 1 && !a.avg {
        return Err(CliError::Usage("several checkpoints need --avg".into()));
    }
    let test = load_corpus(&a.test)?.bags;
    ensure_dir(&a.out)?;
    let mut inputs: Vec<&Path> = vec![&a.test];
    let mut runs = Vec::new();
    let mut outputs = Vec::new();
    let run_config = json!({
        "checkpoints": a.checkpoints.iter().map(|p| file_digest(p)).collect::<Result<Vec<_>>>()?,
        "test": file_digest(&a.test)?,
        "seed": a.seed,
        "shuffle_rounds": a.shuffle_rounds,
    });
    let hash = config_hash(&run_config);
    for (i, ckpt) in a.checkpoints.iter().enumerate() {
        inputs.push(ckpt);
        let model = load_model(ckpt)?;
        check_coverage(&model, &test, &a.test)?;
        let (scored, curve) = evaluate(&model, &test)?;
        let baseline = label_shuffle_auc(&scored, a.shuffle_rounds, a.seed)?;
        let name = if a.checkpoints.len() == 1 {
            "pr_curve.csv".to_string()
        } else {
            format!("pr_curve_{i}.csv")
        };
        let path = a.out.join(name);
        let rows: Vec<Vec<String>> = curve
            .points
            .iter()
            .map(|(r, p)| vec![r.to_string(), p.to_string()])
            .collect();
        write_csv(&path, a.seed, &hash, &["recall", "precision"], &rows)?;
        outputs.push(path);
        runs.push(json!({
            "checkpoint": file_digest(ckpt)?,
            "auc_04": curve.auc_04,
            "shuffle_auc_04": baseline,
            "pairs": scored.len(),
            "positives": scored.iter().filter(|s| s.label).count(),
        }));
    }
    let mean = |key: &str| runs.iter().map(|r| r[key].as_f64().unwrap_or(0.0)).sum::<f64>() / runs.len() as f64;
    let metrics = json!({
        "seed": a.seed,
        "config_hash": hash,
        "auc_04": mean("auc_04"),
        "shuffle_auc_04": mean("shuffle_auc_04"),
        "runs": runs,
    });
    let metrics_path = a.out.join("metrics.json");
    write_json(&metrics_path, &metrics)?;
    outputs.push(metrics_path);
    let summary = json!({ "auc_04": metrics["auc_04"], "shuffle_auc_04": metrics["shuffle_auc_04"] });
    finish("eval", &a.out.join("manifest.json"), a.seed, &run_config, &inputs, outputs, summary)
}

#[derive(Serialize, Deserialize)]
struct ExplanationLine {
    #[serde(flatten)]
    scores: ImportanceScores,
    seed: u64,
    config_hash: String,
}

fn explain_cmd(a: ExplainArgs) -> Result<RunSummary> {
    let test = load_corpus(&a.test)?.bags;
    let (model, meta) = {
        let m = load_model(&a.checkpoint)?;
        let seed = Model::load(&a.checkpoint)?.1.seed;
        (m, seed)
    };
    check_coverage(&model, &test, &a.test)?;
    let run_config = json!({
        "checkpoint": file_digest(&a.checkpoint)?,
        "test": file_digest(&a.test)?,
        "methods": a.methods,
    });
    let hash = config_hash(&run_config);
    let set = explain_corpus(&model, &test, &a.methods)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    let mut w = BufWriter::new(File::create(&a.out).map_err(other(&a.out))?);
    for r in &set.records {
        let line = ExplanationLine {
            scores: r.clone(),
            seed: meta,
            config_hash: hash.clone(),
        };
        serde_json::to_writer(&mut w, &line).map_err(other(&a.out))?;
        w.write_all(b"\n").map_err(other(&a.out))?;
    }
    w.flush().map_err(other(&a.out))?;
    let metrics = json!({ "records": set.records.len(), "pairs": set.probabilities.len() });
    finish(
        "explain",
        &sibling_manifest(&a.out),
        meta,
        &run_config,
        &[&a.test, &a.checkpoint],
        vec![a.out.clone()],
        metrics,
    )
}

fn read_explanations(path: &Path) -> Result<Vec<ImportanceScores>> {
    let file = File::open(path).map_err(|e| CliError::MissingInput {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(other(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ImportanceScores = serde_json::from_str(&line)
            .map_err(|e| CliError::Validation(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

fn expl_eval_cmd(a: ExplEvalArgs) -> Result<RunSummary> {
    let test = load_corpus(&a.test)?.bags;
    let records = read_explanations(&a.explanations)?;
    let model = load_model(&a.checkpoint)?;
    check_coverage(&model, &test, &a.test)?;
    let seed = Model::load(&a.checkpoint)?.1.seed;
    let tuples = build_expl_eval(&test);

    let mut probabilities = BTreeMap::new();
    for bag in test.iter().filter(|b| b.is_positive()) {
        let p = model.predict_bag(bag)?;
        for &k in &bag.relations {
            probabilities.insert((bag.bag_id, k), p[k]);
        }
    }
    let mut tables: BTreeMap<Method, ScoreTable> = BTreeMap::new();
    for r in records {
        tables
            .entry(r.method)
            .or_default()
            .insert((r.bag_id, r.relation), r.scores);
    }
    let reports: Vec<KendallReport> = tables
        .iter()
        .map(|(m, t)| kendall_report(m.name(), t, &tuples, &probabilities))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| CliError::Validation(e.to_string()))?;

    let run_config = json!({
        "checkpoint": file_digest(&a.checkpoint)?,
        "test": file_digest(&a.test)?,
        "explanations": file_digest(&a.explanations)?,
    });
    let hash = config_hash(&run_config);
    ensure_dir(&a.out)?;
    let fmt_tau = |t: Option<f64>| t.map_or_else(|| "nan".to_string(), |v| v.to_string());
    let mut rows = Vec::new();
    for r in &reports {
        for (bucket, counts) in [("all", r.overall), ("H", r.high), ("L", r.low)] {
            rows.push(vec![
                r.method.clone(),
                bucket.to_string(),
                fmt_tau(counts.tau()),
                counts.total.to_string(),
            ]);
        }
    }
    let csv_path = a.out.join("kendall.csv");
    write_csv(&csv_path, seed, &hash, &["method", "bucket", "tau", "n_tuples"], &rows)?;
    let summary: BTreeMap<&str, Value> = reports
        .iter()
        .map(|r| {
            (
                r.method.as_str(),
                json!({ "all": r.tau_overall(), "H": r.tau_high(), "L": r.tau_low() }),
            )
        })
        .collect();
    let metrics = json!({
        "seed": seed,
        "config_hash": hash,
        "tuples": tuples.len(),
        "reports": reports,
    });
    let metrics_path = a.out.join("metrics.json");
    write_json(&metrics_path, &metrics)?;
    finish(
        "expl-eval",
        &a.out.join("manifest.json"),
        seed,
        &run_config,
        &[&a.test, &a.explanations, &a.checkpoint],
        vec![csv_path, metrics_path],
        json!({ "tuples": tuples.len(), "tau": summary }),
    )
}

fn augment_cmd(a: AugmentArgs) -> Result<RunSummary> {
    let corpus = load_corpus(&a.train)?;
    let index = DistractorIndex::build(&corpus.bags, corpus.inventory.num_relations);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let run_config = json!({ "train": file_digest(&a.train)?, "seed": a.seed });
    let hash = config_hash(&run_config);
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    let mut w = BufWriter::new(File::create(&a.out).map_err(other(&a.out))?);
    let (mut lines, mut fallbacks) = (0usize, 0usize);
    for bag in corpus.bags.iter().filter(|b| b.is_positive()) {
        for aug in augment_bag(bag, &index, &mut rng).map_err(|e| CliError::Validation(e.to_string()))? {
            let mut value = serde_json::to_value(bag).expect("serializable bag");
            let mut injected = serde_json::to_value(&aug.distractor.sentence).expect("serializable");
            injected["distractor"] = json!(true);
            injected["source_bag"] = json!(aug.distractor.source_bag);
            injected["source_sentence"] = json!(aug.distractor.source_sentence);
            value["sentences"]
                .as_array_mut()
                .expect("sentences array")
                .push(injected);
            value["augmented_relation"] = json!(aug.relation);
            value["seed"] = json!(a.seed);
            value["config_hash"] = json!(hash);
            serde_json::to_writer(&mut w, &value).map_err(other(&a.out))?;
            w.write_all(b"\n").map_err(other(&a.out))?;
            lines += 1;
            fallbacks += usize::from(aug.distractor.fallback);
        }
    }
    w.flush().map_err(other(&a.out))?;
    finish(
        "augment",
        &sibling_manifest(&a.out),
        a.seed,
        &run_config,
        &[&a.train],
        vec![a.out.clone()],
        json!({ "augmented_bags": lines, "fallback_draws": fallbacks }),
    )
}
