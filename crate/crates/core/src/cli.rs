//! Command-line entry point.
//!
//! Subcommands: `gen`, `stats`, `split`, `train`, `eval`, `trace`,
//! `gradcheck`, `params` and `experiment`.
//!
//! Configuration is resolved in this order, later sources winning: the TOML
//! file given by `--config`, the generator `--preset`, named flags such as
//! `--lambda` or `--epochs`, and finally each `--set table.key=value`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numerical failure or a missed experiment threshold.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::baseline::{train_baseline, BaselineTagger, BaselineTrainConfig};
use crate::checks::gradcheck_suite;
use crate::config::{ConfigError, Preset, RunConfig};
use crate::corpus::{corpus_stats, generate_synthetic, read_corpus, split, write_corpus, CorpusError, Document, IndexedDoc, Vocab};
use crate::eval::{dump_records, predict_all, report_from_predictions, write_dump, EvalError};
use crate::experiments::{self, baseline_config, Dataset, ExperimentError, ExperimentKind};
use crate::model::{AnyModel, ModelError, ModelKind, Tagger, TrainingProgress, ZoomNet};
use crate::render::{render_ansi, render_html};
use crate::training::{train, MetricsLog, MetricsRow, RewardVariant, TrainError, Trainer};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
    #[error("thresholds not met:\n{}", .0.join("\n"))]
    Threshold(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) | CliError::Threshold(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::UnknownKey(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Train(t) => t.into(),
            ExperimentError::UnknownExperiment(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "zoomnet", version, about = "Hierarchical BIO tagging with a zooming controller")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PresetArg {
    Task1,
    Task2,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Task1 => Preset::Task1,
            PresetArg::Task2 => Preset::Task2,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RewardArg {
    LossScaled,
    NegWlar,
}

impl From<RewardArg> for RewardVariant {
    fn from(r: RewardArg) -> Self {
        match r {
            RewardArg::LossScaled => RewardVariant::LossScaled,
            RewardArg::NegWlar => RewardVariant::NegWlar,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Zoomnet,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TraceFormat {
    Ansi,
    Html,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Generator preset.
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    /// Override one key, e.g. `--set train.lambda=0.2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    fn base(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = self.preset {
            cfg.apply_preset(p.into());
        }
        Ok(cfg)
    }

    fn apply_overrides(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        for o in &self.overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{o}`")))?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// File, preset, then `named`, then `--set`.
    fn resolve(&self, named: impl FnOnce(&mut RunConfig)) -> Result<RunConfig, CliError> {
        let mut cfg = self.base()?;
        named(&mut cfg);
        self.apply_overrides(&mut cfg)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic JSONL corpus and print its statistics.
    Gen {
        #[command(flatten)]
        config: ConfigArgs,
        /// Number of documents (default: corpus.docs).
        #[arg(long)]
        docs: Option<usize>,
        /// Generator seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Print corpus statistics as JSON.
    Stats {
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
    },
    /// Split a corpus into train and test files.
    Split {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        /// Test documents (default: corpus.test_size).
        #[arg(long)]
        test_size: Option<usize>,
        /// Split seed (default: corpus.split_seed).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "FILE")]
        train_out: PathBuf,
        #[arg(long, value_name = "FILE")]
        test_out: PathBuf,
    },
    /// Train a model; writes `metrics.tsv` and `model.ckpt` into `--out`.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_name = "FILE")]
        train: PathBuf,
        #[arg(long, value_name = "FILE")]
        valid: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "zoomnet")]
        model: ModelArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, value_enum)]
        reward: Option<RewardArg>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long, value_name = "CKPT")]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint; prints the report and writes a prediction dump.
    Eval {
        #[arg(long, value_name = "CKPT")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        /// Report JSON path.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Prediction dump (default: next to `--out` with a `.dump.jsonl` suffix).
        #[arg(long, value_name = "FILE")]
        dump: Option<PathBuf>,
        /// Expected run configuration; its model section must match the checkpoint.
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
    },
    /// Render the labelling path of one document.
    Trace {
        #[arg(long, value_name = "CKPT")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        /// Document id.
        #[arg(long)]
        doc: String,
        #[arg(long, value_enum, default_value = "ansi")]
        format: TraceFormat,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Finite-difference gradient checks.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Parameter counts per component.
    Params {
        #[command(flatten)]
        config: ConfigArgs,
        /// Build the vocabulary from this corpus instead of generating one.
        #[arg(long, value_name = "FILE")]
        corpus: Option<PathBuf>,
    },
    /// Run a named experiment: task1, task2 or ablation.
    Experiment {
        name: String,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I, out: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    match command {
        Command::Gen {
            config,
            docs,
            seed,
            out: path,
        } => cmd_gen(&config, docs, seed, &path, out),
        Command::Stats { corpus } => {
            let docs = read_corpus(&corpus)?;
            writeln!(out, "{}", stats_json(&docs)?)?;
            Ok(())
        }
        Command::Split {
            config,
            corpus,
            test_size,
            seed,
            train_out,
            test_out,
        } => cmd_split(&config, &corpus, test_size, seed, &train_out, &test_out, out),
        Command::Train {
            config,
            train,
            valid,
            out: dir,
            model,
            seed,
            lambda,
            epochs,
            lr,
            reward,
            resume,
        } => {
            let named = TrainFlags {
                seed,
                lambda,
                epochs,
                lr,
                reward,
            };
            cmd_train(&config, &named, &train, &valid, &dir, model, resume.as_deref(), out)
        }
        Command::Eval {
            checkpoint,
            corpus,
            out: report,
            dump,
            config,
        } => cmd_eval(&checkpoint, &corpus, report.as_deref(), dump.as_deref(), config.as_deref(), out),
        Command::Trace {
            checkpoint,
            corpus,
            doc,
            format,
            out: path,
        } => cmd_trace(&checkpoint, &corpus, &doc, format, path.as_deref(), out),
        Command::Gradcheck { seed } => cmd_gradcheck(seed, out),
        Command::Params { config, corpus } => cmd_params(&config, corpus.as_deref(), out),
        Command::Experiment {
            name,
            config,
            out: dir,
            seed,
            epochs,
        } => cmd_experiment(&name, &config, &dir, seed, epochs, out),
    }
}

fn stats_json(docs: &[Document]) -> Result<String, CliError> {
    let stats = corpus_stats(docs)?;
    Ok(serde_json::to_string(&stats).expect("stats serialize"))
}

/// `<path>.config.json` next to a corpus file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

fn write_sidecar(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(value).expect("sidecar serializes");
    std::fs::write(&side, text + "\n").map_err(io_at(&side))
}

fn write_corpus_at<'a>(path: &Path, docs: impl IntoIterator<Item = &'a Document>) -> Result<(), CliError> {
    write_corpus(path, docs).map_err(|e| match e {
        CorpusError::Io(io) => io_at(path)(io),
        other => other.into(),
    })
}

fn read_corpus_at(path: &Path) -> Result<Vec<Document>, CliError> {
    read_corpus(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn cmd_gen(config: &ConfigArgs, docs: Option<usize>, seed: Option<u64>, path: &Path, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let cfg = config.resolve(|c| {
        if let Some(n) = docs {
            c.corpus.docs = n;
            c.corpus.test_size = c.corpus.test_size.min(n.saturating_sub(1));
        }
        if let Some(s) = seed {
            c.corpus.gen.seed = s;
        }
    })?;
    let generated: Vec<Document> = generate_synthetic(&cfg.corpus.gen)?
        .take(cfg.corpus.docs)
        .map(|d| d.doc)
        .collect();
    write_corpus_at(path, &generated)?;
    let stats = stats_json(&generated)?;
    write_sidecar(
        path,
        &serde_json::json!({
            "config": cfg.to_json(),
            "stats": serde_json::from_str::<serde_json::Value>(&stats).expect("stats are JSON"),
        }),
    )?;
    writeln!(out, "{stats}")?;
    Ok(())
}

fn cmd_split(
    config: &ConfigArgs,
    corpus: &Path,
    test_size: Option<usize>,
    seed: Option<u64>,
    train_out: &Path,
    test_out: &Path,
    out: &mut dyn std::io::Write,
) -> Result<(), CliError> {
    let docs = read_corpus_at(corpus)?;
    let mut cfg = config.base()?;
    if let Some(s) = seed {
        cfg.corpus.split_seed = s;
    }
    config.apply_overrides(&mut cfg)?;
    let test_size = test_size.unwrap_or(cfg.corpus.test_size);
    let (train, test) = split(docs, test_size, cfg.corpus.split_seed)?;
    write_corpus_at(train_out, &train)?;
    write_corpus_at(test_out, &test)?;
    let meta = serde_json::json!({
        "source": corpus.display().to_string(),
        "test_size": test_size,
        "split_seed": cfg.corpus.split_seed,
        "config": cfg.to_json(),
    });
    write_sidecar(train_out, &meta)?;
    write_sidecar(test_out, &meta)?;
    writeln!(out, "{}", serde_json::json!({"train": train.len(), "test": test.len()}))?;
    Ok(())
}

struct TrainFlags {
    seed: Option<u64>,
    lambda: Option<f64>,
    epochs: Option<usize>,
    lr: Option<f64>,
    reward: Option<RewardArg>,
}

impl TrainFlags {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(s) = self.seed {
            c.train.seed = s;
        }
        if let Some(l) = self.lambda {
            c.train.lambda = l;
        }
        if let Some(e) = self.epochs {
            c.train.epochs = e;
            c.baseline.epochs = e;
        }
        if let Some(lr) = self.lr {
            c.train.learning_rate = lr;
            c.baseline.learning_rate = lr;
        }
        if let Some(r) = self.reward {
            c.train.reward = r.into();
        }
    }
}

fn index_all(vocab: &Vocab, docs: Vec<Document>) -> Vec<IndexedDoc> {
    docs.into_iter().map(|d| vocab.index(d)).collect()
}

fn check_gold(docs: &[Document]) -> Result<(), CliError> {
    match docs.iter().find(|d| d.labels().is_none()) {
        Some(d) => Err(TrainError::MissingGold(d.id().to_string()).into()),
        None => Ok(()),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    config: &ConfigArgs,
    named: &TrainFlags,
    train_path: &Path,
    valid_path: &Path,
    dir: &Path,
    model: ModelArg,
    resume: Option<&Path>,
    out: &mut dyn std::io::Write,
) -> Result<(), CliError> {
    let train_docs = read_corpus_at(train_path)?;
    let valid_docs = read_corpus_at(valid_path)?;
    check_gold(&train_docs)?;
    check_gold(&valid_docs)?;
    std::fs::create_dir_all(dir).map_err(io_at(dir))?;
    let ckpt = dir.join("model.ckpt");
    let metrics = dir.join("metrics.tsv");

    if let Some(from) = resume {
        if model == ModelArg::Baseline {
            return Err(CliError::Usage("--resume is only supported for the zoomnet model".into()));
        }
        let restored = ZoomNet::load(from)?;
        let mut cfg: RunConfig = serde_json::from_value(restored.run.clone())
            .map_err(|e| CliError::Data(format!("checkpoint run config: {e}")))?;
        if config.config.is_some() || config.preset.is_some() {
            return Err(CliError::Usage("--resume takes its config from the checkpoint; use named flags or --set".into()));
        }
        named.apply(&mut cfg);
        config.apply_overrides(&mut cfg)?;
        cfg.validate()?;
        if serde_json::to_value(cfg.model).ok() != serde_json::to_value(restored.model.config).ok() {
            return Err(CliError::Usage("model settings cannot change on resume".into()));
        }
        let vocab = restored.model.vocab.clone();
        let train = index_all(&vocab, train_docs);
        let valid = index_all(&vocab, valid_docs);
        let mut trainer = Trainer::resume(restored, cfg.train)?;
        let mut log = MetricsLog::reopen(&metrics, trainer.progress.epochs_done)?;
        return run_zoomnet_training(&mut trainer, &cfg, &train, &valid, &ckpt, &mut log, out);
    }

    let cfg = config.resolve(|c| named.apply(c))?;
    let vocab = Vocab::build(&train_docs);
    let train = index_all(&vocab, train_docs);
    let valid = index_all(&vocab, valid_docs);
    let run = cfg.to_json();
    let mut log = MetricsLog::create(&metrics, &cfg.train, &run)?;
    match model {
        ModelArg::Zoomnet => {
            let zn = ZoomNet::new(cfg.model, vocab, cfg.train.seed);
            let mut trainer = Trainer::new(zn, cfg.train)?;
            run_zoomnet_training(&mut trainer, &cfg, &train, &valid, &ckpt, &mut log, out)
        }
        ModelArg::Baseline => {
            let bcfg = baseline_config(&cfg, vocab.len());
            let mut tagger = BaselineTagger::new(bcfg, vocab, cfg.train.seed);
            let tcfg = BaselineTrainConfig {
                epochs: cfg.baseline.epochs,
                learning_rate: cfg.baseline.learning_rate,
                clip_norm: cfg.train.clip_norm,
                optimizer: cfg.train.optimizer,
                seed: cfg.train.seed,
            };
            let per_epoch = train.iter().filter(|d| !d.doc.is_empty()).count() as u64;
            let mut failure = None;
            train_baseline(&mut tagger, &train, &tcfg, |epoch, loss, m| {
                if !loss.is_finite() {
                    failure = Some(CliError::Numerical(format!("non-finite loss {loss} at epoch {epoch}")));
                    return Err(ModelError::Meta("diverged".into()));
                }
                if !epoch.is_multiple_of(cfg.train.eval_every) && epoch != tcfg.epochs {
                    return Ok(());
                }
                let step = epoch as u64 * per_epoch;
                let r = report_from_predictions(&valid, &predict_all(m, &valid).map_err(|e| ModelError::Meta(e.to_string()))?)
                    .map_err(|e| ModelError::Meta(e.to_string()))?;
                let row = MetricsRow {
                    epoch,
                    step,
                    train_loss: loss,
                    mean_j: 0.0,
                    word_accuracy: r.word_accuracy,
                    precision: r.precision,
                    recall: r.recall,
                    f1: r.f1,
                    wlar: r.mean_wlar,
                };
                log.append(&row).map_err(|e| ModelError::Meta(e.to_string()))?;
                let progress = TrainingProgress {
                    epochs_done: epoch,
                    optimizer_steps: step,
                    reward_baseline: None,
                };
                m.save(&ckpt, &run, progress)?;
                let _ = writeln!(out, "{}", row.to_tsv());
                Ok(())
            })
            .map_err(|e| failure.take().unwrap_or_else(|| e.into()))?;
            Ok(())
        }
    }
}

fn run_zoomnet_training(
    trainer: &mut Trainer,
    cfg: &RunConfig,
    train_docs: &[IndexedDoc],
    valid: &[IndexedDoc],
    ckpt: &Path,
    log: &mut MetricsLog,
    out: &mut dyn std::io::Write,
) -> Result<(), CliError> {
    let run = cfg.to_json();
    train(trainer, train_docs, valid, |row, t| {
        log.append(row)?;
        t.save(ckpt, &run)?;
        let _ = writeln!(out, "{}", row.to_tsv());
        Ok(())
    })?;
    trainer.save(ckpt, &run)?;
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.with_extension("").into_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_eval(
    checkpoint: &Path,
    corpus: &Path,
    report_path: Option<&Path>,
    dump: Option<&Path>,
    expected: Option<&Path>,
    out: &mut dyn std::io::Write,
) -> Result<(), CliError> {
    let model = AnyModel::load(checkpoint)?;
    if let Some(path) = expected {
        let expected = RunConfig::load(path)?;
        let actual = model.run_config().get("model");
        let wanted = serde_json::to_value(expected.model).expect("model config serializes");
        if actual != Some(&wanted) {
            return Err(CliError::Data(format!(
                "checkpoint model config {} does not match {}",
                actual.map_or("<none>".to_string(), |v| v.to_string()),
                wanted
            )));
        }
    }
    let tagger = model.tagger();
    let docs = index_all(tagger.vocab(), read_corpus_at(corpus)?);
    let preds = predict_all(tagger, &docs)?;
    let report = report_from_predictions(&docs, &preds)?;
    let doc = serde_json::json!({
        "checkpoint": checkpoint.display().to_string(),
        "corpus": corpus.display().to_string(),
        "model": tagger.kind().to_string(),
        "config": model.run_config(),
        "word_accuracy": report.word_accuracy,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "mean_wlar": report.mean_wlar,
    });
    writeln!(out, "{doc}")?;
    let dump = dump.map(Path::to_path_buf).or_else(|| report_path.map(|p| with_suffix(p, ".dump.jsonl")));
    if let Some(path) = report_path {
        let mut full = doc.clone();
        full["documents"] = serde_json::to_value(&report.documents).expect("doc reports serialize");
        std::fs::write(path, serde_json::to_string_pretty(&full).expect("report serializes") + "\n").map_err(io_at(path))?;
    }
    if let Some(path) = dump {
        write_dump(&path, &dump_records(&docs, &preds))?;
    }
    Ok(())
}

fn cmd_trace(
    checkpoint: &Path,
    corpus: &Path,
    doc_id: &str,
    format: TraceFormat,
    path: Option<&Path>,
    out: &mut dyn std::io::Write,
) -> Result<(), CliError> {
    let model = match AnyModel::load(checkpoint)? {
        AnyModel::Zoomnet(r) => r.model,
        AnyModel::Baseline(_) => {
            return Err(CliError::Data(format!(
                "{} holds a {} model, which has no processing path",
                checkpoint.display(),
                ModelKind::Baseline
            )))
        }
    };
    let doc = read_corpus_at(corpus)?
        .into_iter()
        .find(|d| d.id() == doc_id)
        .ok_or_else(|| CliError::Data(format!("no document `{doc_id}` in {}", corpus.display())))?;
    if doc.is_empty() {
        return Err(CliError::Data(format!("document `{doc_id}` is empty")));
    }
    let indexed = model.vocab.index(doc);
    let trace = model.label(&indexed)?;
    let text = match format {
        TraceFormat::Ansi => render_ansi(&indexed.doc, &trace),
        TraceFormat::Html => render_html(&indexed.doc, &trace),
    };
    match path {
        Some(p) => std::fs::write(p, text).map_err(io_at(p))?,
        None => write!(out, "{text}")?,
    }
    Ok(())
}

fn cmd_gradcheck(seed: u64, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let results = gradcheck_suite(seed).map_err(|e| CliError::Numerical(e.to_string()))?;
    let mut failed = Vec::new();
    for r in &results {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        writeln!(
            out,
            "{status}\t{}\tmax_rel_error {:.3e}\ttolerance {:.0e}\tchecked {}",
            r.name, r.report.max_rel_error, r.tolerance, r.report.checked
        )?;
        if !r.passed() {
            failed.push(r.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(format!("gradient check failed: {}", failed.join(", "))))
    }
}

fn cmd_params(config: &ConfigArgs, corpus: Option<&Path>, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let cfg = config.resolve(|_| {})?;
    let vocab = match corpus {
        Some(p) => Vocab::build(&read_corpus_at(p)?),
        None => {
            let docs: Vec<Document> = generate_synthetic(&cfg.corpus.gen)?
                .take(cfg.corpus.docs)
                .map(|d| d.doc)
                .collect();
            Vocab::build(&docs)
        }
    };
    let zn = ZoomNet::new(cfg.model, vocab.clone(), cfg.train.seed);
    let counts = zn.param_counts();
    let base = baseline_config(&cfg, vocab.len());
    writeln!(out, "# config {}", cfg.to_json())?;
    writeln!(out, "# vocab {}", vocab.len())?;
    writeln!(out, "component\tparams")?;
    writeln!(out, "encoder\t{}", counts.group("encoder"))?;
    writeln!(out, "controller\t{}", counts.group("controller"))?;
    writeln!(out, "total\t{}", counts.total)?;
    writeln!(out, "baseline\t{}", base.param_count(vocab.len()))?;
    Ok(())
}

fn cmd_experiment(
    name: &str,
    config: &ConfigArgs,
    dir: &Path,
    seed: Option<u64>,
    epochs: Option<usize>,
    out: &mut dyn std::io::Write,
) -> Result<(), CliError> {
    let (kind, mut cfg) = experiments::preset(name)?;
    if let Some(path) = &config.config {
        cfg = RunConfig::load(path)?;
    }
    if let Some(p) = config.preset {
        cfg.apply_preset(p.into());
    }
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if let Some(e) = epochs {
        cfg.train.epochs = e;
        cfg.baseline.epochs = e;
    }
    config.apply_overrides(&mut cfg)?;
    cfg.validate()?;
    let data = Dataset::generate(&cfg)?;
    std::fs::create_dir_all(dir).map_err(io_at(dir))?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()).map_err(io_at(dir))?;
    let violations = match kind {
        ExperimentKind::Comparison => {
            let outcome = experiments::run_comparison(&cfg, &data, Some(dir))?;
            writeln!(out, "{}", experiments::RESULTS_HEADER)?;
            for row in &outcome.rows {
                writeln!(out, "{}", row.to_tsv())?;
            }
            writeln!(out, "# params zoomnet {} baseline {}", outcome.zoomnet_params, outcome.baseline_params)?;
            outcome.violations
        }
        ExperimentKind::Ablation => {
            let outcome = experiments::run_ablation(&cfg, &data, Some(dir))?;
            match &outcome.joint {
                Some((epoch, wlars)) => {
                    for (arm, w) in outcome.arms.iter().zip(wlars) {
                        writeln!(out, "lambda {}\tepoch {epoch}\twlar {w:.4}", arm.lambda)?;
                    }
                }
                None => writeln!(out, "no joint epoch")?,
            }
            outcome.violations
        }
    };
    if violations.is_empty() {
        Ok(())
    } else {
        Err(CliError::Threshold(violations))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String) {
        let mut out = Vec::new();
        let code = main_with_args(std::iter::once("zoomnet").chain(args.iter().copied()), &mut out);
        (code, String::from_utf8(out).unwrap())
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_args(&["nope"]).0, 1);
        assert_eq!(run_args(&["gen"]).0, 1);
        assert_eq!(run_args(&["--help"]).0, 0);
    }

    #[test]
    fn unknown_set_key_is_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("c.jsonl");
        let (code, _) = run_args(&["gen", "--docs", "2", "--set", "corpus.bogus=1", "--out", out.to_str().unwrap()]);
        assert_eq!(code, 1);
        let (code, _) = run_args(&["gen", "--docs", "2", "--set", "corpus.gen.density=2.0", "--out", out.to_str().unwrap()]);
        assert_eq!(code, 2);
    }

    #[test]
    fn precedence_file_then_flags_then_set() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.toml");
        std::fs::write(&file, "[train]\nlambda = 0.3\nepochs = 7\nseed = 4\n").unwrap();
        let args = ConfigArgs {
            config: Some(file),
            preset: None,
            overrides: vec!["train.epochs=9".into()],
        };
        let flags = TrainFlags {
            seed: None,
            lambda: Some(0.5),
            epochs: Some(8),
            lr: None,
            reward: None,
        };
        let cfg = args.resolve(|c| flags.apply(c)).unwrap();
        assert_eq!(cfg.train.lambda, 0.5);
        assert_eq!(cfg.train.epochs, 9);
        assert_eq!(cfg.train.seed, 4);
    }

    #[test]
    fn params_table_matches_store() {
        let (code, text) = run_args(&["params", "--set", "corpus.test_size=5", "--set", "corpus.docs=20"]);
        assert_eq!(code, 0);
        let get = |k: &str| -> usize {
            text.lines()
                .find_map(|l| l.strip_prefix(&format!("{k}\t")))
                .unwrap()
                .parse()
                .unwrap()
        };
        assert_eq!(get("encoder") + get("controller"), get("total"));
        assert!(get("baseline") > 0);
    }
}
