//! Comparison and ablation runs over synthetic corpora.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{train_baseline, BaselineConfig, BaselineTagger, BaselineTrainConfig};
use crate::config::{ConfigError, Preset, RunConfig};
use crate::corpus::{generate_synthetic, split, CorpusError, Document, IndexedDoc, Vocab};
use crate::eval::{evaluate, EvalError, EvalReport};
use crate::model::{matched_baseline, ModelError, Tagger, ZoomNet};
use crate::training::{metrics_header, train, MetricsRow, TrainError, Trainer};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unknown experiment `{0}` (expected task1, task2 or ablation)")]
    UnknownExperiment(String),
}

pub const RESULTS_HEADER: &str = "model\tWA\tP\tR\tF1\twlar";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Comparison,
    Ablation,
}

/// Named experiment configurations.
pub fn preset(name: &str) -> Result<(ExperimentKind, RunConfig), ExperimentError> {
    let mut cfg = RunConfig::default();
    cfg.train.reward_baseline = Some(0.9);
    match name {
        "task1" => {
            cfg.apply_preset(Preset::Task1);
            cfg.experiment.min_f1 = Some(0.9);
            cfg.experiment.max_wlar = Some(0.5);
            cfg.experiment.beat_baseline = true;
            Ok((ExperimentKind::Comparison, cfg))
        }
        "task2" => {
            cfg.apply_preset(Preset::Task2);
            cfg.experiment.beat_baseline = true;
            Ok((ExperimentKind::Comparison, cfg))
        }
        "ablation" => {
            cfg.apply_preset(Preset::Task1);
            cfg.corpus.docs = 400;
            cfg.corpus.test_size = 100;
            Ok((ExperimentKind::Ablation, cfg))
        }
        other => Err(ExperimentError::UnknownExperiment(other.to_string())),
    }
}

pub struct Dataset {
    pub vocab: Vocab,
    pub train: Vec<IndexedDoc>,
    pub test: Vec<IndexedDoc>,
}

impl Dataset {
    /// Splits, then builds the vocabulary from the training side only.
    pub fn from_docs(docs: Vec<Document>, test_size: usize, seed: u64) -> Result<Self, ExperimentError> {
        let (train, test) = split(docs, test_size, seed)?;
        let vocab = Vocab::build(&train);
        let index = |d: Vec<Document>| d.into_iter().map(|x| vocab.index(x)).collect::<Vec<_>>();
        let train = index(train);
        let test = index(test);
        Ok(Self { vocab, train, test })
    }

    pub fn generate(cfg: &RunConfig) -> Result<Self, ExperimentError> {
        let docs: Vec<Document> = generate_synthetic(&cfg.corpus.gen)?
            .take(cfg.corpus.docs)
            .map(|d| d.doc)
            .collect();
        Self::from_docs(docs, cfg.corpus.test_size, cfg.corpus.split_seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub word_accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub wlar: f64,
}

impl ResultRow {
    pub fn new(model: &str, r: &EvalReport) -> Self {
        Self {
            model: model.to_string(),
            word_accuracy: r.word_accuracy,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            wlar: r.mean_wlar,
        }
    }

    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            self.model, self.word_accuracy, self.precision, self.recall, self.f1, self.wlar
        )
    }
}

pub fn results_table(rows: &[ResultRow], run: &serde_json::Value) -> String {
    let mut s = format!("# config {run}\n{RESULTS_HEADER}\n");
    for r in rows {
        s.push_str(&r.to_tsv());
        s.push('\n');
    }
    s
}

fn curve_file(cfg: &RunConfig, rows: &[MetricsRow]) -> String {
    let mut s = metrics_header(&cfg.train, &cfg.to_json());
    for r in rows {
        let _ = writeln!(s, "{}", r.to_tsv());
    }
    s
}

/// Trains the network per `cfg`, validating on `data.test` at each eval point.
pub fn run_zoomnet(
    cfg: &RunConfig,
    data: &Dataset,
    observer: impl FnMut(&MetricsRow, &Trainer) -> Result<(), TrainError>,
) -> Result<(ZoomNet, Vec<MetricsRow>), ExperimentError> {
    let model = ZoomNet::new(cfg.model, data.vocab.clone(), cfg.train.seed);
    let mut trainer = Trainer::new(model, cfg.train)?;
    let curve = train(&mut trainer, &data.train, &data.test, observer)?;
    Ok((trainer.model, curve))
}

pub fn baseline_config(cfg: &RunConfig, vocab_size: usize) -> BaselineConfig {
    match cfg.baseline.hidden {
        Some(hidden) => BaselineConfig {
            embed_dim: cfg.model.embed_dim,
            hidden,
        },
        None => matched_baseline(vocab_size, cfg.model.embed_dim, cfg.model.param_count(vocab_size)),
    }
}

pub fn run_baseline(cfg: &RunConfig, data: &Dataset) -> Result<(BaselineTagger, Vec<MetricsRow>), ExperimentError> {
    let bcfg = baseline_config(cfg, data.vocab.len());
    let mut model = BaselineTagger::new(bcfg, data.vocab.clone(), cfg.train.seed);
    let tcfg = BaselineTrainConfig {
        epochs: cfg.baseline.epochs,
        learning_rate: cfg.baseline.learning_rate,
        clip_norm: cfg.train.clip_norm,
        optimizer: cfg.train.optimizer,
        seed: cfg.train.seed,
    };
    let mut curve = Vec::new();
    let n_train = data.train.iter().filter(|d| !d.doc.is_empty()).count() as u64;
    train_baseline(&mut model, &data.train, &tcfg, |epoch, loss, m| {
        if epoch.is_multiple_of(cfg.train.eval_every) || epoch == tcfg.epochs {
            let r = evaluate(m, &data.test).map_err(|e| ModelError::Meta(e.to_string()))?;
            curve.push(MetricsRow {
                epoch,
                step: epoch as u64 * n_train,
                train_loss: loss,
                mean_j: 0.0,
                word_accuracy: r.word_accuracy,
                precision: r.precision,
                recall: r.recall,
                f1: r.f1,
                wlar: r.mean_wlar,
            });
        }
        Ok(())
    })?;
    Ok((model, curve))
}

pub struct ComparisonOutcome {
    pub rows: Vec<ResultRow>,
    pub zoomnet_curve: Vec<MetricsRow>,
    pub baseline_curve: Vec<MetricsRow>,
    pub zoomnet_params: usize,
    pub baseline_params: usize,
    pub violations: Vec<String>,
}

/// Threshold checks; each failure is one human-readable line.
pub fn comparison_violations(cfg: &RunConfig, zn: &ResultRow, base: &ResultRow) -> Vec<String> {
    let mut out = Vec::new();
    let e = &cfg.experiment;
    if let Some(min) = e.min_f1 {
        if zn.f1 < min {
            out.push(format!("zoomnet F1 {:.4} < required {min}", zn.f1));
        }
    }
    if let Some(max) = e.max_wlar {
        if zn.wlar > max {
            out.push(format!("zoomnet wlar {:.4} > allowed {max}", zn.wlar));
        }
    }
    if e.beat_baseline && zn.f1 <= base.f1 {
        out.push(format!("zoomnet F1 {:.4} does not exceed baseline F1 {:.4}", zn.f1, base.f1));
    }
    if base.wlar != 1.0 {
        out.push(format!("baseline wlar {} != 1", base.wlar));
    }
    out
}

/// Trains both models on the same split and writes `results.tsv`,
/// `curve_zoomnet.tsv` and `curve_baseline.tsv` into `out_dir`.
pub fn run_comparison(cfg: &RunConfig, data: &Dataset, out_dir: Option<&Path>) -> Result<ComparisonOutcome, ExperimentError> {
    let (zn, base) = std::thread::scope(|s| {
        let zn = s.spawn(|| run_zoomnet(cfg, data, |_, _| Ok(())));
        let base = run_baseline(cfg, data);
        (zn.join().expect("zoomnet training thread panicked"), base)
    });
    let (zn_model, zn_curve) = zn?;
    let (base_model, base_curve) = base?;
    let zn_row = ResultRow::new("zoomnet", &evaluate(&zn_model, &data.test)?);
    let base_row = ResultRow::new("bilstm-softmax", &evaluate(&base_model, &data.test)?);
    let violations = comparison_violations(cfg, &zn_row, &base_row);
    let rows = vec![zn_row, base_row];
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("results.tsv"), results_table(&rows, &cfg.to_json()))?;
        std::fs::write(dir.join("curve_zoomnet.tsv"), curve_file(cfg, &zn_curve))?;
        std::fs::write(dir.join("curve_baseline.tsv"), curve_file(cfg, &base_curve))?;
    }
    Ok(ComparisonOutcome {
        rows,
        zoomnet_curve: zn_curve,
        baseline_curve: base_curve,
        zoomnet_params: zn_model.param_counts().total,
        baseline_params: base_model.param_counts().total,
        violations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationArm {
    pub lambda: f64,
    pub curve: Vec<MetricsRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationOutcome {
    pub arms: Vec<AblationArm>,
    /// First eval epoch where every arm reaches the F1 bar, with each arm's wlar there.
    pub joint: Option<(usize, Vec<f64>)>,
    pub violations: Vec<String>,
}

pub fn first_joint_epoch(arms: &[AblationArm], f1: f64) -> Option<(usize, Vec<f64>)> {
    let first = arms.first()?;
    for row in &first.curve {
        let rows: Option<Vec<&MetricsRow>> = arms
            .iter()
            .map(|a| a.curve.iter().find(|r| r.epoch == row.epoch))
            .collect();
        if let Some(rows) = rows {
            if rows.iter().all(|r| r.f1 >= f1) {
                return Some((row.epoch, rows.iter().map(|r| r.wlar).collect()));
            }
        }
    }
    None
}

/// Paired runs over `experiment.ablation_lambdas` with identical data and
/// seeds. Larger λ must give strictly lower wlar at the first epoch where
/// all arms reach `experiment.ablation_f1`.
pub fn run_ablation(cfg: &RunConfig, data: &Dataset, out_dir: Option<&Path>) -> Result<AblationOutcome, ExperimentError> {
    let lambdas = cfg.experiment.ablation_lambdas.clone();
    let results: Vec<Result<(ZoomNet, Vec<MetricsRow>), ExperimentError>> = std::thread::scope(|s| {
        let handles: Vec<_> = lambdas
            .iter()
            .map(|&lambda| {
                let mut arm = cfg.clone();
                arm.train.lambda = lambda;
                s.spawn(move || run_zoomnet(&arm, data, |_, _| Ok(())))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("ablation thread panicked")).collect()
    });
    let mut arms = Vec::new();
    for (lambda, r) in lambdas.iter().zip(results) {
        arms.push(AblationArm {
            lambda: *lambda,
            curve: r?.1,
        });
    }
    let joint = first_joint_epoch(&arms, cfg.experiment.ablation_f1);
    let mut violations = Vec::new();
    match &joint {
        None => violations.push(format!("no eval epoch where every arm reaches F1 >= {}", cfg.experiment.ablation_f1)),
        Some((epoch, wlars)) => {
            let mut order: Vec<(f64, f64)> = lambdas.iter().copied().zip(wlars.iter().copied()).collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in order.windows(2) {
                if w[1].1.partial_cmp(&w[0].1) != Some(std::cmp::Ordering::Less) {
                    violations.push(format!(
                        "epoch {epoch}: wlar {:.4} at lambda {} is not below wlar {:.4} at lambda {}",
                        w[1].1, w[1].0, w[0].1, w[0].0
                    ));
                }
            }
        }
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        for arm in &arms {
            let mut c = cfg.clone();
            c.train.lambda = arm.lambda;
            std::fs::write(dir.join(format!("curve_lambda_{}.tsv", arm.lambda)), curve_file(&c, &arm.curve))?;
        }
        let mut summary = format!("# config {}\nlambda\tepoch\tf1\twlar\n", cfg.to_json());
        if let Some((epoch, wlars)) = &joint {
            for (arm, w) in arms.iter().zip(wlars) {
                let f1 = arm.curve.iter().find(|r| r.epoch == *epoch).map_or(0.0, |r| r.f1);
                let _ = writeln!(summary, "{}\t{epoch}\t{f1:.4}\t{w:.4}", arm.lambda);
            }
        }
        std::fs::write(dir.join("ablation.tsv"), summary)?;
    }
    Ok(AblationOutcome {
        arms,
        joint,
        violations,
    })
}
