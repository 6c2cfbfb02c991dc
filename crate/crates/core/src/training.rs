//! Correct-set cross entropy, episode reward, policy-gradient term and the
//! joint training loop.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{Action, ActionSet, LevelCounts};
use crate::controller::{Episode, PolicyMode};
use crate::corpus::IndexedDoc;
use crate::eval::{evaluate, EvalError, EvalReport};
use crate::model::{ModelError, Restored, TrainingProgress, ZoomNet};
use crate::tensor::{Optimizer, OptimizerKind, Tape, TensorError, Var};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("episode has no steps")]
    EmptyEpisode,
    #[error("step {0} has an empty correct-action set")]
    NoCorrectAction(usize),
    #[error("reward undefined for an episode with zero actions")]
    ZeroActions,
    #[error("document `{0}` has no gold labels")]
    MissingGold(String),
    #[error("no trainable documents")]
    NoData,
    #[error("non-finite loss {value} at epoch {epoch} on document `{doc}`")]
    NonFiniteLoss { epoch: usize, doc: String, value: f64 },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("metrics log: {0}")]
    Metrics(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TrainError {
    /// Divergence rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            TrainError::NonFiniteLoss { .. }
                | TrainError::Tensor(TensorError::NonFiniteGradient(_))
                | TrainError::Model(ModelError::Tensor(TensorError::NonFiniteGradient(_)))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardVariant {
    /// `r = L · (−wlar)`; the objective `L − λJ` is minimized.
    LossScaled,
    /// `r = −wlar`; the objective `L + λJ` is minimized, which lowers the
    /// probability of word-heavy paths.
    NegWlar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub clip_norm: Option<f64>,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub reward: RewardVariant,
    /// Validation cadence in epochs.
    pub eval_every: usize,
    /// Momentum of a moving-average reward baseline; `None` disables it.
    pub reward_baseline: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            epochs: 30,
            learning_rate: 1e-3,
            clip_norm: Some(5.0),
            optimizer: OptimizerKind::Adam,
            seed: 0,
            reward: RewardVariant::NegWlar,
            eval_every: 1,
            reward_baseline: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(TrainError::Config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return Err(TrainError::Config(format!("clip_norm must be positive, got {c}")));
            }
        }
        if self.eval_every == 0 {
            return Err(TrainError::Config("eval_every must be at least 1".into()));
        }
        if let Some(m) = self.reward_baseline {
            if !(0.0..1.0).contains(&m) {
                return Err(TrainError::Config(format!("reward_baseline momentum must lie in [0, 1), got {m}")));
            }
        }
        Ok(())
    }
}

/// `−(1/T) Σ_t [Σ_{a∉A*} ln(1 − y_a) + ln Σ_{a∈A*} y_a]`.
pub fn supervised_loss(tape: &mut Tape, steps: &[(Var, ActionSet)]) -> Result<Var, TrainError> {
    if steps.is_empty() {
        return Err(TrainError::EmptyEpisode);
    }
    let scale = -1.0 / steps.len() as f64;
    let mut terms = Vec::with_capacity(steps.len());
    for (t, (y, set)) in steps.iter().enumerate() {
        if set.is_empty() {
            return Err(TrainError::NoCorrectAction(t + 1));
        }
        terms.push((tape.set_log_mass(*y, &set.mask())?, scale));
    }
    Ok(tape.weighted_sum(&terms)?)
}

/// Episode-terminal reward; `loss` enters as a plain number.
pub fn episode_reward(loss: f64, counts: LevelCounts, variant: RewardVariant) -> Result<f64, TrainError> {
    let wlar = counts.wlar().map_err(|_| TrainError::ZeroActions)?;
    Ok(match variant {
        RewardVariant::LossScaled => loss * -wlar,
        RewardVariant::NegWlar => -wlar,
    })
}

/// `J = −Σ_t r · ln π(a_t)`.
pub fn policy_objective(tape: &mut Tape, steps: &[(Var, Action)], reward: f64) -> Result<Var, TrainError> {
    let mut terms = Vec::with_capacity(steps.len());
    for &(y, a) in steps {
        terms.push((tape.log_pick(y, a.index())?, -reward));
    }
    Ok(tape.weighted_sum(&terms)?)
}

/// Scalar objective of one episode and its parts.
#[derive(Debug, Clone, Copy)]
pub struct Objective {
    pub root: Var,
    pub loss: f64,
    pub j: f64,
    /// Reward after subtracting the baseline.
    pub reward: f64,
}

/// Builds the objective from a recorded episode. `reward` overrides the
/// computed reward (finite-difference checks hold it fixed).
pub fn build_objective(
    tape: &mut Tape,
    episode: &Episode,
    cfg: &TrainConfig,
    baseline: Option<f64>,
    reward: Option<f64>,
) -> Result<Objective, TrainError> {
    let mut sl = Vec::with_capacity(episode.steps.len());
    for (t, s) in episode.steps.iter().enumerate() {
        let set = s.correct.ok_or(TrainError::NoCorrectAction(t + 1))?;
        sl.push((s.dist, set));
    }
    let loss = supervised_loss(tape, &sl)?;
    let loss_value = tape.scalar(loss);
    if cfg.lambda == 0.0 {
        return Ok(Objective {
            root: loss,
            loss: loss_value,
            j: 0.0,
            reward: 0.0,
        });
    }
    let r = match reward {
        Some(r) => r,
        None => episode_reward(loss_value, episode.counts, cfg.reward)? - baseline.unwrap_or(0.0),
    };
    let picks: Vec<(Var, Action)> = episode.steps.iter().map(|s| (s.dist, s.action)).collect();
    let j = policy_objective(tape, &picks, r)?;
    let sign = match cfg.reward {
        RewardVariant::LossScaled => -1.0,
        RewardVariant::NegWlar => 1.0,
    };
    let root = tape.weighted_sum(&[(loss, 1.0), (j, sign * cfg.lambda)])?;
    Ok(Objective {
        root,
        loss: loss_value,
        j: tape.scalar(j),
        reward: r,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub j: f64,
    pub reward: f64,
    pub counts: LevelCounts,
}

/// One sample-correct episode, one backward pass, one optimizer step.
pub fn joint_step(
    model: &mut ZoomNet,
    optimizer: &mut Optimizer,
    doc: &IndexedDoc,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    baseline: &mut Option<f64>,
) -> Result<StepOutcome, TrainError> {
    if doc.doc.labels().is_none() {
        return Err(TrainError::MissingGold(doc.doc.id().to_string()));
    }
    let mut tape = Tape::new();
    let episode = model.episode(&mut tape, doc, PolicyMode::SampleCorrect, rng)?;
    let obj = build_objective(&mut tape, &episode, cfg, *baseline, None)?;
    if !obj.loss.is_finite() || !obj.j.is_finite() {
        return Err(TrainError::NonFiniteLoss {
            epoch: 0,
            doc: doc.doc.id().to_string(),
            value: if obj.loss.is_finite() { obj.j } else { obj.loss },
        });
    }
    tape.backward(obj.root, &mut model.store)?;
    optimizer.step(&mut model.store)?;
    if let (Some(m), true) = (cfg.reward_baseline, cfg.lambda > 0.0) {
        let raw = obj.reward + baseline.unwrap_or(0.0);
        *baseline = Some(match *baseline {
            Some(b) => m * b + (1.0 - m) * raw,
            None => raw,
        });
    }
    Ok(StepOutcome {
        loss: obj.loss,
        j: obj.j,
        reward: obj.reward,
        counts: episode.counts,
    })
}

/// Sampling generator for step `k` of `epoch`.
pub fn step_rng(seed: u64, epoch: usize, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a_5a5a_5a5a_5a5a);
    rng.set_stream(((epoch as u64) << 32) | k as u64);
    rng
}

/// Document order for `epoch`.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub mean_j: f64,
    pub mean_train_wlar: f64,
}

pub struct Trainer {
    pub model: ZoomNet,
    pub optimizer: Optimizer,
    pub cfg: TrainConfig,
    pub progress: TrainingProgress,
}

impl Trainer {
    pub fn new(model: ZoomNet, cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        Ok(Self {
            model,
            optimizer: Optimizer::new(cfg.optimizer, cfg.learning_rate, cfg.clip_norm),
            cfg,
            progress: TrainingProgress::default(),
        })
    }

    /// Continues from a checkpoint, including optimizer moments.
    pub fn resume(restored: Restored<ZoomNet>, cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, cfg.clip_norm);
        restored.restore_optimizer(&restored.model.store, &mut optimizer)?;
        let progress = restored.progress;
        Ok(Self {
            model: restored.model,
            optimizer,
            cfg,
            progress,
        })
    }

    pub fn run_epoch(&mut self, train: &[IndexedDoc]) -> Result<EpochStats, TrainError> {
        let epoch = self.progress.epochs_done + 1;
        let order = epoch_order(self.cfg.seed, epoch, train.len());
        let (mut loss, mut j, mut wlar) = (0.0, 0.0, 0.0);
        for (k, &i) in order.iter().enumerate() {
            let mut rng = step_rng(self.cfg.seed, epoch, k);
            let out = joint_step(
                &mut self.model,
                &mut self.optimizer,
                &train[i],
                &self.cfg,
                &mut rng,
                &mut self.progress.reward_baseline,
            )
            .map_err(|e| match e {
                TrainError::NonFiniteLoss { doc, value, .. } => TrainError::NonFiniteLoss { epoch, doc, value },
                other => other,
            })?;
            loss += out.loss;
            j += out.j;
            wlar += out.counts.wlar().unwrap_or(0.0);
        }
        self.progress.epochs_done = epoch;
        self.progress.optimizer_steps = self.optimizer.steps_taken();
        let n = train.len().max(1) as f64;
        Ok(EpochStats {
            mean_loss: loss / n,
            mean_j: j / n,
            mean_train_wlar: wlar / n,
        })
    }

    pub fn save(&self, path: &Path, run: &serde_json::Value) -> Result<(), TrainError> {
        self.model.save(path, run, self.progress, Some(&self.optimizer))?;
        Ok(())
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub step: u64,
    pub train_loss: f64,
    pub mean_j: f64,
    pub word_accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub wlar: f64,
}

impl MetricsRow {
    pub const HEADER: &'static str = "epoch\tstep\ttrain_loss\tmean_j\twa\tprecision\trecall\tf1\twlar";

    pub fn new(epoch: usize, step: u64, stats: &EpochStats, report: &EvalReport) -> Self {
        Self {
            epoch,
            step,
            train_loss: stats.mean_loss,
            mean_j: stats.mean_j,
            word_accuracy: report.word_accuracy,
            precision: report.precision,
            recall: report.recall,
            f1: report.f1,
            wlar: report.mean_wlar,
        }
    }

    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            self.epoch,
            self.step,
            self.train_loss,
            self.mean_j,
            self.word_accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.wlar
        )
    }

    pub fn parse(line: &str) -> Result<Self, TrainError> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 9 {
            return Err(TrainError::Metrics(format!("expected 9 fields, found {}: `{line}`", f.len())));
        }
        let bad = |e: &dyn std::fmt::Display| TrainError::Metrics(format!("{e} in `{line}`"));
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(&e));
        Ok(Self {
            epoch: f[0].parse().map_err(|e| bad(&e))?,
            step: f[1].parse().map_err(|e| bad(&e))?,
            train_loss: num(f[2])?,
            mean_j: num(f[3])?,
            word_accuracy: num(f[4])?,
            precision: num(f[5])?,
            recall: num(f[6])?,
            f1: num(f[7])?,
            wlar: num(f[8])?,
        })
    }
}

/// Header block of a metrics log: config comment lines, then column names.
pub fn metrics_header(cfg: &TrainConfig, run: &serde_json::Value) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# lambda={} seed={} reward={} epochs={}",
        cfg.lambda,
        cfg.seed,
        serde_json::to_value(cfg.reward).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(),
        cfg.epochs
    );
    let _ = writeln!(s, "# config {run}");
    s.push_str(MetricsRow::HEADER);
    s.push('\n');
    s
}

pub struct MetricsLog {
    file: std::fs::File,
}

impl MetricsLog {
    pub fn create(path: &Path, cfg: &TrainConfig, run: &serde_json::Value) -> Result<Self, TrainError> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(metrics_header(cfg, run).as_bytes())?;
        Ok(Self { file })
    }

    /// Reopens an existing log, dropping rows past `epochs_done`.
    pub fn reopen(path: &Path, epochs_done: usize) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path)?;
        let mut kept = String::new();
        for line in text.lines() {
            let keep = line.starts_with('#') || line == MetricsRow::HEADER || MetricsRow::parse(line)?.epoch <= epochs_done;
            if keep {
                kept.push_str(line);
                kept.push('\n');
            }
        }
        std::fs::write(path, kept)?;
        let file = std::fs::OpenOptions::new().append(true).open(path)?;
        Ok(Self { file })
    }

    pub fn append(&mut self, row: &MetricsRow) -> Result<(), TrainError> {
        writeln!(self.file, "{}", row.to_tsv())?;
        self.file.flush()?;
        Ok(())
    }
}

pub fn read_metrics(text: &str) -> Result<Vec<MetricsRow>, TrainError> {
    text.lines()
        .filter(|l| !l.starts_with('#') && *l != MetricsRow::HEADER && !l.trim().is_empty())
        .map(MetricsRow::parse)
        .collect()
}

/// Trains until `cfg.epochs`, evaluating on `valid` at the configured cadence
/// and after the final epoch. `observer` sees every metrics row.
pub fn train(
    trainer: &mut Trainer,
    train: &[IndexedDoc],
    valid: &[IndexedDoc],
    mut observer: impl FnMut(&MetricsRow, &Trainer) -> Result<(), TrainError>,
) -> Result<Vec<MetricsRow>, TrainError> {
    for d in train.iter().chain(valid) {
        if d.doc.labels().is_none() {
            return Err(TrainError::MissingGold(d.doc.id().to_string()));
        }
    }
    let usable: Vec<IndexedDoc> = train.iter().filter(|d| !d.doc.is_empty()).cloned().collect();
    if usable.is_empty() {
        return Err(TrainError::NoData);
    }
    let mut rows = Vec::new();
    while trainer.progress.epochs_done < trainer.cfg.epochs {
        let stats = trainer.run_epoch(&usable)?;
        let epoch = trainer.progress.epochs_done;
        if epoch.is_multiple_of(trainer.cfg.eval_every) || epoch == trainer.cfg.epochs {
            let report = evaluate(&trainer.model, valid)?;
            let row = MetricsRow::new(epoch, trainer.progress.optimizer_steps, &stats, &report);
            observer(&row, trainer)?;
            rows.push(row);
        }
    }
    Ok(rows)
}
