//! Model containers, checkpoint I/O and the common tagging interface.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::LevelCounts;
use crate::baseline::{BaselineConfig, BaselineTagger};
use crate::controller::{run_episode, CellKind, ControllerError, ControllerParams, Episode, EpisodeTrace, PolicyMode};
use crate::corpus::{Bio, IndexedDoc, Vocab};
use crate::encoder::{encode, EncoderParams, HierarchicalMemory};
use crate::tensor::{
    load_checkpoint, save_checkpoint, Checkpoint, Optimizer, ParamCounts, ParamStore, Tape, Tensor, TensorError,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error("checkpoint metadata: {0}")]
    Meta(String),
    #[error("checkpoint holds a `{found}` model, expected `{expected}`")]
    Kind { expected: ModelKind, found: ModelKind },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Zoomnet,
    Baseline,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Zoomnet => "zoomnet",
            ModelKind::Baseline => "baseline",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub word_hidden: usize,
    pub sentence_hidden: usize,
    pub controller_hidden: usize,
    pub cell: CellKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            word_hidden: 32,
            sentence_hidden: 32,
            controller_hidden: 64,
            cell: CellKind::Lstm,
        }
    }
}

impl ModelConfig {
    pub fn memory_dim(&self) -> usize {
        self.embed_dim + 2 * self.word_hidden + 2 * self.sentence_hidden
    }

    pub fn param_count(&self, vocab_size: usize) -> usize {
        EncoderParams::param_count(vocab_size, self.embed_dim, self.word_hidden, self.sentence_hidden)
            + ControllerParams::param_count(self.memory_dim(), self.controller_hidden, self.cell)
    }
}

/// Where training stopped; stored with every checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingProgress {
    pub epochs_done: usize,
    pub optimizer_steps: u64,
    pub reward_baseline: Option<f64>,
}

/// JSON header of a checkpoint file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: ModelKind,
    pub model: serde_json::Value,
    pub vocab: Vocab,
    #[serde(default)]
    pub run: serde_json::Value,
    #[serde(default)]
    pub progress: TrainingProgress,
}

/// Parameters plus the optimizer state found in a checkpoint.
pub struct Restored<M> {
    pub model: M,
    pub run: serde_json::Value,
    pub progress: TrainingProgress,
    checkpoint: Checkpoint,
}

impl<M> Restored<M> {
    pub(crate) fn new(model: M, run: serde_json::Value, progress: TrainingProgress, checkpoint: Checkpoint) -> Self {
        Self {
            model,
            run,
            progress,
            checkpoint,
        }
    }

    /// Restores Adam moments saved next to the parameters.
    pub fn restore_optimizer(&self, store: &ParamStore, optimizer: &mut Optimizer) -> Result<(), ModelError> {
        optimizer.restore_state(store, self.progress.optimizer_steps, |name| {
            self.checkpoint.tensors.get(name).cloned()
        })?;
        Ok(())
    }
}

pub(crate) fn write_checkpoint(
    path: &Path,
    meta: &CheckpointMeta,
    store: &ParamStore,
    optimizer: Option<&Optimizer>,
) -> Result<(), ModelError> {
    let config = serde_json::to_string(meta).map_err(|e| ModelError::Meta(e.to_string()))?;
    let mut tensors: std::collections::BTreeMap<String, Tensor> =
        store.iter().map(|p| (p.name().to_string(), p.value().clone())).collect();
    if let Some(opt) = optimizer {
        tensors.extend(opt.state_tensors(store));
    }
    save_checkpoint(path, &Checkpoint { config, tensors })?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointMeta, Checkpoint), ModelError> {
    let ckpt = load_checkpoint(path)?;
    let meta: CheckpointMeta = serde_json::from_str(&ckpt.config).map_err(|e| ModelError::Meta(e.to_string()))?;
    Ok((meta, ckpt))
}

pub(crate) fn parse_model_config<T: serde::de::DeserializeOwned>(meta: &CheckpointMeta) -> Result<T, ModelError> {
    serde_json::from_value(meta.model.clone()).map_err(|e| ModelError::Meta(e.to_string()))
}

/// Output of one tagger on one document.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<Bio>,
    pub counts: LevelCounts,
    pub trace: Option<EpisodeTrace>,
}

pub trait Tagger: Sync {
    fn kind(&self) -> ModelKind;
    fn vocab(&self) -> &Vocab;
    fn predict(&self, doc: &IndexedDoc) -> Result<Prediction, ModelError>;
    fn param_counts(&self) -> ParamCounts;
}

pub struct ZoomNet {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub store: ParamStore,
    pub encoder: EncoderParams,
    pub controller: ControllerParams,
}

impl ZoomNet {
    pub fn new(config: ModelConfig, vocab: Vocab, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = EncoderParams::create(
            &mut store,
            vocab.len(),
            config.embed_dim,
            config.word_hidden,
            config.sentence_hidden,
            &mut rng,
        );
        let controller = ControllerParams::create(
            &mut store,
            config.memory_dim(),
            config.controller_hidden,
            config.cell,
            &mut rng,
        );
        Self {
            config,
            vocab,
            store,
            encoder,
            controller,
        }
    }

    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, doc: &IndexedDoc) -> Result<HierarchicalMemory, ModelError> {
        Ok(encode(tape, store, &self.encoder, &doc.doc, &doc.ids)?)
    }

    /// Encodes and runs one episode against `store` (normally `self.store`;
    /// finite-difference checks pass perturbed copies).
    pub fn episode_with(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        doc: &IndexedDoc,
        mode: PolicyMode<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Episode, ModelError> {
        let memory = self.encode(tape, store, doc)?;
        Ok(run_episode(tape, store, &self.controller, &doc.doc, &memory, mode, rng)?)
    }

    pub fn episode(
        &self,
        tape: &mut Tape,
        doc: &IndexedDoc,
        mode: PolicyMode<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Episode, ModelError> {
        self.episode_with(&self.store, tape, doc, mode, rng)
    }

    pub fn label(&self, doc: &IndexedDoc) -> Result<EpisodeTrace, ModelError> {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ep = self.episode(&mut tape, doc, PolicyMode::Greedy, &mut rng)?;
        Ok(ep.trace(doc.doc.id()))
    }

    pub fn save(
        &self,
        path: &Path,
        run: &serde_json::Value,
        progress: TrainingProgress,
        optimizer: Option<&Optimizer>,
    ) -> Result<(), ModelError> {
        let meta = CheckpointMeta {
            kind: ModelKind::Zoomnet,
            model: serde_json::to_value(self.config).map_err(|e| ModelError::Meta(e.to_string()))?,
            vocab: self.vocab.clone(),
            run: run.clone(),
            progress,
        };
        write_checkpoint(path, &meta, &self.store, optimizer)
    }

    pub fn load(path: &Path) -> Result<Restored<Self>, ModelError> {
        let (meta, checkpoint) = read_checkpoint(path)?;
        Self::from_parts(meta, checkpoint)
    }

    pub(crate) fn from_parts(meta: CheckpointMeta, checkpoint: Checkpoint) -> Result<Restored<Self>, ModelError> {
        if meta.kind != ModelKind::Zoomnet {
            return Err(ModelError::Kind {
                expected: ModelKind::Zoomnet,
                found: meta.kind,
            });
        }
        let config: ModelConfig = parse_model_config(&meta)?;
        let mut model = ZoomNet::new(config, meta.vocab.clone(), 0);
        model.store.load_values(&checkpoint.tensors)?;
        Ok(Restored::new(model, meta.run, meta.progress, checkpoint))
    }
}

impl Tagger for ZoomNet {
    fn kind(&self) -> ModelKind {
        ModelKind::Zoomnet
    }

    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn predict(&self, doc: &IndexedDoc) -> Result<Prediction, ModelError> {
        if doc.doc.is_empty() {
            return Ok(Prediction {
                labels: Vec::new(),
                counts: LevelCounts::default(),
                trace: None,
            });
        }
        let trace = self.label(doc)?;
        Ok(Prediction {
            labels: trace.labels.clone(),
            counts: trace.counts,
            trace: Some(trace),
        })
    }

    fn param_counts(&self) -> ParamCounts {
        self.store.counts()
    }
}

/// Either kind of trained model, as read from a checkpoint.
pub enum AnyModel {
    Zoomnet(Restored<ZoomNet>),
    Baseline(Restored<BaselineTagger>),
}

impl AnyModel {
    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let (meta, checkpoint) = read_checkpoint(path)?;
        match meta.kind {
            ModelKind::Zoomnet => Ok(AnyModel::Zoomnet(ZoomNet::from_parts(meta, checkpoint)?)),
            ModelKind::Baseline => Ok(AnyModel::Baseline(BaselineTagger::from_parts(meta, checkpoint)?)),
        }
    }

    pub fn tagger(&self) -> &dyn Tagger {
        match self {
            AnyModel::Zoomnet(r) => &r.model,
            AnyModel::Baseline(r) => &r.model,
        }
    }

    pub fn run_config(&self) -> &serde_json::Value {
        match self {
            AnyModel::Zoomnet(r) => &r.run,
            AnyModel::Baseline(r) => &r.run,
        }
    }
}

/// Hidden size for the baseline whose parameter count is closest to `target`.
pub fn matched_baseline(vocab_size: usize, embed_dim: usize, target: usize) -> BaselineConfig {
    let mut best = BaselineConfig { embed_dim, hidden: 1 };
    let mut best_diff = usize::MAX;
    for hidden in 1..=4096 {
        let cfg = BaselineConfig { embed_dim, hidden };
        let n = cfg.param_count(vocab_size);
        let diff = n.abs_diff(target);
        if diff < best_diff {
            best = cfg;
            best_diff = diff;
        }
        if n > target {
            break;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, GenConfig};

    fn docs(n: usize) -> Vec<IndexedDoc> {
        let raw: Vec<_> = generate_synthetic(&GenConfig::task1(4)).unwrap().take(n).map(|d| d.doc).collect();
        let vocab = Vocab::build(&raw);
        raw.into_iter().map(|d| vocab.index(d)).collect()
    }

    #[test]
    fn param_count_matches_store() {
        let d = docs(3);
        let vocab = Vocab::build(d.iter().map(|x| &x.doc));
        for cell in [CellKind::Lstm, CellKind::Tanh] {
            let cfg = ModelConfig {
                cell,
                ..ModelConfig::default()
            };
            let m = ZoomNet::new(cfg, vocab.clone(), 1);
            assert_eq!(m.param_counts().total, cfg.param_count(vocab.len()));
            assert!(m.param_counts().group("encoder") > 0);
            assert!(m.param_counts().group("controller") > 0);
        }
    }

    #[test]
    fn checkpoint_round_trip_reproduces_predictions() {
        let d = docs(3);
        let vocab = Vocab::build(d.iter().map(|x| &x.doc));
        let cfg = ModelConfig {
            embed_dim: 8,
            word_hidden: 6,
            sentence_hidden: 5,
            controller_hidden: 7,
            cell: CellKind::Lstm,
        };
        let m = ZoomNet::new(cfg, vocab, 9);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let run = serde_json::json!({"seed": 9});
        m.save(&path, &run, TrainingProgress::default(), None).unwrap();
        let back = ZoomNet::load(&path).unwrap();
        assert_eq!(back.run, run);
        assert_eq!(back.model.store.fingerprint(), m.store.fingerprint());
        for doc in &d {
            assert_eq!(back.model.label(doc).unwrap(), m.label(doc).unwrap());
        }
        match AnyModel::load(&path).unwrap() {
            AnyModel::Zoomnet(_) => {}
            AnyModel::Baseline(_) => panic!("wrong kind"),
        }
    }

    #[test]
    fn matched_baseline_within_tolerance() {
        let cfg = ModelConfig::default();
        let target = cfg.param_count(500);
        let b = matched_baseline(500, cfg.embed_dim, target);
        let n = b.param_count(500) as f64;
        assert!((n - target as f64).abs() / target as f64 <= 0.15, "{n} vs {target}");
    }
}
