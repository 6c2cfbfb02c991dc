//! Flat biLSTM tagger with a per-token softmax over B/I/O.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actions::LevelCounts;
use crate::corpus::{Bio, IndexedDoc, Vocab};
use crate::model::{
    parse_model_config, write_checkpoint, CheckpointMeta, ModelError, ModelKind, Prediction, Restored, Tagger,
    TrainingProgress,
};
use crate::tensor::tape::bilstm_run;
use crate::tensor::{
    init, Checkpoint, LstmParams, Optimizer, OptimizerKind, ParamCounts, ParamId, ParamStore, Tape, Tensor, Var,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub embed_dim: usize,
    pub hidden: usize,
}

impl BaselineConfig {
    pub fn param_count(&self, vocab_size: usize) -> usize {
        vocab_size * self.embed_dim + 2 * LstmParams::param_count(self.embed_dim, self.hidden) + 3 * 2 * self.hidden + 3
    }
}

pub struct BaselineTagger {
    pub config: BaselineConfig,
    pub vocab: Vocab,
    pub store: ParamStore,
    embed: ParamId,
    fwd: LstmParams,
    bwd: LstmParams,
    out_w: ParamId,
    out_b: ParamId,
}

impl BaselineTagger {
    pub fn new(config: BaselineConfig, vocab: Vocab, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let embed = store.add(
            "baseline.embed",
            init::uniform(&mut rng, &[vocab.len(), config.embed_dim], init::EMBEDDING_SCALE),
        );
        let fwd = LstmParams::create(&mut store, "baseline.bilstm.fwd", config.embed_dim, config.hidden, &mut rng);
        let bwd = LstmParams::create(&mut store, "baseline.bilstm.bwd", config.embed_dim, config.hidden, &mut rng);
        let out_w = store.add(
            "baseline.out.w",
            init::uniform(&mut rng, &[3, 2 * config.hidden], init::RECURRENT_SCALE),
        );
        let out_b = store.add("baseline.out.b", Tensor::zeros(&[3]));
        Self {
            config,
            vocab,
            store,
            embed,
            fwd,
            bwd,
            out_w,
            out_b,
        }
    }

    /// Per-token distributions over (B, I, O).
    fn forward(&self, tape: &mut Tape, store: &ParamStore, doc: &IndexedDoc) -> Result<Vec<Var>, ModelError> {
        let xs = doc
            .ids
            .iter()
            .map(|&id| tape.embed_lookup(store, self.embed, id))
            .collect::<Result<Vec<_>, _>>()?;
        let hs = bilstm_run(tape, store, &self.fwd, &self.bwd, &xs)?;
        let mut out = Vec::with_capacity(hs.len());
        for h in hs {
            let logits = tape.dense(store, self.out_w, self.out_b, h)?;
            out.push(tape.softmax(logits)?);
        }
        Ok(out)
    }

    /// Mean token cross-entropy; returns the scalar loss node.
    pub fn loss(&self, tape: &mut Tape, store: &ParamStore, doc: &IndexedDoc) -> Result<Var, ModelError> {
        let gold = doc.doc.labels().ok_or_else(|| ModelError::Meta(format!("document `{}` has no labels", doc.doc.id())))?;
        let dists = self.forward(tape, store, doc)?;
        let scale = -1.0 / dists.len() as f64;
        let mut terms = Vec::with_capacity(dists.len());
        for (d, g) in dists.into_iter().zip(gold) {
            terms.push((tape.log_pick(d, g.ordinal())?, scale));
        }
        Ok(tape.weighted_sum(&terms)?)
    }

    pub fn save(&self, path: &Path, run: &serde_json::Value, progress: TrainingProgress) -> Result<(), ModelError> {
        let meta = CheckpointMeta {
            kind: ModelKind::Baseline,
            model: serde_json::to_value(self.config).map_err(|e| ModelError::Meta(e.to_string()))?,
            vocab: self.vocab.clone(),
            run: run.clone(),
            progress,
        };
        write_checkpoint(path, &meta, &self.store, None)
    }

    pub(crate) fn from_parts(meta: CheckpointMeta, checkpoint: Checkpoint) -> Result<Restored<Self>, ModelError> {
        if meta.kind != ModelKind::Baseline {
            return Err(ModelError::Kind {
                expected: ModelKind::Baseline,
                found: meta.kind,
            });
        }
        let config: BaselineConfig = parse_model_config(&meta)?;
        let mut model = BaselineTagger::new(config, meta.vocab.clone(), 0);
        model.store.load_values(&checkpoint.tensors)?;
        Ok(Restored::new(model, meta.run, meta.progress, checkpoint))
    }
}

impl Tagger for BaselineTagger {
    fn kind(&self) -> ModelKind {
        ModelKind::Baseline
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
        let mut tape = Tape::new();
        let dists = self.forward(&mut tape, &self.store, doc)?;
        let labels: Vec<Bio> = dists
            .iter()
            .map(|&d| {
                let p = tape.value(d);
                let mut best = 0;
                for k in 1..3 {
                    if p[k] > p[best] {
                        best = k;
                    }
                }
                Bio::from_ordinal(best).expect("three classes")
            })
            .collect();
        Ok(Prediction {
            counts: LevelCounts {
                word: labels.len(),
                ..LevelCounts::default()
            },
            labels,
            trace: None,
        })
    }

    fn param_counts(&self) -> ParamCounts {
        self.store.counts()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub clip_norm: Option<f64>,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

/// Trains with one optimizer step per document; calls `on_epoch(epoch, mean_loss)`.
pub fn train_baseline(
    model: &mut BaselineTagger,
    train: &[IndexedDoc],
    cfg: &BaselineTrainConfig,
    mut on_epoch: impl FnMut(usize, f64, &BaselineTagger) -> Result<(), ModelError>,
) -> Result<(), ModelError> {
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, cfg.clip_norm);
    let usable: Vec<&IndexedDoc> = train.iter().filter(|d| !d.doc.is_empty()).collect();
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..usable.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &k in &order {
            let mut tape = Tape::new();
            let loss = model.loss(&mut tape, &model.store, usable[k])?;
            total += tape.scalar(loss);
            tape.backward(loss, &mut model.store)?;
            opt.step(&mut model.store)?;
        }
        on_epoch(epoch, total / usable.len().max(1) as f64, model)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, GenConfig};
    use crate::tensor::grad_check;

    fn small_docs(n: usize) -> (Vocab, Vec<IndexedDoc>) {
        let cfg = GenConfig {
            paragraphs: (1, 2),
            sentences_per_paragraph: (1, 3),
            words_per_sentence: (3, 6),
            ..GenConfig::task1(3)
        };
        let raw: Vec<_> = generate_synthetic(&cfg).unwrap().take(n).map(|d| d.doc).collect();
        let vocab = Vocab::build(&raw);
        let docs = raw.into_iter().map(|d| vocab.index(d)).collect();
        (vocab, docs)
    }

    #[test]
    fn param_count_formula() {
        let (vocab, _) = small_docs(2);
        let cfg = BaselineConfig { embed_dim: 5, hidden: 4 };
        let m = BaselineTagger::new(cfg, vocab.clone(), 0);
        assert_eq!(m.param_counts().total, cfg.param_count(vocab.len()));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (vocab, docs) = small_docs(1);
        let mut m = BaselineTagger::new(BaselineConfig { embed_dim: 3, hidden: 2 }, vocab, 1);
        let ids: Vec<ParamId> = m.store.ids().collect();
        let mut store = std::mem::take(&mut m.store);
        let report = grad_check(&mut store, &ids, |s, tape| {
            m.loss(tape, s, &docs[0]).map_err(|e| match e {
                ModelError::Tensor(t) => t,
                other => panic!("{other}"),
            })
        })
        .unwrap();
        assert!(report.passes(1e-6), "{report:?}");
    }

    #[test]
    fn training_reduces_loss_and_round_trips() {
        let (vocab, docs) = small_docs(20);
        let mut m = BaselineTagger::new(BaselineConfig { embed_dim: 8, hidden: 8 }, vocab, 2);
        let cfg = BaselineTrainConfig {
            epochs: 5,
            learning_rate: 1e-2,
            clip_norm: Some(5.0),
            optimizer: OptimizerKind::Adam,
            seed: 0,
        };
        let mut losses = Vec::new();
        train_baseline(&mut m, &docs, &cfg, |_, l, _| {
            losses.push(l);
            Ok(())
        })
        .unwrap();
        assert!(losses.last().unwrap() < &losses[0], "{losses:?}");

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.ckpt");
        m.save(&path, &serde_json::Value::Null, TrainingProgress::default()).unwrap();
        let back = crate::model::AnyModel::load(&path).unwrap();
        for d in &docs {
            assert_eq!(back.tagger().predict(d).unwrap(), m.predict(d).unwrap());
        }
        let p = m.predict(&docs[0]).unwrap();
        assert_eq!(p.counts.wlar().unwrap(), 1.0);
    }
}
