//! Finite-difference gradient checks over the differentiable building
//! blocks and one full joint objective with frozen action choices.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::actions::Action;
use crate::controller::PolicyMode;
use crate::corpus::{generate_synthetic, GenConfig, IndexedDoc, Vocab};
use crate::model::{ModelConfig, ModelError, ZoomNet};
use crate::tensor::tape::bilstm_run;
use crate::tensor::{
    grad_check, init, GradCheckReport, LstmParams, ParamId, ParamStore, Tape, TensorError, Var,
};
use crate::training::{build_objective, RewardVariant, TrainConfig, TrainError};

/// Tolerance for compositions of affine maps and row lookups.
pub const AFFINE_TOLERANCE: f64 = 1e-6;
/// Tolerance for anything with a nonlinearity.
pub const NONLINEAR_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub tolerance: f64,
    pub report: GradCheckReport,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.report.passes(self.tolerance)
    }
}

struct Probe {
    w: ParamId,
    b: ParamId,
}

impl Probe {
    fn new(store: &mut ParamStore, n: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: store.add("probe.w", init::uniform(rng, &[1, n], 1.0)),
            b: store.add("probe.b", init::uniform(rng, &[1], 1.0)),
        }
    }

    fn apply(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> crate::tensor::Result<Var> {
        tape.dense(store, self.w, self.b, x)
    }
}

fn all_ids(store: &ParamStore) -> Vec<ParamId> {
    store.ids().collect()
}

fn embed_check(rng: &mut ChaCha8Rng) -> Result<CheckResult, TensorError> {
    let mut store = ParamStore::new();
    let table = store.add("embed", init::uniform(rng, &[5, 3], 1.0));
    let probe = Probe::new(&mut store, 9, rng);
    let ids = all_ids(&store);
    let report = grad_check(&mut store, &ids, |s, tape| {
        let rows = [1, 3, 1]
            .iter()
            .map(|&r| tape.embed_lookup(s, table, r))
            .collect::<Result<Vec<_>, _>>()?;
        let x = tape.concat(&rows);
        probe.apply(tape, s, x)
    })?;
    Ok(CheckResult {
        name: "embed_lookup",
        tolerance: AFFINE_TOLERANCE,
        report,
    })
}

fn dense_check(rng: &mut ChaCha8Rng) -> Result<CheckResult, TensorError> {
    let mut store = ParamStore::new();
    let w = store.add("dense.w", init::uniform(rng, &[4, 3], 1.0));
    let b = store.add("dense.b", init::uniform(rng, &[4], 1.0));
    let probe = Probe::new(&mut store, 4, rng);
    let x = init::uniform(rng, &[3], 1.0);
    let ids = all_ids(&store);
    let report = grad_check(&mut store, &ids, |s, tape| {
        let xv = tape.input(x.data().to_vec());
        let h = tape.dense(s, w, b, xv)?;
        probe.apply(tape, s, h)
    })?;
    Ok(CheckResult {
        name: "dense",
        tolerance: AFFINE_TOLERANCE,
        report,
    })
}

fn softmax_check(rng: &mut ChaCha8Rng) -> Result<CheckResult, TensorError> {
    let mut store = ParamStore::new();
    let w = store.add("head.w", init::uniform(rng, &[9, 4], 1.0));
    let b = store.add("head.b", init::uniform(rng, &[9], 1.0));
    let x = init::uniform(rng, &[4], 1.0);
    let mask = [true, false, false, true, false, false, false, false, true];
    let ids = all_ids(&store);
    let report = grad_check(&mut store, &ids, |s, tape| {
        let xv = tape.input(x.data().to_vec());
        let logits = tape.dense(s, w, b, xv)?;
        let y = tape.softmax(logits)?;
        let mass = tape.set_log_mass(y, &mask)?;
        let pick = tape.log_pick(y, 3)?;
        tape.weighted_sum(&[(mass, -1.0), (pick, 0.7)])
    })?;
    Ok(CheckResult {
        name: "softmax composition",
        tolerance: NONLINEAR_TOLERANCE,
        report,
    })
}

fn lstm_check(rng: &mut ChaCha8Rng) -> Result<CheckResult, TensorError> {
    let mut store = ParamStore::new();
    let cell = LstmParams::create(&mut store, "cell", 3, 4, rng);
    for id in [cell.w, cell.b] {
        let shape = store.value(id).shape().to_vec();
        *store.get_mut(id).value_mut() = init::uniform(rng, &shape, 0.5);
    }
    let probe = Probe::new(&mut store, 8, rng);
    let x = init::uniform(rng, &[3], 1.0);
    let h0 = init::uniform(rng, &[4], 1.0);
    let c0 = init::uniform(rng, &[4], 1.0);
    let ids = all_ids(&store);
    let report = grad_check(&mut store, &ids, |s, tape| {
        let xv = tape.input(x.data().to_vec());
        let hv = tape.input(h0.data().to_vec());
        let cv = tape.input(c0.data().to_vec());
        let (h, c) = tape.lstm_cell(s, &cell, xv, hv, cv)?;
        let both = tape.concat(&[h, c]);
        probe.apply(tape, s, both)
    })?;
    Ok(CheckResult {
        name: "lstm cell",
        tolerance: NONLINEAR_TOLERANCE,
        report,
    })
}

fn bilstm_check(rng: &mut ChaCha8Rng) -> Result<CheckResult, TensorError> {
    let mut store = ParamStore::new();
    let table = store.add("embed", init::uniform(rng, &[6, 3], 1.0));
    let fwd = LstmParams::create(&mut store, "bilstm.fwd", 3, 3, rng);
    let bwd = LstmParams::create(&mut store, "bilstm.bwd", 3, 3, rng);
    for id in [fwd.w, fwd.b, bwd.w, bwd.b] {
        let shape = store.value(id).shape().to_vec();
        *store.get_mut(id).value_mut() = init::uniform(rng, &shape, 0.5);
    }
    let probe = Probe::new(&mut store, 6, rng);
    let ids = all_ids(&store);
    let report = grad_check(&mut store, &ids, |s, tape| {
        let xs = [0, 4, 2, 5]
            .iter()
            .map(|&r| tape.embed_lookup(s, table, r))
            .collect::<Result<Vec<_>, _>>()?;
        let hs = bilstm_run(tape, s, &fwd, &bwd, &xs)?;
        let pooled = tape.max_pool(&hs)?;
        probe.apply(tape, s, pooled)
    })?;
    Ok(CheckResult {
        name: "bilstm + maxpool",
        tolerance: NONLINEAR_TOLERANCE,
        report,
    })
}

fn model_err(e: ModelError) -> TensorError {
    match e {
        ModelError::Tensor(t) => t,
        other => TensorError::Checkpoint(other.to_string()),
    }
}

fn train_err(e: TrainError) -> TensorError {
    match e {
        TrainError::Tensor(t) => t,
        TrainError::Model(m) => model_err(m),
        other => TensorError::Checkpoint(other.to_string()),
    }
}

/// Small labelled document and a matching tiny network.
pub fn tiny_model(seed: u64) -> (ZoomNet, IndexedDoc) {
    let gen = GenConfig {
        paragraphs: (2, 2),
        sentences_per_paragraph: (2, 2),
        words_per_sentence: (3, 4),
        vocab_size: 12,
        density: 0.5,
        ..GenConfig::task1(seed)
    };
    let doc = generate_synthetic(&gen).expect("valid generator config").next().expect("infinite stream").doc;
    let vocab = Vocab::build([&doc]);
    let indexed = vocab.index(doc);
    let cfg = ModelConfig {
        embed_dim: 3,
        word_hidden: 2,
        sentence_hidden: 2,
        controller_hidden: 3,
        ..ModelConfig::default()
    };
    let mut model = ZoomNet::new(cfg, vocab, seed);
    // larger weights than the default init make the check sensitive
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for p in model.store.iter_mut() {
        let shape = p.value().shape().to_vec();
        *p.value_mut() = init::uniform(&mut rng, &shape, 0.5);
    }
    (model, indexed)
}

/// Full objective with the sampled action sequence and reward held fixed.
pub fn joint_objective_check(variant: RewardVariant, seed: u64) -> Result<CheckResult, TensorError> {
    let (mut model, doc) = tiny_model(seed);
    let cfg = TrainConfig {
        lambda: 0.1,
        reward: variant,
        ..TrainConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tape = Tape::new();
    let episode = model
        .episode(&mut tape, &doc, PolicyMode::SampleCorrect, &mut rng)
        .map_err(model_err)?;
    let actions: Vec<Action> = episode.actions();
    let reward = build_objective(&mut tape, &episode, &cfg, None, None).map_err(train_err)?.reward;

    let mut store = std::mem::take(&mut model.store);
    let ids = all_ids(&store);
    let report = grad_check(&mut store, &ids, |s, tape| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ep = model
            .episode_with(s, tape, &doc, PolicyMode::Scripted(&actions), &mut rng)
            .map_err(model_err)?;
        Ok(build_objective(tape, &ep, &cfg, None, Some(reward)).map_err(train_err)?.root)
    })?;
    Ok(CheckResult {
        name: match variant {
            RewardVariant::LossScaled => "joint objective (loss_scaled reward)",
            RewardVariant::NegWlar => "joint objective (neg_wlar reward)",
        },
        tolerance: NONLINEAR_TOLERANCE,
        report,
    })
}

pub fn gradcheck_suite(seed: u64) -> Result<Vec<CheckResult>, TensorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(vec![
        embed_check(&mut rng)?,
        dense_check(&mut rng)?,
        softmax_check(&mut rng)?,
        lstm_check(&mut rng)?,
        bilstm_check(&mut rng)?,
        joint_objective_check(RewardVariant::NegWlar, seed)?,
        joint_objective_check(RewardVariant::LossScaled, seed)?,
    ])
}
