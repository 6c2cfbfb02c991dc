//! Recurrent action controller and episode runner.
//!
//! Each step reads one row from every memory bank at the current location,
//! appends the previous action as a one-hot vector, updates the recurrent
//! state once and emits a distribution over the nine actions.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{
    correct_actions, execute, skip, trace_line, Action, ActionSet, LevelCounts, Location, ACTION_COUNT,
};
use crate::corpus::{Bio, Document};
use crate::encoder::HierarchicalMemory;
use crate::tensor::{init, LstmParams, ParamId, ParamStore, Tape, TanhCellParams, Tensor, TensorError, Var};

/// Probabilities below this are raised to it before a categorical draw.
pub const SAMPLE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("document `{0}` has no tokens")]
    EmptyDocument(String),
    #[error("controller queried at END")]
    AtEnd,
    #[error("document `{0}` has no gold labels (required for sample_correct)")]
    MissingGold(String),
    #[error("action script ended at {0} before the document was fully labelled")]
    ScriptExhausted(Location),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    #[default]
    Lstm,
    Tanh,
}

#[derive(Debug, Clone, Copy)]
pub enum RecurrentCell {
    Lstm(LstmParams),
    Tanh(TanhCellParams),
}

#[derive(Debug, Clone, Copy)]
pub struct ControllerParams {
    pub cell: RecurrentCell,
    pub head_w: ParamId,
    pub head_b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl ControllerParams {
    /// `memory_dim` is `d_w + d_s + d_p`; the previous-action one-hot is added here.
    pub fn create<R: Rng + ?Sized>(
        store: &mut ParamStore,
        memory_dim: usize,
        hidden: usize,
        kind: CellKind,
        rng: &mut R,
    ) -> Self {
        let input = memory_dim + ACTION_COUNT;
        let cell = match kind {
            CellKind::Lstm => RecurrentCell::Lstm(LstmParams::create(store, "controller.rnn", input, hidden, rng)),
            CellKind::Tanh => RecurrentCell::Tanh(TanhCellParams::create(store, "controller.rnn", input, hidden, rng)),
        };
        let head_w = store.add(
            "controller.head.w",
            init::uniform(rng, &[ACTION_COUNT, hidden], init::RECURRENT_SCALE),
        );
        let head_b = store.add("controller.head.b", Tensor::zeros(&[ACTION_COUNT]));
        Self {
            cell,
            head_w,
            head_b,
            input,
            hidden,
        }
    }

    pub fn param_count(memory_dim: usize, hidden: usize, kind: CellKind) -> usize {
        let input = memory_dim + ACTION_COUNT;
        let cell = match kind {
            CellKind::Lstm => LstmParams::param_count(input, hidden),
            CellKind::Tanh => TanhCellParams::param_count(input, hidden),
        };
        cell + ACTION_COUNT * hidden + ACTION_COUNT
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    pub hidden: Var,
    /// LSTM cell state; `None` for the tanh cell.
    pub cell: Option<Var>,
    pub location: Location,
    pub prev_action: Option<Action>,
}

impl ControllerState {
    pub fn prev_action_vector(&self) -> [f64; ACTION_COUNT] {
        self.prev_action.map_or([0.0; ACTION_COUNT], Action::one_hot)
    }
}

pub fn init_state(tape: &mut Tape, params: &ControllerParams, doc: &Document) -> Result<ControllerState, ControllerError> {
    if doc.is_empty() {
        return Err(ControllerError::EmptyDocument(doc.id().to_string()));
    }
    let hidden = tape.zeros(params.hidden);
    let cell = match params.cell {
        RecurrentCell::Lstm(_) => Some(tape.zeros(params.hidden)),
        RecurrentCell::Tanh(_) => None,
    };
    Ok(ControllerState {
        hidden,
        cell,
        location: Location::START,
        prev_action: None,
    })
}

/// One prediction step. Returns the action distribution and the state with
/// its recurrent part advanced (location and previous action unchanged).
pub fn step_distribution(
    tape: &mut Tape,
    store: &ParamStore,
    params: &ControllerParams,
    memory: &HierarchicalMemory,
    state: &ControllerState,
) -> Result<(Var, ControllerState), ControllerError> {
    let [w, s, p] = state.location.triple().ok_or(ControllerError::AtEnd)?;
    let prev = tape.input(state.prev_action_vector().to_vec());
    let x = tape.concat(&[
        memory.words[w - 1],
        memory.sentences[s - 1],
        memory.paragraphs[p - 1],
        prev,
    ]);
    let (hidden, cell) = match (&params.cell, state.cell) {
        (RecurrentCell::Lstm(lp), Some(c)) => {
            let (h, c) = tape.lstm_cell(store, lp, x, state.hidden, c)?;
            (h, Some(c))
        }
        (RecurrentCell::Tanh(tp), None) => (tape.tanh_cell(store, tp, x, state.hidden)?, None),
        _ => {
            return Err(TensorError::Shape {
                op: "controller state",
                expected: "cell state matching the recurrent cell kind".into(),
                found: "mismatched state".into(),
            }
            .into())
        }
    };
    let logits = tape.dense(store, params.head_w, params.head_b, hidden)?;
    let dist = tape.softmax(logits)?;
    Ok((
        dist,
        ControllerState {
            hidden,
            cell,
            ..*state
        },
    ))
}

/// How the next action is chosen.
#[derive(Debug, Clone, Copy)]
pub enum PolicyMode<'a> {
    /// Argmax (lowest index on ties).
    Greedy,
    /// Sample the full distribution.
    SampleAll,
    /// Sample proportionally among the currently correct actions.
    SampleCorrect,
    /// Replay a fixed action sequence.
    Scripted(&'a [Action]),
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    /// State before the step (its location is where the action was taken).
    pub state: ControllerState,
    pub dist: Var,
    pub probs: [f64; ACTION_COUNT],
    pub action: Action,
    pub emitted: Vec<Bio>,
    /// Correct-action set; present when the document has gold labels.
    pub correct: Option<ActionSet>,
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub steps: Vec<StepRecord>,
    pub labels: Vec<Bio>,
    pub counts: LevelCounts,
}

impl Episode {
    pub fn actions(&self) -> Vec<Action> {
        self.steps.iter().map(|s| s.action).collect()
    }

    pub fn trace(&self, doc_id: &str) -> EpisodeTrace {
        EpisodeTrace {
            doc_id: doc_id.to_string(),
            steps: self
                .steps
                .iter()
                .map(|s| TraceStep {
                    location: s.state.location.triple().expect("recorded step has a location"),
                    distribution: s.probs,
                    action: s.action,
                    emitted: s.emitted.clone(),
                })
                .collect(),
            labels: self.labels.clone(),
            counts: self.counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub location: [usize; 3],
    pub distribution: [f64; ACTION_COUNT],
    pub action: Action,
    pub emitted: Vec<Bio>,
}

/// Tape-free record of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub doc_id: String,
    pub steps: Vec<TraceStep>,
    pub labels: Vec<Bio>,
    pub counts: LevelCounts,
}

impl EpisodeTrace {
    pub fn wlar(&self) -> f64 {
        self.counts.wlar().unwrap_or(0.0)
    }

    /// Trace lines followed by a summary footer.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (t, s) in self.steps.iter().enumerate() {
            let [w, se, p] = s.location;
            let loc = Location::At {
                word: w,
                sentence: se,
                paragraph: p,
            };
            out.push_str(&trace_line(t + 1, loc, s.action, s.emitted.len()));
            out.push('\n');
        }
        out.push_str(&format!(
            "summary | N_aw {} | N_as {} | N_ap {} | wlar {:.4}\n",
            self.counts.word,
            self.counts.sentence,
            self.counts.paragraph,
            self.wlar()
        ));
        out
    }
}

fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = k;
        }
    }
    best
}

fn sample<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = k;
        if u < acc {
            return k;
        }
    }
    last
}

/// Runs Prediction → Execution → Update until the read-heads reach `End`.
pub fn run_episode<R: Rng + ?Sized>(
    tape: &mut Tape,
    store: &ParamStore,
    params: &ControllerParams,
    doc: &Document,
    memory: &HierarchicalMemory,
    mode: PolicyMode<'_>,
    rng: &mut R,
) -> Result<Episode, ControllerError> {
    if matches!(mode, PolicyMode::SampleCorrect) && doc.labels().is_none() {
        return Err(ControllerError::MissingGold(doc.id().to_string()));
    }
    let mut state = init_state(tape, params, doc)?;
    let mut steps = Vec::new();
    let mut counts = LevelCounts::default();
    let mut labels = Vec::with_capacity(doc.len());
    while !state.location.is_end() {
        let (dist, next) = step_distribution(tape, store, params, memory, &state)?;
        let probs: [f64; ACTION_COUNT] = tape.value(dist).try_into().expect("nine-way distribution");
        let correct = doc.labels().map(|_| correct_actions(state.location, doc));
        let index = match mode {
            PolicyMode::Greedy => argmax(&probs),
            PolicyMode::SampleAll => {
                let w: Vec<f64> = probs.iter().map(|p| p.max(SAMPLE_FLOOR)).collect();
                sample(&w, rng)
            }
            PolicyMode::SampleCorrect => {
                let set = correct.expect("gold checked above");
                let w: Vec<f64> = Action::all()
                    .map(|a| if set.contains(a) { probs[a.index()].max(SAMPLE_FLOOR) } else { 0.0 })
                    .collect();
                sample(&w, rng)
            }
            PolicyMode::Scripted(script) => script
                .get(steps.len())
                .ok_or(ControllerError::ScriptExhausted(state.location))?
                .index(),
        };
        let action = Action::from_index(index).expect("index below nine");
        let emitted = execute(action, state.location, doc);
        labels.extend_from_slice(&emitted);
        counts.add(action.level);
        let location = skip(state.location, action, doc);
        steps.push(StepRecord {
            state,
            dist,
            probs,
            action,
            emitted,
            correct,
        });
        state = ControllerState {
            location,
            prev_action: Some(action),
            ..next
        };
    }
    Ok(Episode { steps, labels, counts })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::actions::Level;
    use crate::corpus::Span;
    use crate::encoder::{encode, EncoderParams};

    struct Fixture {
        store: ParamStore,
        enc: EncoderParams,
        ctl: ControllerParams,
    }

    fn fixture(kind: CellKind) -> Fixture {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let enc = EncoderParams::create(&mut store, 10, 3, 2, 2, &mut rng);
        let ctl = ControllerParams::create(&mut store, 3 + 4 + 4, 5, kind, &mut rng);
        Fixture { store, enc, ctl }
    }

    fn example_doc() -> Document {
        use Bio::*;
        let mut gold = vec![B, I, I, I, I, I, I, I, O, O, O, O, B];
        gold.extend([I; 4]);
        Document::new(
            "ex",
            (0..17).map(|k| format!("w{k}")).collect(),
            vec![Span::new(0, 8), Span::new(8, 12), Span::new(12, 17)],
            vec![Span::new(0, 2), Span::new(2, 3)],
            Some(gold),
        )
        .unwrap()
    }

    fn ids(doc: &Document) -> Vec<usize> {
        (0..doc.len()).map(|k| k % 10).collect()
    }

    #[test]
    fn init_state_values() {
        let f = fixture(CellKind::Lstm);
        let mut tape = Tape::new();
        let s = init_state(&mut tape, &f.ctl, &example_doc()).unwrap();
        assert_eq!(s.location.triple(), Some([1, 1, 1]));
        assert_eq!(s.prev_action_vector(), [0.0; 9]);
        assert_eq!(tape.value(s.hidden), &[0.0; 5]);
        let empty = Document::new("e", vec![], vec![], vec![], None).unwrap();
        assert!(matches!(
            init_state(&mut tape, &f.ctl, &empty),
            Err(ControllerError::EmptyDocument(_))
        ));
    }

    #[test]
    fn distribution_is_normalized_and_uniform_at_zero() {
        let mut f = fixture(CellKind::Lstm);
        let doc = example_doc();
        let mut tape = Tape::new();
        let m = encode(&mut tape, &f.store, &f.enc, &doc, &ids(&doc)).unwrap();
        let s = init_state(&mut tape, &f.ctl, &doc).unwrap();
        let (d, _) = step_distribution(&mut tape, &f.store, &f.ctl, &m, &s).unwrap();
        let p = tape.value(d);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v > 0.0));

        for id in [f.ctl.head_w, f.ctl.head_b] {
            f.store.get_mut(id).value_mut().fill(0.0);
        }
        let (d, _) = step_distribution(&mut tape, &f.store, &f.ctl, &m, &s).unwrap();
        for &v in tape.value(d) {
            assert!((v - 1.0 / 9.0).abs() < 1e-15);
        }
        let end = ControllerState {
            location: Location::End,
            ..s
        };
        assert!(matches!(
            step_distribution(&mut tape, &f.store, &f.ctl, &m, &end),
            Err(ControllerError::AtEnd)
        ));
    }

    #[test]
    fn prev_action_changes_logits() {
        let f = fixture(CellKind::Lstm);
        let doc = example_doc();
        let mut tape = Tape::new();
        let m = encode(&mut tape, &f.store, &f.enc, &doc, &ids(&doc)).unwrap();
        let s = init_state(&mut tape, &f.ctl, &doc).unwrap();
        let (a, _) = step_distribution(&mut tape, &f.store, &f.ctl, &m, &s).unwrap();
        let s2 = ControllerState {
            prev_action: Some(Action::new(Level::Paragraph, Bio::O)),
            ..s
        };
        let (b, _) = step_distribution(&mut tape, &f.store, &f.ctl, &m, &s2).unwrap();
        assert_ne!(tape.value(a), tape.value(b));
    }

    #[test]
    fn scripted_worked_example() {
        let f = fixture(CellKind::Lstm);
        let doc = example_doc();
        let mut tape = Tape::new();
        let m = encode(&mut tape, &f.store, &f.enc, &doc, &ids(&doc)).unwrap();
        let w_o = Action::new(Level::Word, Bio::O);
        let script = [
            Action::new(Level::Sentence, Bio::B),
            w_o,
            w_o,
            w_o,
            w_o,
            Action::new(Level::Paragraph, Bio::B),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ep = run_episode(&mut tape, &f.store, &f.ctl, &doc, &m, PolicyMode::Scripted(&script), &mut rng).unwrap();
        assert_eq!(ep.steps[1].state.location.triple(), Some([9, 2, 1]));
        assert_eq!(ep.steps[1].state.prev_action_vector(), [0., 0., 0., 1., 0., 0., 0., 0., 0.]);
        assert_eq!(ep.steps[0].emitted, vec![Bio::B, Bio::I, Bio::I, Bio::I, Bio::I, Bio::I, Bio::I, Bio::I]);
        assert_eq!(ep.labels, doc.labels().unwrap());
        assert!((ep.counts.wlar().unwrap() - 4.0 / 6.0).abs() < 1e-15);
        let text = ep.trace(doc.id()).to_text();
        assert!(text.starts_with("step 1 | loc [1,1,1] | action sentence-B | emit 8 labels\n"));
        assert!(text.contains("summary | N_aw 4 | N_as 1 | N_ap 1"));

        let short = &script[..2];
        assert!(matches!(
            run_episode(&mut tape, &f.store, &f.ctl, &doc, &m, PolicyMode::Scripted(short), &mut rng),
            Err(ControllerError::ScriptExhausted(_))
        ));
    }

    #[test]
    fn all_modes_terminate_with_n_labels() {
        for kind in [CellKind::Lstm, CellKind::Tanh] {
            let f = fixture(kind);
            let doc = example_doc();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            for mode in [PolicyMode::Greedy, PolicyMode::SampleAll, PolicyMode::SampleCorrect] {
                let mut tape = Tape::new();
                let m = encode(&mut tape, &f.store, &f.enc, &doc, &ids(&doc)).unwrap();
                let ep = run_episode(&mut tape, &f.store, &f.ctl, &doc, &m, mode, &mut rng).unwrap();
                assert_eq!(ep.labels.len(), doc.len());
                assert!(ep.steps.len() <= doc.len());
                assert_eq!(ep.counts.total(), ep.steps.len());
                if matches!(mode, PolicyMode::SampleCorrect) {
                    assert_eq!(ep.labels, doc.labels().unwrap());
                }
            }
        }
    }

    #[test]
    fn sample_correct_needs_gold() {
        let f = fixture(CellKind::Lstm);
        let doc = example_doc().with_labels(None).unwrap();
        let mut tape = Tape::new();
        let m = encode(&mut tape, &f.store, &f.enc, &doc, &ids(&doc)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            run_episode(&mut tape, &f.store, &f.ctl, &doc, &m, PolicyMode::SampleCorrect, &mut rng),
            Err(ControllerError::MissingGold(_))
        ));
    }

    #[test]
    fn replay_consistency() {
        let f = fixture(CellKind::Lstm);
        let doc = example_doc();
        let mut tape = Tape::new();
        let m = encode(&mut tape, &f.store, &f.enc, &doc, &ids(&doc)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ep = run_episode(&mut tape, &f.store, &f.ctl, &doc, &m, PolicyMode::SampleAll, &mut rng).unwrap();
        for s in &ep.steps {
            let (d, _) = step_distribution(&mut tape, &f.store, &f.ctl, &m, &s.state).unwrap();
            assert_eq!(tape.value(d), &s.probs);
        }
    }

    #[test]
    fn sampling_respects_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let k = sample(&[0.0, 0.3, 0.0, 0.7], &mut rng);
            assert!(k == 1 || k == 3);
        }
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }
}
