//! Multi-granularity labelling actions and the read-head state machine.
//!
//! Locations are 1-based `[word, sentence, paragraph]` triples. An action
//! emits labels over its coverage (the current word, or the rest of the
//! current sentence/paragraph) and then moves the read-heads past it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Bio, Document};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ActionError {
    #[error("action history is empty")]
    EmptyHistory,
    #[error("unknown action `{0}`")]
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Word,
    Sentence,
    Paragraph,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Word, Level::Sentence, Level::Paragraph];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Level::Word => "word",
            Level::Sentence => "sentence",
            Level::Paragraph => "paragraph",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub level: Level,
    pub kind: Bio,
}

pub const ACTION_COUNT: usize = 9;

impl Action {
    pub const fn new(level: Level, kind: Bio) -> Self {
        Self { level, kind }
    }

    /// Canonical index `3 * level + kind` with levels (word, sentence,
    /// paragraph) and kinds (B, I, O).
    pub fn index(self) -> usize {
        3 * self.level.ordinal() + self.kind.ordinal()
    }

    pub fn from_index(index: usize) -> Option<Self> {
        if index >= ACTION_COUNT {
            return None;
        }
        Some(Self {
            level: Level::ALL[index / 3],
            kind: Bio::from_ordinal(index % 3)?,
        })
    }

    pub fn all() -> impl Iterator<Item = Action> {
        (0..ACTION_COUNT).filter_map(Action::from_index)
    }

    pub fn one_hot(self) -> [f64; ACTION_COUNT] {
        let mut v = [0.0; ACTION_COUNT];
        v[self.index()] = 1.0;
        v
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.level.name(), self.kind)
    }
}

impl FromStr for Action {
    type Err = ActionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || ActionError::Unknown(s.to_string());
        let (level, kind) = s.split_once('-').ok_or_else(unknown)?;
        let level = Level::ALL
            .into_iter()
            .find(|l| l.name() == level)
            .ok_or_else(unknown)?;
        let kind = match kind {
            "B" => Bio::B,
            "I" => Bio::I,
            "O" => Bio::O,
            _ => return Err(unknown()),
        };
        Ok(Action::new(level, kind))
    }
}

/// Subset of the nine actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ActionSet(u16);

impl ActionSet {
    pub fn insert(&mut self, a: Action) {
        self.0 |= 1 << a.index();
    }

    pub fn contains(&self, a: Action) -> bool {
        self.0 & (1 << a.index()) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = Action> + '_ {
        Action::all().filter(|a| self.contains(*a))
    }

    pub fn mask(&self) -> [bool; ACTION_COUNT] {
        std::array::from_fn(|k| self.0 & (1 << k) != 0)
    }
}

impl FromIterator<Action> for ActionSet {
    fn from_iter<T: IntoIterator<Item = Action>>(iter: T) -> Self {
        let mut s = ActionSet::default();
        for a in iter {
            s.insert(a);
        }
        s
    }
}

/// Read-head position (1-based) or the terminal location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Location {
    At {
        word: usize,
        sentence: usize,
        paragraph: usize,
    },
    End,
}

impl Location {
    pub const START: Location = Location::At {
        word: 1,
        sentence: 1,
        paragraph: 1,
    };

    /// Location of 0-based token `t`, or `End` past the last token.
    pub fn of_token(doc: &Document, t: usize) -> Location {
        if t >= doc.len() {
            return Location::End;
        }
        let s = doc.sentence_of(t);
        Location::At {
            word: t + 1,
            sentence: s + 1,
            paragraph: doc.paragraph_of(s) + 1,
        }
    }

    pub fn triple(&self) -> Option<[usize; 3]> {
        match *self {
            Location::At {
                word,
                sentence,
                paragraph,
            } => Some([word, sentence, paragraph]),
            Location::End => None,
        }
    }

    pub fn is_end(&self) -> bool {
        matches!(self, Location::End)
    }

    /// 0-based token index.
    pub fn token(&self) -> Option<usize> {
        self.triple().map(|t| t[0] - 1)
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.triple() {
            Some([w, s, p]) => write!(f, "[{w},{s},{p}]"),
            None => write!(f, "END"),
        }
    }
}

/// Tokens an action at `loc` labels, as 1-based inclusive bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coverage {
    pub first: usize,
    pub last: usize,
}

impl Coverage {
    pub fn len(&self) -> usize {
        self.last + 1 - self.first
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// 0-based half-open token range.
    pub fn range(&self) -> std::ops::Range<usize> {
        self.first - 1..self.last
    }
}

fn unpack(loc: Location) -> [usize; 3] {
    loc.triple().expect("action at END location")
}

/// Coverage of an action of `level` at `loc`. Panics at `End`.
pub fn coverage(loc: Location, level: Level, doc: &Document) -> Coverage {
    let [w, s, p] = unpack(loc);
    let last = match level {
        Level::Word => w,
        Level::Sentence => doc.sentences()[s - 1].end,
        Level::Paragraph => doc.paragraph_tokens(p - 1).end,
    };
    Coverage { first: w, last }
}

/// Labels emitted by `a` at `loc`.
pub fn execute(a: Action, loc: Location, doc: &Document) -> Vec<Bio> {
    let c = coverage(loc, a.level, doc).len();
    match a.kind {
        Bio::O => vec![Bio::O; c],
        Bio::I => vec![Bio::I; c],
        Bio::B => {
            let mut v = vec![Bio::I; c];
            v[0] = Bio::B;
            v
        }
    }
}

/// Moves the read-heads past the unit `a` acted on.
pub fn skip(loc: Location, a: Action, doc: &Document) -> Location {
    let [w, s, p] = unpack(loc);
    match a.level {
        Level::Word => Location::of_token(doc, w),
        Level::Sentence => match doc.sentences().get(s) {
            Some(next) => Location::of_token(doc, next.start),
            None => Location::End,
        },
        Level::Paragraph => match doc.paragraphs().get(p) {
            Some(next) => Location::of_token(doc, doc.sentences()[next.start].start),
            None => Location::End,
        },
    }
}

/// Actions whose emission matches the gold labels over their coverage.
/// Panics if `doc` has no gold labels or `loc` is `End`.
pub fn correct_actions(loc: Location, doc: &Document) -> ActionSet {
    let gold = doc.labels().expect("correct_actions needs gold labels");
    let [w, ..] = unpack(loc);
    let mut set = ActionSet::default();
    for level in Level::ALL {
        let cov = coverage(loc, level, doc);
        let span = &gold[cov.range()];
        let rest_all_i = span[1..].iter().all(|&b| b == Bio::I);
        match span[0] {
            Bio::O if span.iter().all(|&b| b == Bio::O) => set.insert(Action::new(level, Bio::O)),
            Bio::B if rest_all_i => set.insert(Action::new(level, Bio::B)),
            Bio::I if rest_all_i => set.insert(Action::new(level, Bio::I)),
            _ => {}
        }
    }
    debug_assert!(set.contains(Action::new(Level::Word, gold[w - 1])));
    set
}

/// Concatenation of emitted label runs in execution order.
pub fn assemble<'a>(runs: impl IntoIterator<Item = &'a [Bio]>) -> Vec<Bio> {
    runs.into_iter().flatten().copied().collect()
}

/// Action counts per level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LevelCounts {
    #[serde(rename = "N_aw")]
    pub word: usize,
    #[serde(rename = "N_as")]
    pub sentence: usize,
    #[serde(rename = "N_ap")]
    pub paragraph: usize,
}

impl LevelCounts {
    pub fn from_actions<'a>(actions: impl IntoIterator<Item = &'a Action>) -> Self {
        let mut c = Self::default();
        for a in actions {
            c.add(a.level);
        }
        c
    }

    pub fn add(&mut self, level: Level) {
        match level {
            Level::Word => self.word += 1,
            Level::Sentence => self.sentence += 1,
            Level::Paragraph => self.paragraph += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.word + self.sentence + self.paragraph
    }

    /// Word-level action ratio.
    pub fn wlar(&self) -> Result<f64, ActionError> {
        match self.total() {
            0 => Err(ActionError::EmptyHistory),
            t => Ok(self.word as f64 / t as f64),
        }
    }
}

/// Ordered `(location, action)` record of an episode.
pub type ActionHistory = [(Location, Action)];

pub fn wlar(history: &ActionHistory) -> Result<f64, ActionError> {
    LevelCounts::from_actions(history.iter().map(|(_, a)| a)).wlar()
}

/// One trace line: `step t | loc [w,s,p] | action <level>-<kind> | emit k labels`.
pub fn trace_line(step: usize, loc: Location, action: Action, emitted: usize) -> String {
    format!("step {step} | loc {loc} | action {action} | emit {emitted} labels")
}

/// Runs a fixed action script from the start location. Stops early at `End`.
pub fn run_script(doc: &Document, script: &[Action]) -> (Vec<(Location, Action)>, Vec<Bio>, Location) {
    let mut loc = Location::START;
    let mut history = Vec::new();
    let mut runs = Vec::new();
    for &a in script {
        if loc.is_end() {
            break;
        }
        runs.push(execute(a, loc, doc));
        history.push((loc, a));
        loc = skip(loc, a, doc);
    }
    let labels = assemble(runs.iter().map(Vec::as_slice));
    (history, labels, loc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Span;

    use Bio::*;

    const SB: Action = Action::new(Level::Sentence, B);

    /// Two paragraphs, three sentences; the first sentence has 8 words.
    fn example_doc(labels: Option<Vec<Bio>>) -> Document {
        let n = 8 + 4 + 5;
        Document::new(
            "example",
            (0..n).map(|k| format!("w{k}")).collect(),
            vec![Span::new(0, 8), Span::new(8, 12), Span::new(12, 17)],
            vec![Span::new(0, 2), Span::new(2, 3)],
            labels,
        )
        .unwrap()
    }

    fn flat(sent_lens: &[usize], par_sizes: &[usize], labels: &str) -> Document {
        let mut sentences = Vec::new();
        let mut start = 0;
        for &l in sent_lens {
            sentences.push(Span::new(start, start + l));
            start += l;
        }
        let mut paragraphs = Vec::new();
        let mut s0 = 0;
        for &k in par_sizes {
            paragraphs.push(Span::new(s0, s0 + k));
            s0 += k;
        }
        let labels = labels
            .chars()
            .map(|c| match c {
                'B' => B,
                'I' => I,
                _ => O,
            })
            .collect();
        Document::new(
            "t",
            (0..start).map(|k| format!("w{k}")).collect(),
            sentences,
            paragraphs,
            Some(labels),
        )
        .unwrap()
    }

    #[test]
    fn index_bijection() {
        for k in 0..ACTION_COUNT {
            assert_eq!(Action::from_index(k).unwrap().index(), k);
        }
        assert_eq!(SB.index(), 3);
        assert_eq!(SB.one_hot(), [0., 0., 0., 1., 0., 0., 0., 0., 0.]);
        assert!(Action::from_index(9).is_none());
        for a in Action::all() {
            assert_eq!(a.to_string().parse::<Action>().unwrap(), a);
        }
        assert!("line-B".parse::<Action>().is_err());
    }

    #[test]
    fn coverage_examples() {
        let d = example_doc(None);
        assert_eq!(coverage(Location::START, Level::Sentence, &d), Coverage { first: 1, last: 8 });
        assert_eq!(coverage(Location::START, Level::Word, &d).len(), 1);
        assert_eq!(coverage(Location::START, Level::Paragraph, &d), Coverage { first: 1, last: 12 });
        let d5 = flat(&[5], &[1], "OOOOO");
        let loc = Location::of_token(&d5, 2);
        assert_eq!(coverage(loc, Level::Sentence, &d5), Coverage { first: 3, last: 5 });
    }

    #[test]
    fn execute_examples() {
        let d = example_doc(None);
        assert_eq!(execute(SB, Location::START, &d), vec![B, I, I, I, I, I, I, I]);
        let d5 = flat(&[5], &[1], "OOOOO");
        assert_eq!(
            execute(Action::new(Level::Sentence, O), Location::START, &d5),
            vec![O; 5]
        );
        assert_eq!(execute(Action::new(Level::Word, B), Location::of_token(&d5, 3), &d5), vec![B]);
        assert_eq!(execute(Action::new(Level::Word, I), Location::START, &d5), vec![I]);
    }

    #[test]
    fn skip_examples() {
        let d = example_doc(None);
        let next = skip(Location::START, SB, &d);
        assert_eq!(next.triple(), Some([9, 2, 1]));
        let last = Location::of_token(&d, d.len() - 1);
        assert_eq!(skip(last, Action::new(Level::Word, O), &d), Location::End);
        let end_of_s1 = Location::of_token(&d, 7);
        assert_eq!(
            skip(end_of_s1, Action::new(Level::Word, I), &d).triple(),
            Some([9, 2, 1])
        );
        assert_eq!(
            skip(Location::START, Action::new(Level::Paragraph, O), &d).triple(),
            Some([13, 3, 2])
        );
        // paragraph action in the last paragraph ends the episode
        let in_p2 = Location::of_token(&d, 14);
        assert_eq!(skip(in_p2, Action::new(Level::Paragraph, O), &d), Location::End);
        assert_eq!(skip(in_p2, Action::new(Level::Sentence, O), &d), Location::End);
    }

    #[test]
    fn correct_actions_examples() {
        let gold = "BIIIIIIIOOOOOOOOO";
        let d = flat(&[8, 4, 5], &[2, 1], gold);
        let set = correct_actions(Location::START, &d);
        assert!(set.contains(Action::new(Level::Word, B)));
        assert!(set.contains(SB));
        assert!(!set.contains(Action::new(Level::Paragraph, B)));

        let d = flat(&[3, 2], &[1, 1], "OOOOO");
        let set = correct_actions(Location::START, &d);
        let expect: ActionSet = Level::ALL.iter().map(|&l| Action::new(l, O)).collect();
        assert_eq!(set, expect);
    }

    #[test]
    fn worked_example_episode() {
        // Sentence-B over s1, four word-O over s2, then paragraph-B over p2.
        let mut gold = vec![B, I, I, I, I, I, I, I, O, O, O, O, B];
        gold.extend([I; 4]);
        let d = example_doc(Some(gold.clone()));
        let w_o = Action::new(Level::Word, O);
        let script = [SB, w_o, w_o, w_o, w_o, Action::new(Level::Paragraph, B)];
        let (history, labels, end) = run_script(&d, &script);
        assert_eq!(history.len(), 6);
        assert_eq!(history[1].0.triple(), Some([9, 2, 1]));
        assert_eq!(end, Location::End);
        assert_eq!(labels, gold);
        assert_eq!(labels.len(), d.len());
        assert!((wlar(&history).unwrap() - 4.0 / 6.0).abs() < 1e-15);
        for (loc, a) in &history {
            assert!(correct_actions(*loc, &d).contains(*a));
        }
    }

    #[test]
    fn wlar_extremes() {
        let d = flat(&[2], &[1], "OO");
        let w = Action::new(Level::Word, O);
        let (h, _, _) = run_script(&d, &[w, w]);
        assert_eq!(wlar(&h).unwrap(), 1.0);
        let (h, _, _) = run_script(&d, &[Action::new(Level::Sentence, O)]);
        assert_eq!(wlar(&h).unwrap(), 0.0);
        assert_eq!(wlar(&[]), Err(ActionError::EmptyHistory));
    }

    #[test]
    fn assemble_concatenates() {
        assert!(assemble(std::iter::empty()).is_empty());
        let runs = [vec![B, I], vec![O]];
        assert_eq!(assemble(runs.iter().map(Vec::as_slice)), vec![B, I, O]);
    }

    #[test]
    fn trace_line_format() {
        assert_eq!(
            trace_line(1, Location::START, SB, 8),
            "step 1 | loc [1,1,1] | action sentence-B | emit 8 labels"
        );
    }
}
