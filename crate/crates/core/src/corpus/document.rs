use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// BIO symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bio {
    B,
    I,
    O,
}

impl Bio {
    pub const ALL: [Bio; 3] = [Bio::B, Bio::I, Bio::O];

    pub fn ordinal(self) -> usize {
        match self {
            Bio::B => 0,
            Bio::I => 1,
            Bio::O => 2,
        }
    }

    pub fn from_ordinal(k: usize) -> Option<Bio> {
        Self::ALL.get(k).copied()
    }

    pub fn as_char(self) -> char {
        match self {
            Bio::B => 'B',
            Bio::I => 'I',
            Bio::O => 'O',
        }
    }
}

impl fmt::Display for Bio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Half-open `[start, end)` range, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Self { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

/// On-disk JSONL record.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocumentRecord {
    id: String,
    tokens: Vec<String>,
    sentences: Vec<Span>,
    paragraphs: Vec<Span>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<Bio>>,
}

/// A pre-segmented document: tokens grouped into sentences, sentences into
/// paragraphs, with optional gold BIO labels. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    id: String,
    tokens: Vec<String>,
    sentences: Vec<Span>,
    paragraphs: Vec<Span>,
    labels: Option<Vec<Bio>>,
    token_sentence: Vec<usize>,
    sentence_paragraph: Vec<usize>,
}

fn check_partition(spans: &[Span], total: usize, what: &str) -> Result<(), String> {
    let mut cursor = 0;
    for (k, s) in spans.iter().enumerate() {
        if s.start != cursor || s.is_empty() {
            return Err(format!(
                "{what} spans not a partition of [0, {total}): span {k} is [{}, {})",
                s.start, s.end
            ));
        }
        cursor = s.end;
    }
    if cursor != total {
        return Err(format!(
            "{what} spans not a partition of [0, {total}): coverage ends at {cursor}"
        ));
    }
    Ok(())
}

impl Document {
    /// Builds a document, enforcing every structural invariant and strict BIO
    /// discipline on gold labels.
    pub fn new(
        id: impl Into<String>,
        tokens: Vec<String>,
        sentences: Vec<Span>,
        paragraphs: Vec<Span>,
        labels: Option<Vec<Bio>>,
    ) -> Result<Self, CorpusError> {
        Self::build(id.into(), tokens, sentences, paragraphs, labels, true)
    }

    /// Like [`Document::new`] but accepts BIO violations in gold labels.
    pub fn new_lenient(
        id: impl Into<String>,
        tokens: Vec<String>,
        sentences: Vec<Span>,
        paragraphs: Vec<Span>,
        labels: Option<Vec<Bio>>,
    ) -> Result<Self, CorpusError> {
        Self::build(id.into(), tokens, sentences, paragraphs, labels, false)
    }

    fn build(
        id: String,
        tokens: Vec<String>,
        sentences: Vec<Span>,
        paragraphs: Vec<Span>,
        labels: Option<Vec<Bio>>,
        strict: bool,
    ) -> Result<Self, CorpusError> {
        let invalid = |invariant: String| CorpusError::Validation {
            doc: id.clone(),
            invariant,
        };
        if let Some(k) = tokens.iter().position(|t| t.is_empty()) {
            return Err(invalid(format!("token {k} has an empty surface")));
        }
        check_partition(&sentences, tokens.len(), "sentence").map_err(invalid)?;
        check_partition(&paragraphs, sentences.len(), "paragraph").map_err(invalid)?;
        if let Some(labels) = &labels {
            if labels.len() != tokens.len() {
                return Err(invalid(format!(
                    "labels length {} differs from token count {}",
                    labels.len(),
                    tokens.len()
                )));
            }
            let report = validate_labels(labels, strict);
            if !report.is_ok() {
                return Err(invalid(format!(
                    "BIO violation: I not preceded by B or I at index {:?}",
                    report.violations
                )));
            }
        }
        let mut token_sentence = vec![0; tokens.len()];
        for (j, s) in sentences.iter().enumerate() {
            token_sentence[s.range()].iter_mut().for_each(|v| *v = j);
        }
        let mut sentence_paragraph = vec![0; sentences.len()];
        for (k, p) in paragraphs.iter().enumerate() {
            sentence_paragraph[p.range()].iter_mut().for_each(|v| *v = k);
        }
        Ok(Self {
            id,
            tokens,
            sentences,
            paragraphs,
            labels,
            token_sentence,
            sentence_paragraph,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Token count `n`.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn sentences(&self) -> &[Span] {
        &self.sentences
    }

    pub fn paragraphs(&self) -> &[Span] {
        &self.paragraphs
    }

    pub fn labels(&self) -> Option<&[Bio]> {
        self.labels.as_deref()
    }

    /// Sentence index (0-based) containing token `t`.
    pub fn sentence_of(&self, t: usize) -> usize {
        self.token_sentence[t]
    }

    /// Paragraph index (0-based) containing sentence `s`.
    pub fn paragraph_of(&self, s: usize) -> usize {
        self.sentence_paragraph[s]
    }

    /// Token range covered by paragraph `p`.
    pub fn paragraph_tokens(&self, p: usize) -> Range<usize> {
        let span = self.paragraphs[p];
        self.sentences[span.start].start..self.sentences[span.end - 1].end
    }

    pub fn target_count(&self) -> usize {
        self.labels
            .as_ref()
            .map_or(0, |l| l.iter().filter(|&&b| b != Bio::O).count())
    }

    /// Same document with labels replaced (or removed).
    pub fn with_labels(&self, labels: Option<Vec<Bio>>) -> Result<Self, CorpusError> {
        Self::new(
            self.id.clone(),
            self.tokens.clone(),
            self.sentences.clone(),
            self.paragraphs.clone(),
            labels,
        )
    }

    /// Canonical single-line JSON serialization.
    pub fn to_json_line(&self) -> String {
        let rec = DocumentRecord {
            id: self.id.clone(),
            tokens: self.tokens.clone(),
            sentences: self.sentences.clone(),
            paragraphs: self.paragraphs.clone(),
            labels: self.labels.clone(),
        };
        serde_json::to_string(&rec).expect("document serializes")
    }
}

/// Parses one JSONL record with strict label validation.
pub fn parse_document(record: &str) -> Result<Document, CorpusError> {
    parse_record(record, true)
}

pub fn parse_document_lenient(record: &str) -> Result<Document, CorpusError> {
    parse_record(record, false)
}

fn parse_record(record: &str, strict: bool) -> Result<Document, CorpusError> {
    let rec: DocumentRecord = serde_json::from_str(record).map_err(|e| CorpusError::Parse {
        line: None,
        message: e.to_string(),
    })?;
    Document::build(
        rec.id,
        rec.tokens,
        rec.sentences,
        rec.paragraphs,
        rec.labels,
        strict,
    )
}

/// Outcome of BIO discipline checking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelReport {
    /// 0-based positions of an `I` not preceded by `B` or `I`.
    pub violations: Vec<usize>,
    /// Number of fragments (a `B` followed by any run of `I`).
    pub fragments: usize,
    pub strict: bool,
}

impl LabelReport {
    /// Strict mode rejects any violation; lenient mode reports but accepts.
    pub fn is_ok(&self) -> bool {
        !self.strict || self.violations.is_empty()
    }
}

pub fn validate_labels(labels: &[Bio], strict: bool) -> LabelReport {
    let mut violations = Vec::new();
    let mut fragments = 0;
    let mut prev = Bio::O;
    for (k, &b) in labels.iter().enumerate() {
        match b {
            Bio::B => fragments += 1,
            Bio::I if prev == Bio::O => violations.push(k),
            _ => {}
        }
        prev = b;
    }
    LabelReport {
        violations,
        fragments,
        strict,
    }
}
