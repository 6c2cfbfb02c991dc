//! Hierarchical documents: data model, JSONL format, statistics, splitting,
//! vocabulary and synthetic generation.

mod document;
pub mod synth;
mod vocab;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use document::{
    parse_document, parse_document_lenient, validate_labels, Bio, Document, LabelReport, Span,
};
pub use synth::{generate_synthetic, AlignmentMix, GenConfig, SyntheticDoc};
pub use vocab::{IndexedDoc, Vocab, UNK, UNK_ID};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },
    #[error("invalid document `{doc}`: {invariant}")]
    Validation { doc: String, invariant: String },
    #[error("corpus is empty")]
    Empty,
    #[error("test size {test_size} must be smaller than corpus size {corpus_size}")]
    SplitSize { test_size: usize, corpus_size: usize },
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CorpusError {
    fn at_line(self, line: usize) -> Self {
        match self {
            CorpusError::Parse { message, .. } => CorpusError::Parse {
                line: Some(line),
                message,
            },
            CorpusError::Validation { doc, invariant } => CorpusError::Validation {
                doc,
                invariant: format!("{invariant} (line {line})"),
            },
            other => other,
        }
    }
}

/// Reads a JSONL corpus; blank lines are skipped.
pub fn read_corpus(path: &Path) -> Result<Vec<Document>, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut docs = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        docs.push(parse_document(&line).map_err(|e| e.at_line(k + 1))?);
    }
    Ok(docs)
}

pub fn write_corpus<'a>(
    path: &Path,
    docs: impl IntoIterator<Item = &'a Document>,
) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    for d in docs {
        writeln!(w, "{}", d.to_json_line())?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub doc_count: usize,
    pub mean_words_per_doc: f64,
    /// Tokens labelled `B` or `I`.
    pub mean_target_words_per_doc: f64,
    pub mean_sentences: f64,
    pub mean_paragraphs: f64,
}

pub fn corpus_stats(corpus: &[Document]) -> Result<CorpusStats, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    let n = corpus.len() as f64;
    let mean = |f: &dyn Fn(&Document) -> usize| corpus.iter().map(f).sum::<usize>() as f64 / n;
    Ok(CorpusStats {
        doc_count: corpus.len(),
        mean_words_per_doc: mean(&|d| d.len()),
        mean_target_words_per_doc: mean(&|d| d.target_count()),
        mean_sentences: mean(&|d| d.sentences().len()),
        mean_paragraphs: mean(&|d| d.paragraphs().len()),
    })
}

/// Random train/test split. The test set holds `test_size` documents; both
/// sides keep the corpus order.
pub fn split(
    corpus: Vec<Document>,
    test_size: usize,
    seed: u64,
) -> Result<(Vec<Document>, Vec<Document>), CorpusError> {
    if test_size >= corpus.len() {
        return Err(CorpusError::SplitSize {
            test_size,
            corpus_size: corpus.len(),
        });
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_test = vec![false; corpus.len()];
    for &k in &order[..test_size] {
        in_test[k] = true;
    }
    let (test, train): (Vec<_>, Vec<_>) = corpus
        .into_iter()
        .zip(in_test)
        .partition(|(_, t)| *t);
    Ok((
        train.into_iter().map(|(d, _)| d).collect(),
        test.into_iter().map(|(d, _)| d).collect(),
    ))
}
