//! Word accuracy, exact-span fragment precision/recall/F1 and wlar.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::LevelCounts;
use crate::corpus::{Bio, IndexedDoc, Span};
use crate::model::{ModelError, Prediction, Tagger};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("label length mismatch: predicted {pred}, gold {gold}")]
    LengthMismatch { pred: usize, gold: usize },
    #[error("document `{0}` has no gold labels")]
    MissingGold(String),
    #[error("document `{doc}`: {source}")]
    Model {
        doc: String,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Maximal `B I*` runs as half-open token ranges. An `I` that does not
/// continue a fragment is ignored.
pub fn extract_fragments(labels: &[Bio]) -> Vec<Span> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for (k, &l) in labels.iter().enumerate() {
        match l {
            Bio::B => {
                if let Some(s) = open {
                    out.push(Span::new(s, k));
                }
                open = Some(k);
            }
            Bio::I => {}
            Bio::O => {
                if let Some(s) = open.take() {
                    out.push(Span::new(s, k));
                }
            }
        }
    }
    if let Some(s) = open {
        out.push(Span::new(s, labels.len()));
    }
    out
}

fn count_matches(pred: &[Span], gold: &[Span]) -> usize {
    // both lists are sorted and disjoint
    let (mut i, mut j, mut tp) = (0, 0, 0);
    while i < pred.len() && j < gold.len() {
        if pred[i] == gold[j] {
            tp += 1;
            i += 1;
            j += 1;
        } else if pred[i].start < gold[j].start || (pred[i].start == gold[j].start && pred[i].end < gold[j].end) {
            i += 1;
        } else {
            j += 1;
        }
    }
    tp
}

/// Fragment-level counts that aggregate across documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FragmentCounts {
    pub true_positive: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl FragmentCounts {
    pub fn of(pred: &[Span], gold: &[Span]) -> Self {
        Self {
            true_positive: count_matches(pred, gold),
            predicted: pred.len(),
            gold: gold.len(),
        }
    }

    pub fn add(&mut self, other: FragmentCounts) {
        self.true_positive += other.true_positive;
        self.predicted += other.predicted;
        self.gold += other.gold;
    }

    /// `(P, R, F1)`; both sets empty gives `(1, 1, 1)`.
    pub fn prf(&self) -> (f64, f64, f64) {
        if self.predicted == 0 && self.gold == 0 {
            return (1.0, 1.0, 1.0);
        }
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let p = ratio(self.true_positive, self.predicted);
        let r = ratio(self.true_positive, self.gold);
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        (p, r, f)
    }
}

pub fn fragment_prf(pred: &[Span], gold: &[Span]) -> (f64, f64, f64) {
    FragmentCounts::of(pred, gold).prf()
}

fn matching_labels(pred: &[Bio], gold: &[Bio]) -> Result<usize, EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    Ok(pred.iter().zip(gold).filter(|(a, b)| a == b).count())
}

pub fn word_accuracy(pred: &[Bio], gold: &[Bio]) -> Result<f64, EvalError> {
    let same = matching_labels(pred, gold)?;
    Ok(if gold.is_empty() { 1.0 } else { same as f64 / gold.len() as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocReport {
    pub id: String,
    pub tokens: usize,
    pub correct_tokens: usize,
    pub fragments: FragmentCounts,
    pub counts: LevelCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub word_accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean over documents of each episode's wlar.
    pub mean_wlar: f64,
    pub documents: Vec<DocReport>,
}

impl EvalReport {
    pub fn from_docs(documents: Vec<DocReport>) -> Self {
        let mut frags = FragmentCounts::default();
        let (mut tokens, mut correct) = (0, 0);
        let mut wlar_sum = 0.0;
        let mut wlar_n = 0;
        for d in &documents {
            frags.add(d.fragments);
            tokens += d.tokens;
            correct += d.correct_tokens;
            if let Ok(w) = d.counts.wlar() {
                wlar_sum += w;
                wlar_n += 1;
            }
        }
        let (precision, recall, f1) = frags.prf();
        Self {
            word_accuracy: if tokens == 0 { 1.0 } else { correct as f64 / tokens as f64 },
            precision,
            recall,
            f1,
            mean_wlar: if wlar_n == 0 { 0.0 } else { wlar_sum / wlar_n as f64 },
            documents,
        }
    }
}

fn doc_report(doc: &IndexedDoc, pred: &Prediction) -> Result<DocReport, EvalError> {
    let gold = doc.doc.labels().ok_or_else(|| EvalError::MissingGold(doc.doc.id().to_string()))?;
    Ok(DocReport {
        id: doc.doc.id().to_string(),
        tokens: gold.len(),
        correct_tokens: matching_labels(&pred.labels, gold)?,
        fragments: FragmentCounts::of(&extract_fragments(&pred.labels), &extract_fragments(gold)),
        counts: pred.counts,
    })
}

/// Predictions for every document, in corpus order.
pub fn predict_all<T: Tagger + ?Sized>(model: &T, docs: &[IndexedDoc]) -> Result<Vec<Prediction>, EvalError> {
    docs.par_iter()
        .map(|d| {
            model.predict(d).map_err(|source| EvalError::Model {
                doc: d.doc.id().to_string(),
                source,
            })
        })
        .collect()
}

pub fn report_from_predictions(docs: &[IndexedDoc], preds: &[Prediction]) -> Result<EvalReport, EvalError> {
    let per_doc = docs
        .iter()
        .zip(preds)
        .map(|(d, p)| doc_report(d, p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport::from_docs(per_doc))
}

pub fn evaluate<T: Tagger + ?Sized>(model: &T, docs: &[IndexedDoc]) -> Result<EvalReport, EvalError> {
    let preds = predict_all(model, docs)?;
    report_from_predictions(docs, &preds)
}

/// One line of the prediction dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpRecord {
    pub id: String,
    pub pred: Vec<Bio>,
    pub gold: Vec<Bio>,
    /// Serialized as `N_aw`, `N_as`, `N_ap`.
    pub trace_summary: LevelCounts,
}

pub fn dump_records(docs: &[IndexedDoc], preds: &[Prediction]) -> Vec<DumpRecord> {
    docs.iter()
        .zip(preds)
        .map(|(d, p)| DumpRecord {
            id: d.doc.id().to_string(),
            pred: p.labels.clone(),
            gold: d.doc.labels().map(<[Bio]>::to_vec).unwrap_or_default(),
            trace_summary: p.counts,
        })
        .collect()
}

pub fn write_dump(path: &Path, records: &[DumpRecord]) -> Result<(), EvalError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r).map_err(std::io::Error::from)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

/// Recomputes a report from dumped predictions alone.
pub fn report_from_dump(records: &[DumpRecord]) -> Result<EvalReport, EvalError> {
    let per_doc = records
        .iter()
        .map(|r| {
            Ok(DocReport {
                id: r.id.clone(),
                tokens: r.gold.len(),
                correct_tokens: matching_labels(&r.pred, &r.gold)?,
                fragments: FragmentCounts::of(&extract_fragments(&r.pred), &extract_fragments(&r.gold)),
                counts: r.trace_summary,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(EvalReport::from_docs(per_doc))
}
