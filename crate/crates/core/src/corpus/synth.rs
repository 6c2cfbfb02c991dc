//! Synthetic structured corpora with planted entity fragments.
//!
//! Fragments are planted at three alignments: a whole paragraph, a whole
//! sentence, or a short run inside a sentence. With cue tokens enabled each
//! alignment is announced by a marker (a section header opening an entity
//! paragraph, a leading marker on an entity sentence, a trigger word right
//! before an in-sentence run) so fragment placement is learnable from content.
//! In-sentence runs draw only from the entity vocabulary, so their extent is
//! visible token by token.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Bio, CorpusError, Document, Span};

pub const PARAGRAPH_CUE: &str = "FACTS";
pub const SENTENCE_CUE: &str = "INCIDENT";
pub const SPAN_CUE: &str = "stole";
pub const SECTION_HEADERS: [&str; 4] = ["BASIC", "PROPOSAL", "CONCLUSION", "JUDGMENT"];

/// Relative weights of the three alignment classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentMix {
    pub paragraph: f64,
    pub sentence: f64,
    pub sub_sentence: f64,
}

impl AlignmentMix {
    fn normalized(&self) -> (f64, f64, f64) {
        let total = self.paragraph + self.sentence + self.sub_sentence;
        (
            self.paragraph / total,
            self.sentence / total,
            self.sub_sentence / total,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub paragraphs: (usize, usize),
    pub sentences_per_paragraph: (usize, usize),
    pub words_per_sentence: (usize, usize),
    /// Filler vocabulary size.
    pub vocab_size: usize,
    /// Target fraction of tokens inside fragments.
    pub density: f64,
    pub mix: AlignmentMix,
    pub cues: bool,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self::task1(0)
    }
}

impl GenConfig {
    /// Court-judgment-like layout: ~200 words, ~20% of them in fragments,
    /// mostly sentence- and paragraph-aligned.
    pub fn task1(seed: u64) -> Self {
        Self {
            paragraphs: (3, 5),
            sentences_per_paragraph: (3, 7),
            words_per_sentence: (6, 14),
            vocab_size: 400,
            density: 0.2,
            mix: AlignmentMix {
                paragraph: 0.45,
                sentence: 0.45,
                sub_sentence: 0.1,
            },
            cues: true,
            seed,
        }
    }

    /// Longer (~500 words) documents with sparse (~15 words) fragments.
    pub fn task2(seed: u64) -> Self {
        Self {
            paragraphs: (4, 8),
            sentences_per_paragraph: (3, 7),
            words_per_sentence: (10, 24),
            vocab_size: 600,
            density: 0.03,
            mix: AlignmentMix {
                paragraph: 0.0,
                sentence: 0.5,
                sub_sentence: 0.5,
            },
            cues: true,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        for (name, (lo, hi)) in [
            ("paragraphs", self.paragraphs),
            ("sentences_per_paragraph", self.sentences_per_paragraph),
            ("words_per_sentence", self.words_per_sentence),
        ] {
            if lo == 0 || lo > hi {
                return Err(CorpusError::Config(format!(
                    "{name} range ({lo}, {hi}) must be non-empty with a positive lower bound"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.density) {
            return Err(CorpusError::Config(format!(
                "density {} outside [0, 1]",
                self.density
            )));
        }
        let m = self.mix;
        if [m.paragraph, m.sentence, m.sub_sentence]
            .iter()
            .any(|w| !w.is_finite() || *w < 0.0)
            || m.paragraph + m.sentence + m.sub_sentence <= 0.0
        {
            return Err(CorpusError::Config("alignment mix weights must be non-negative with a positive sum".into()));
        }
        if self.vocab_size == 0 {
            return Err(CorpusError::Config("vocab_size must be positive".into()));
        }
        Ok(())
    }

    fn mean(range: (usize, usize)) -> f64 {
        (range.0 + range.1) as f64 / 2.0
    }
}

/// A generated document with the fragments planted into it.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDoc {
    pub doc: Document,
    /// Half-open token ranges of each planted fragment, in order.
    pub planted: Vec<Span>,
}

const SPAN_LEN: (usize, usize) = (2, 4);

/// Infinite deterministic stream: document `k` depends only on `(cfg, k)`.
pub fn generate_synthetic(cfg: &GenConfig) -> Result<impl Iterator<Item = SyntheticDoc> + '_, CorpusError> {
    cfg.validate()?;
    Ok((0u64..).map(move |k| generate_one(cfg, k)))
}

pub fn generate_one(cfg: &GenConfig, index: u64) -> SyntheticDoc {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);

    let (mix_p, mix_s, mix_sub) = cfg.mix.normalized();
    let p_para = (cfg.density * mix_p).min(1.0);
    let rest = (1.0 - p_para).max(1e-9);
    let p_sent = (cfg.density * mix_s / rest).min(1.0);
    let mean_words = GenConfig::mean(cfg.words_per_sentence);
    let mean_span = GenConfig::mean(SPAN_LEN);
    let p_sub = (cfg.density * mix_sub * mean_words / (mean_span * rest)).min(1.0 - p_sent);

    let entity_vocab = (cfg.vocab_size / 10).max(4);
    let filler = |rng: &mut ChaCha8Rng| format!("w{}", rng.gen_range(0..cfg.vocab_size));
    let content = |rng: &mut ChaCha8Rng| {
        if rng.gen_bool(0.7) {
            format!("e{}", rng.gen_range(0..entity_vocab))
        } else {
            format!("w{}", rng.gen_range(0..cfg.vocab_size))
        }
    };

    let mut tokens = Vec::new();
    let mut labels = Vec::new();
    let mut sentences = Vec::new();
    let mut paragraphs = Vec::new();
    let mut planted = Vec::new();

    let n_par = rng.gen_range(cfg.paragraphs.0..=cfg.paragraphs.1);
    for _ in 0..n_par {
        let par_start_sentence = sentences.len();
        let par_start_token = tokens.len();
        let entity_paragraph = rng.gen_bool(p_para);
        let n_sent = rng.gen_range(cfg.sentences_per_paragraph.0..=cfg.sentences_per_paragraph.1);
        for _ in 0..n_sent {
            let start = tokens.len();
            let n_words = rng.gen_range(cfg.words_per_sentence.0..=cfg.words_per_sentence.1);
            if entity_paragraph {
                for _ in 0..n_words {
                    tokens.push(content(&mut rng));
                    labels.push(Bio::I);
                }
            } else {
                let u: f64 = rng.gen();
                if u < p_sent {
                    for _ in 0..n_words {
                        tokens.push(content(&mut rng));
                        labels.push(Bio::I);
                    }
                    labels[start] = Bio::B;
                    if cfg.cues {
                        tokens[start] = SENTENCE_CUE.to_string();
                    }
                    planted.push(Span::new(start, start + n_words));
                } else if u < p_sent + p_sub && n_words > SPAN_LEN.0 {
                    let len = rng.gen_range(SPAN_LEN.0..=SPAN_LEN.1.min(n_words - 1));
                    // either the run closes the sentence or its trigger is among the first three words
                    let latest = n_words - 1 - len;
                    let trigger = if rng.gen_bool(0.5) {
                        latest
                    } else {
                        rng.gen_range(0..=latest.min(2))
                    };
                    for k in 0..n_words {
                        let inside = k > trigger && k <= trigger + len;
                        if inside {
                            tokens.push(format!("e{}", rng.gen_range(0..entity_vocab)));
                            labels.push(if k == trigger + 1 { Bio::B } else { Bio::I });
                        } else {
                            tokens.push(filler(&mut rng));
                            labels.push(Bio::O);
                        }
                    }
                    if cfg.cues {
                        tokens[start + trigger] = SPAN_CUE.to_string();
                    }
                    planted.push(Span::new(start + trigger + 1, start + trigger + 1 + len));
                } else {
                    for _ in 0..n_words {
                        tokens.push(filler(&mut rng));
                        labels.push(Bio::O);
                    }
                }
            }
            sentences.push(Span::new(start, tokens.len()));
        }
        if entity_paragraph {
            labels[par_start_token] = Bio::B;
            planted.push(Span::new(par_start_token, tokens.len()));
        }
        if cfg.cues {
            let header = if entity_paragraph {
                PARAGRAPH_CUE
            } else {
                SECTION_HEADERS[rng.gen_range(0..SECTION_HEADERS.len())]
            };
            // Entity-sentence markers and span triggers keep their position.
            let plain_start =
                labels[par_start_token] == Bio::O && tokens[par_start_token] != SPAN_CUE;
            if plain_start || entity_paragraph {
                tokens[par_start_token] = header.to_string();
            }
        }
        paragraphs.push(Span::new(par_start_sentence, sentences.len()));
    }
    planted.sort_by_key(|s| s.start);

    let doc = Document::new(
        format!("syn-{}-{index:06}", cfg.seed),
        tokens,
        sentences,
        paragraphs,
        Some(labels),
    )
    .expect("generator produces valid documents");
    SyntheticDoc { doc, planted }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::corpus_stats;

    fn take(cfg: &GenConfig, n: usize) -> Vec<SyntheticDoc> {
        generate_synthetic(cfg).unwrap().take(n).collect()
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = GenConfig::task1(7);
        let a: Vec<String> = take(&cfg, 20).iter().map(|d| d.doc.to_json_line()).collect();
        let b: Vec<String> = take(&cfg, 20).iter().map(|d| d.doc.to_json_line()).collect();
        assert_eq!(a, b);
        let other: Vec<String> = take(&GenConfig::task1(8), 20).iter().map(|d| d.doc.to_json_line()).collect();
        assert_ne!(a, other);
    }

    #[test]
    fn unit_ranges_give_single_word_docs() {
        let cfg = GenConfig {
            paragraphs: (1, 1),
            sentences_per_paragraph: (1, 1),
            words_per_sentence: (1, 1),
            ..GenConfig::task1(3)
        };
        for d in take(&cfg, 50) {
            assert_eq!(d.doc.len(), 1);
            assert_eq!(d.doc.sentences().len(), 1);
            assert_eq!(d.doc.paragraphs().len(), 1);
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = GenConfig::task1(0);
        cfg.words_per_sentence = (0, 3);
        assert!(generate_synthetic(&cfg).is_err());
        let mut cfg = GenConfig::task1(0);
        cfg.density = 1.5;
        assert!(generate_synthetic(&cfg).is_err());
        let mut cfg = GenConfig::task1(0);
        cfg.paragraphs = (4, 2);
        assert!(generate_synthetic(&cfg).is_err());
    }

    #[test]
    fn task1_statistics_hit_targets() {
        let docs: Vec<Document> = take(&GenConfig::task1(1), 1000).into_iter().map(|d| d.doc).collect();
        let s = corpus_stats(&docs).unwrap();
        assert!((s.mean_words_per_doc - 200.0).abs() < 20.0, "{s:?}");
        assert!((s.mean_target_words_per_doc - 40.0).abs() < 8.0, "{s:?}");
    }

    #[test]
    fn all_alignment_classes_occur() {
        let docs = take(&GenConfig::task1(2), 200);
        let (mut para, mut sent, mut sub) = (0, 0, 0);
        for d in &docs {
            for f in &d.planted {
                let s = d.doc.sentence_of(f.start);
                let sent_span = d.doc.sentences()[s];
                if f.end > sent_span.end {
                    para += 1;
                } else if f.start == sent_span.start && f.end == sent_span.end {
                    sent += 1;
                } else {
                    sub += 1;
                }
            }
        }
        assert!(para > 0 && sent > 0 && sub > 0, "{para} {sent} {sub}");
    }
}
