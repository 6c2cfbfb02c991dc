#![allow(dead_code)]

use proptest::prelude::*;
use zoomnet::corpus::{Bio, Document, Span, Vocab};
use zoomnet::model::{ModelConfig, ZoomNet};

/// Paragraph layout as sentence lengths, plus one label draw per token.
pub fn arb_layout(max_paragraphs: usize, max_sentences: usize, max_words: usize) -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(1..=max_words, 1..=max_sentences), 1..=max_paragraphs)
}

/// Gold labels obeying BIO discipline from raw draws in `0..3`.
pub fn labels_from_draws(draws: &[u8]) -> Vec<Bio> {
    let mut out: Vec<Bio> = Vec::with_capacity(draws.len());
    for &d in draws {
        let l = match d % 3 {
            0 => Bio::O,
            1 => Bio::B,
            _ if out.last().is_some_and(|&p| p != Bio::O) => Bio::I,
            _ => Bio::B,
        };
        out.push(l);
    }
    out
}

pub fn build_doc(id: &str, layout: &[Vec<usize>], draws: &[u8], tokens: &[u8]) -> Document {
    let mut sentences = Vec::new();
    let mut paragraphs = Vec::new();
    let mut n = 0;
    for p in layout {
        let first = sentences.len();
        for &len in p {
            sentences.push(Span::new(n, n + len));
            n += len;
        }
        paragraphs.push(Span::new(first, sentences.len()));
    }
    let toks = (0..n).map(|k| format!("t{}", tokens[k % tokens.len()] % 6)).collect();
    let draws: Vec<u8> = (0..n).map(|k| draws[k % draws.len()]).collect();
    Document::new(id, toks, sentences, paragraphs, Some(labels_from_draws(&draws))).expect("valid layout")
}

/// Random labelled document with at most 3×3×5 = 45 tokens.
pub fn arb_doc() -> impl Strategy<Value = Document> {
    (
        arb_layout(3, 3, 5),
        prop::collection::vec(0u8..3, 1..64),
        prop::collection::vec(any::<u8>(), 1..64),
    )
        .prop_map(|(layout, draws, tokens)| build_doc("prop", &layout, &draws, &tokens))
}

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        embed_dim: 4,
        word_hidden: 3,
        sentence_hidden: 3,
        controller_hidden: 5,
        ..ModelConfig::default()
    }
}

/// Vocabulary covering every token `build_doc` can produce.
pub fn tiny_vocab() -> Vocab {
    let doc = Document::new(
        "v",
        (0..6).map(|k| format!("t{k}")).collect(),
        vec![Span::new(0, 6)],
        vec![Span::new(0, 1)],
        None,
    )
    .unwrap();
    Vocab::build([&doc])
}

pub fn tiny_model(seed: u64) -> ZoomNet {
    ZoomNet::new(tiny_config(), tiny_vocab(), seed)
}
