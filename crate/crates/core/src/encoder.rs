//! Hierarchical text encoder.
//!
//! Word rows are raw embeddings. Each sentence runs a fresh biLSTM over the
//! embeddings of its own tokens and max-pools the hidden states; each
//! paragraph does the same over its sentence vectors with a second biLSTM.

use rand::Rng;

use crate::corpus::Document;
use crate::tensor::tape::bilstm_run;
use crate::tensor::{init, LstmParams, ParamId, ParamStore, Result, Tape, TensorError, Var};

#[derive(Debug, Clone, Copy)]
pub struct EncoderParams {
    pub embed: ParamId,
    pub word_fwd: LstmParams,
    pub word_bwd: LstmParams,
    pub sent_fwd: LstmParams,
    pub sent_bwd: LstmParams,
}

impl EncoderParams {
    pub fn create<R: Rng + ?Sized>(
        store: &mut ParamStore,
        vocab_size: usize,
        embed_dim: usize,
        word_hidden: usize,
        sentence_hidden: usize,
        rng: &mut R,
    ) -> Self {
        let embed = store.add(
            "encoder.embed",
            init::uniform(rng, &[vocab_size, embed_dim], init::EMBEDDING_SCALE),
        );
        let word_fwd = LstmParams::create(store, "encoder.bilstm1.fwd", embed_dim, word_hidden, rng);
        let word_bwd = LstmParams::create(store, "encoder.bilstm1.bwd", embed_dim, word_hidden, rng);
        let sent_in = 2 * word_hidden;
        let sent_fwd = LstmParams::create(store, "encoder.bilstm2.fwd", sent_in, sentence_hidden, rng);
        let sent_bwd = LstmParams::create(store, "encoder.bilstm2.bwd", sent_in, sentence_hidden, rng);
        Self {
            embed,
            word_fwd,
            word_bwd,
            sent_fwd,
            sent_bwd,
        }
    }

    pub fn param_count(vocab_size: usize, embed_dim: usize, word_hidden: usize, sentence_hidden: usize) -> usize {
        vocab_size * embed_dim
            + 2 * LstmParams::param_count(embed_dim, word_hidden)
            + 2 * LstmParams::param_count(2 * word_hidden, sentence_hidden)
    }

    pub fn word_dim(&self) -> usize {
        self.word_fwd.input
    }

    pub fn sentence_dim(&self) -> usize {
        2 * self.word_fwd.hidden
    }

    pub fn paragraph_dim(&self) -> usize {
        2 * self.sent_fwd.hidden
    }
}

/// The three representation banks of one document.
#[derive(Debug, Clone)]
pub struct HierarchicalMemory {
    pub doc_id: String,
    pub words: Vec<Var>,
    pub sentences: Vec<Var>,
    pub paragraphs: Vec<Var>,
    /// Per-sentence biLSTM outputs that were pooled into `sentences`.
    pub sentence_states: Vec<Vec<Var>>,
}

pub fn encode(
    tape: &mut Tape,
    store: &ParamStore,
    params: &EncoderParams,
    doc: &Document,
    ids: &[usize],
) -> Result<HierarchicalMemory> {
    if ids.len() != doc.len() {
        return Err(TensorError::Shape {
            op: "encode",
            expected: format!("{} token ids", doc.len()),
            found: ids.len().to_string(),
        });
    }
    let words = ids
        .iter()
        .map(|&id| tape.embed_lookup(store, params.embed, id))
        .collect::<Result<Vec<_>>>()?;

    let mut sentences = Vec::with_capacity(doc.sentences().len());
    let mut sentence_states = Vec::with_capacity(doc.sentences().len());
    for s in doc.sentences() {
        let states = bilstm_run(tape, store, &params.word_fwd, &params.word_bwd, &words[s.range()])?;
        sentences.push(tape.max_pool(&states)?);
        sentence_states.push(states);
    }

    let mut paragraphs = Vec::with_capacity(doc.paragraphs().len());
    for p in doc.paragraphs() {
        let states = bilstm_run(tape, store, &params.sent_fwd, &params.sent_bwd, &sentences[p.range()])?;
        paragraphs.push(tape.max_pool(&states)?);
    }

    Ok(HierarchicalMemory {
        doc_id: doc.id().to_string(),
        words,
        sentences,
        paragraphs,
        sentence_states,
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::corpus::Span;

    fn setup() -> (ParamStore, EncoderParams) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = EncoderParams::create(&mut store, 12, 4, 3, 2, &mut rng);
        (store, p)
    }

    fn doc(sent_lens: &[usize], par_sizes: &[usize]) -> Document {
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
        Document::new("d", (0..start).map(|k| format!("t{k}")).collect(), sentences, paragraphs, None).unwrap()
    }

    #[test]
    fn shape_contract() {
        let (store, p) = setup();
        let d = doc(&[3, 2, 4], &[2, 1]);
        let ids: Vec<usize> = (0..9).map(|k| k % 12).collect();
        let mut tape = Tape::new();
        let m = encode(&mut tape, &store, &p, &d, &ids).unwrap();
        assert_eq!((m.words.len(), m.sentences.len(), m.paragraphs.len()), (9, 3, 2));
        assert_eq!(tape.value(m.words[0]).len(), 4);
        assert_eq!(tape.value(m.sentences[0]).len(), p.sentence_dim());
        assert_eq!(tape.value(m.paragraphs[0]).len(), p.paragraph_dim());
        assert_eq!(tape.value(m.words[5]), store.value(p.embed).row(5));
    }

    #[test]
    fn single_word_sentence_is_single_bilstm_step() {
        let (store, p) = setup();
        let d = doc(&[1], &[1]);
        let mut tape = Tape::new();
        let m = encode(&mut tape, &store, &p, &d, &[7]).unwrap();
        let x = tape.embed_lookup(&store, p.embed, 7).unwrap();
        let out = bilstm_run(&mut tape, &store, &p.word_fwd, &p.word_bwd, &[x]).unwrap();
        assert_eq!(tape.value(m.sentences[0]), tape.value(out[0]));
    }

    #[test]
    fn oov_id_is_error() {
        let (store, p) = setup();
        let d = doc(&[1], &[1]);
        let mut tape = Tape::new();
        assert!(encode(&mut tape, &store, &p, &d, &[12]).is_err());
    }
}
