//! Sentence encoders producing the state sequence the pointers attend over.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Vocab, PAD, ROOT};
use crate::error::{Error, Result};
use crate::nn::{BiRecurrent, CellKind, CharCnn, EmbeddingTable};
use crate::tensor::{Graph, ParamStore, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepEncoderConfig {
    pub word_dim: usize,
    pub pos_dim: usize,
    pub char_dim: usize,
    pub char_filters: usize,
    pub char_window: usize,
    pub hidden: usize,
    pub layers: usize,
    pub embedding_dropout: f64,
    pub recurrent_dropout: f64,
    pub layer_dropout: f64,
    pub max_len: usize,
}

impl Default for DepEncoderConfig {
    fn default() -> Self {
        DepEncoderConfig {
            word_dim: 100,
            pos_dim: 100,
            char_dim: 50,
            char_filters: 50,
            char_window: 3,
            hidden: 512,
            layers: 3,
            embedding_dropout: 0.33,
            recurrent_dropout: 0.33,
            layer_dropout: 0.33,
            max_len: 200,
        }
    }
}

/// Index sequences for one sentence, ROOT already prepended at position 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedSentence {
    pub words: Vec<usize>,
    pub tags: Vec<usize>,
    pub chars: Vec<Vec<usize>>,
}

impl IndexedSentence {
    /// Number of real tokens (ROOT excluded).
    pub fn len(&self) -> usize {
        self.words.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() <= 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepVocabs {
    pub words: Vocab,
    pub tags: Vocab,
    pub chars: Vocab,
}

impl DepVocabs {
    pub fn new() -> Self {
        DepVocabs {
            words: Vocab::with_specials(&[ROOT]),
            tags: Vocab::with_specials(&[ROOT]),
            chars: Vocab::with_specials(&[PAD, ROOT]),
        }
    }

    pub fn observe(&mut self, tokens: &[crate::dep::Token]) {
        for t in tokens {
            self.words.add(&t.form);
            self.tags.add(&t.upos);
            for c in t.chars() {
                self.chars.add(c.encode_utf8(&mut [0; 4]));
            }
        }
    }

    pub fn index(&self, tokens: &[crate::dep::Token]) -> IndexedSentence {
        let root_w = self.words.index_or_unk(ROOT);
        let root_t = self.tags.index_or_unk(ROOT);
        let root_c = self.chars.index_or_unk(ROOT);
        let mut s = IndexedSentence {
            words: vec![root_w],
            tags: vec![root_t],
            chars: vec![vec![root_c]],
        };
        for t in tokens {
            s.words.push(self.words.index_or_unk(&t.form));
            s.tags.push(self.tags.index_or_unk(&t.upos));
            s.chars.push(
                t.chars()
                    .map(|c| self.chars.index_or_unk(c.encode_utf8(&mut [0; 4])))
                    .collect(),
            );
        }
        s
    }
}

impl Default for DepVocabs {
    fn default() -> Self {
        DepVocabs::new()
    }
}

/// Encoder input `X` and states `H`; for dependency input, position 0 is ROOT.
#[derive(Debug, Clone)]
pub struct EncodedSentence {
    pub inputs: Vec<Var>,
    pub states: Vec<Var>,
    /// `H` stacked as `[len × dim]`.
    pub matrix: Var,
    pub has_root: bool,
}

impl EncodedSentence {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Character CNN + word + tag embeddings into a stacked BiLSTM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepEncoder {
    pub config: DepEncoderConfig,
    pub words: EmbeddingTable,
    pub tags: EmbeddingTable,
    pub chars: CharCnn,
    pub rnn: BiRecurrent,
}

impl DepEncoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        config: DepEncoderConfig,
        vocabs: &DepVocabs,
        rng: &mut R,
    ) -> Result<Self> {
        let words = EmbeddingTable::new(store, &format!("{name}.word"), vocabs.words.len(), config.word_dim, 0, rng)?;
        let tags = EmbeddingTable::new(store, &format!("{name}.pos"), vocabs.tags.len(), config.pos_dim, 0, rng)?;
        let char_table = EmbeddingTable::new(store, &format!("{name}.char"), vocabs.chars.len(), config.char_dim, 0, rng)?;
        let pad = vocabs.chars.index_or_unk(PAD);
        let chars = CharCnn::new(
            store,
            &format!("{name}.cnn"),
            char_table,
            config.char_window,
            config.char_filters,
            pad,
            rng,
        )?;
        let rnn = BiRecurrent::new(
            store,
            &format!("{name}.rnn"),
            CellKind::Lstm,
            config.char_filters + config.word_dim + config.pos_dim,
            config.hidden,
            config.layers,
            config.recurrent_dropout,
            config.layer_dropout,
            rng,
        )?;
        Ok(DepEncoder {
            config,
            words,
            tags,
            chars,
            rnn,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.config.char_filters + self.config.word_dim + self.config.pos_dim
    }

    pub fn output_dim(&self) -> usize {
        self.rnn.output_dim()
    }

    pub fn encode(&self, g: &mut Graph, sent: &IndexedSentence) -> Result<EncodedSentence> {
        let n = sent.len();
        if n == 0 {
            return Err(Error::Contract("cannot encode an empty sentence".into()));
        }
        if n > self.config.max_len {
            return Err(Error::Contract(format!(
                "sentence of {n} tokens exceeds the maximum length {}",
                self.config.max_len
            )));
        }
        let rate = self.config.embedding_dropout;
        let mut inputs = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let c = self.chars.forward(g, &sent.chars[i], rate)?;
            let w = self.words.lookup(g, sent.words[i])?;
            let w = g.dropout(w, rate)?;
            let t = self.tags.lookup(g, sent.tags[i])?;
            let t = g.dropout(t, rate)?;
            inputs.push(g.concat(&[c, w, t])?);
        }
        let states = self.rnn.encode(g, &inputs)?;
        let matrix = g.stack(&states)?;
        Ok(EncodedSentence {
            inputs,
            states,
            matrix,
            has_root: true,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RstEncoderConfig {
    pub word_dim: usize,
    /// Width of each EDU representation; each direction gets half.
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
}

impl Default for RstEncoderConfig {
    fn default() -> Self {
        RstEncoderConfig {
            word_dim: 1024,
            hidden: 64,
            layers: 5,
            dropout: 0.4,
        }
    }
}

/// Token range `[start, end]` (0-based, inclusive) of one EDU and its vector.
#[derive(Debug, Clone, Copy)]
pub struct EduSpan {
    pub start: usize,
    pub end: usize,
    pub repr: Var,
}

/// Word embeddings into a stacked BiGRU; EDU vectors are the states at each
/// EDU's last token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RstEncoder {
    pub config: RstEncoderConfig,
    pub words: EmbeddingTable,
    pub rnn: BiRecurrent,
}

/// Checks that `bounds` tile `0..n` in order.
pub fn check_segmentation(n: usize, bounds: &[(usize, usize)]) -> Result<()> {
    if bounds.is_empty() {
        return Err(Error::Segmentation("no EDUs".into()));
    }
    let mut next = 0;
    for (k, &(s, e)) in bounds.iter().enumerate() {
        if s > e {
            return Err(Error::Segmentation(format!("EDU {} has start {s} after end {e}", k + 1)));
        }
        if s != next {
            let what = if s < next { "overlaps" } else { "leaves a gap before" };
            return Err(Error::Segmentation(format!("EDU {} {what} token {s}", k + 1)));
        }
        next = e + 1;
    }
    if next != n {
        return Err(Error::Segmentation(format!(
            "EDUs cover {next} of {n} tokens"
        )));
    }
    Ok(())
}

impl RstEncoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        config: RstEncoderConfig,
        vocab_size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if config.hidden % 2 != 0 {
            return Err(Error::Config("discourse encoder size must be even".into()));
        }
        let words = EmbeddingTable::new(store, &format!("{name}.word"), vocab_size, config.word_dim, 0, rng)?;
        let rnn = BiRecurrent::new(
            store,
            &format!("{name}.rnn"),
            CellKind::Gru,
            config.word_dim,
            config.hidden / 2,
            config.layers,
            config.dropout,
            config.dropout,
            rng,
        )?;
        Ok(RstEncoder { config, words, rnn })
    }

    pub fn output_dim(&self) -> usize {
        self.rnn.output_dim()
    }

    pub fn encode(&self, g: &mut Graph, words: &[usize], bounds: &[(usize, usize)]) -> Result<(EncodedSentence, Vec<EduSpan>)> {
        if words.is_empty() {
            return Err(Error::Contract("cannot encode an empty sentence".into()));
        }
        check_segmentation(words.len(), bounds)?;
        let mut inputs = Vec::with_capacity(words.len());
        for &w in words {
            let x = self.words.lookup(g, w)?;
            inputs.push(g.dropout(x, self.config.dropout)?);
        }
        let states = self.rnn.encode(g, &inputs)?;
        let matrix = g.stack(&states)?;
        let edus = bounds
            .iter()
            .map(|&(start, end)| EduSpan {
                start,
                end,
                repr: states[end],
            })
            .collect();
        Ok((
            EncodedSentence {
                inputs,
                states,
                matrix,
                has_root: false,
            },
            edus,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dep::Token;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> DepEncoderConfig {
        DepEncoderConfig {
            word_dim: 4,
            pos_dim: 3,
            char_dim: 2,
            char_filters: 5,
            hidden: 3,
            layers: 2,
            ..Default::default()
        }
    }

    fn tokens(words: &[&str]) -> Vec<Token> {
        words.iter().map(|w| Token::new(*w, "X")).collect()
    }

    #[test]
    fn dependency_shapes_and_determinism() {
        let toks = tokens(&["ab", "c"]);
        let mut v = DepVocabs::new();
        v.observe(&toks);
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = DepEncoder::new(&mut store, "enc", small(), &v, &mut rng).unwrap();
        let idx = v.index(&toks[..1]);
        let mut g = Graph::new(&store);
        let e = enc.encode(&mut g, &idx).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(g.shape(e.inputs[1]), &[5 + 4 + 3]);
        assert_eq!(g.shape(e.matrix), &[2, 6]);
        let first = g.value(e.matrix).clone();
        let mut g2 = Graph::new(&store);
        let again = enc.encode(&mut g2, &idx).unwrap();
        assert_eq!(g2.value(again.matrix), &first);
        assert!(matches!(enc.encode(&mut g2, &v.index(&[])), Err(Error::Contract(_))));
    }

    #[test]
    fn edu_selection() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = RstEncoderConfig {
            word_dim: 3,
            hidden: 4,
            layers: 2,
            dropout: 0.0,
        };
        let enc = RstEncoder::new(&mut store, "enc", cfg, 20, &mut rng).unwrap();
        let words: Vec<usize> = (0..9).collect();
        // EDUs ending at 1-based tokens 2, 5, 9
        let bounds = [(0, 1), (2, 4), (5, 8)];
        let mut g = Graph::new(&store);
        let (h, edus) = enc.encode(&mut g, &words, &bounds).unwrap();
        assert_eq!(edus.len(), 3);
        for (e, idx) in edus.iter().zip([1, 4, 8]) {
            assert_eq!(e.repr, h.states[idx]);
        }
        let singles: Vec<_> = (0..9).map(|i| (i, i)).collect();
        let (h, edus) = enc.encode(&mut g, &words, &singles).unwrap();
        assert!(edus.iter().zip(&h.states).all(|(e, &s)| e.repr == s));
        assert_eq!(g.shape(edus[0].repr), &[4]);
    }

    #[test]
    fn segmentation_errors() {
        assert!(check_segmentation(4, &[(0, 1), (2, 3)]).is_ok());
        assert!(matches!(check_segmentation(4, &[(0, 2), (2, 3)]), Err(Error::Segmentation(_))));
        assert!(matches!(check_segmentation(4, &[(0, 0), (2, 3)]), Err(Error::Segmentation(_))));
        assert!(matches!(check_segmentation(4, &[(0, 2)]), Err(Error::Segmentation(_))));
        assert!(matches!(check_segmentation(4, &[]), Err(Error::Segmentation(_))));
    }
}
