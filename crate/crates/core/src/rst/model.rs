use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::oracle::{oracle_splits, replay_splits};
use super::{DiscTree, RstLabel, Split};
use crate::corpus::{LabelSet, Vocab};
use crate::decoder::{
    init_rst_stack, partial_tree_features, DecoderConfig, DecoderFrame, DecoderState, Fusion, HierDecoder, StepInputs,
    TraceStep, Variant,
};
use crate::encoder::{EncodedSentence, RstEncoder, RstEncoderConfig};
use crate::error::{Error, Result};
use crate::nn::{Biaffine, CellKind};
use crate::pointer::{classify_rst, point_dot, AttentionResult};
use crate::tensor::{argmax, Graph, ParamStore, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RstModelConfig {
    pub encoder: RstEncoderConfig,
    pub variant: Variant,
    pub fusion: Fusion,
    pub decoder_layers: usize,
    /// Must equal the encoder width for dot-product pointing.
    pub decoder_size: usize,
    pub decoder_dropout: f64,
    pub label_mlp: usize,
    pub classifier_dropout: f64,
    /// Add parent and sibling span vectors to the decoder input.
    pub partial_tree: bool,
}

impl Default for RstModelConfig {
    fn default() -> Self {
        RstModelConfig {
            encoder: RstEncoderConfig::default(),
            variant: Variant::PST,
            fusion: Fusion::Plain,
            decoder_layers: 5,
            decoder_size: 64,
            decoder_dropout: 0.6,
            label_mlp: 64,
            classifier_dropout: 0.5,
            partial_tree: true,
        }
    }
}

/// Word ids and 0-based inclusive EDU token bounds of one sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RstInput {
    pub words: Vec<usize>,
    pub bounds: Vec<(usize, usize)>,
}

impl RstInput {
    pub fn num_edus(&self) -> usize {
        self.bounds.len()
    }
}

/// Whitespace tokens of all EDUs and each EDU's token bounds.
pub fn edu_tokens(edus: &[String]) -> Result<(Vec<String>, Vec<(usize, usize)>)> {
    let mut tokens = Vec::new();
    let mut bounds = Vec::with_capacity(edus.len());
    for (k, e) in edus.iter().enumerate() {
        let start = tokens.len();
        tokens.extend(e.split_whitespace().map(str::to_string));
        if tokens.len() == start {
            return Err(Error::Segmentation(format!("EDU {} has no tokens", k + 1)));
        }
        bounds.push((start, tokens.len() - 1));
    }
    Ok((tokens, bounds))
}

#[derive(Debug, Clone)]
pub struct RstPrepared {
    pub encoded: EncodedSentence,
    /// EDU vectors, `e_1 … e_m`.
    pub edus: Vec<Var>,
    /// The EDU vectors stacked as `[m × dim]`.
    pub matrix: Var,
}

impl RstPrepared {
    pub fn num_edus(&self) -> usize {
        self.edus.len()
    }
}

/// Decoding state over EDU spans.
#[derive(Debug, Clone)]
pub struct RstSearchState {
    pub stack: Vec<DecoderFrame<(usize, usize)>>,
    pub states: Vec<DecoderState>,
    /// Splits `(start, split, end, label)` in creation order.
    pub splits: Vec<(usize, usize, usize, usize)>,
    pub log_prob: f64,
    pub pointer_calls: usize,
    pub score_evals: usize,
}

/// A decoded sentence with search statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct RstParse {
    pub tree: DiscTree,
    pub log_prob: f64,
    pub pointer_calls: usize,
    pub score_evals: usize,
    pub trace: Vec<TraceStep>,
}

#[derive(Debug, Clone, Copy)]
pub struct RstLossParts {
    pub structure: Var,
    pub labels: Var,
    pub total: Var,
}

/// Chooses split points and labels while the shared decoding loop runs.
trait Policy {
    fn split(&mut self, g: &mut Graph, span: (usize, usize), attention: &AttentionResult) -> Result<usize>;
    fn label(&mut self, g: &mut Graph, split: (usize, usize, usize), log_probs: Var) -> Result<usize>;
}

struct Teacher {
    gold: HashMap<(usize, usize), (usize, usize)>,
    pointing: Vec<Var>,
    labeling: Vec<Var>,
    log_prob: Option<f64>,
}

impl Teacher {
    fn gold(&self, span: (usize, usize)) -> Result<(usize, usize)> {
        self.gold
            .get(&span)
            .copied()
            .ok_or_else(|| Error::Contract(format!("no gold split for span [{}, {}]", span.0, span.1)))
    }
}

impl Policy for Teacher {
    fn split(&mut self, g: &mut Graph, span: (usize, usize), attention: &AttentionResult) -> Result<usize> {
        let (k, _) = self.gold(span)?;
        let lp = g.pick(attention.log_probs, k - 1)?;
        let v = g.scalar(lp);
        self.log_prob = Some(self.log_prob.map_or(v, |acc| acc + v));
        self.pointing.push(g.neg(lp));
        Ok(k)
    }

    fn label(&mut self, g: &mut Graph, split: (usize, usize, usize), log_probs: Var) -> Result<usize> {
        let (_, label) = self.gold((split.0, split.2))?;
        let pick = g.pick(log_probs, label)?;
        self.labeling.push(g.neg(pick));
        Ok(label)
    }
}

#[derive(Default)]
struct Greedy {
    trace: Vec<TraceStep>,
}

impl Policy for Greedy {
    fn split(&mut self, _g: &mut Graph, span: (usize, usize), attention: &AttentionResult) -> Result<usize> {
        let pos = attention.argmax();
        self.trace.push(TraceStep {
            step: self.trace.len(),
            popped: format!("{}-{}", span.0, span.1),
            pointed: (pos + 1).to_string(),
            probs: attention.probs.clone(),
        });
        Ok(pos + 1)
    }

    fn label(&mut self, g: &mut Graph, _split: (usize, usize, usize), log_probs: Var) -> Result<usize> {
        Ok(argmax(g.value(log_probs).data()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RstParser {
    pub config: RstModelConfig,
    pub words: Vocab,
    pub labels: LabelSet,
    pub encoder: RstEncoder,
    pub decoder: HierDecoder,
    pub labeler: Biaffine,
    pub store: ParamStore,
}

impl RstParser {
    pub fn new(config: RstModelConfig, words: Vocab, labels: LabelSet, seed: u64) -> Result<Self> {
        let enc_dim = config.encoder.hidden;
        if config.decoder_size != enc_dim {
            return Err(Error::Config(format!(
                "discourse decoder size {} must equal the encoder size {enc_dim}",
                config.decoder_size
            )));
        }
        for l in labels.names() {
            l.parse::<RstLabel>()?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = RstEncoder::new(&mut store, "enc", config.encoder.clone(), words.len(), &mut rng)?;
        let decoder = HierDecoder::new(
            &mut store,
            "dec",
            DecoderConfig {
                variant: config.variant,
                fusion: config.fusion,
                cell: CellKind::Gru,
                layers: config.decoder_layers,
                size: config.decoder_size,
                input_dim: enc_dim,
                dropout: config.decoder_dropout,
            },
            &mut rng,
        )?;
        let labeler = Biaffine::new(
            &mut store,
            "label",
            enc_dim,
            enc_dim,
            config.label_mlp,
            labels.len(),
            config.classifier_dropout,
            &mut rng,
        )?;
        Ok(RstParser {
            config,
            words,
            labels,
            encoder,
            decoder,
            labeler,
            store,
        })
    }

    /// Word vocabulary taken from the EDU texts of `corpus`.
    pub fn from_corpus(config: RstModelConfig, corpus: &[DiscTree], labels: LabelSet, seed: u64) -> Result<Self> {
        let mut words = Vocab::with_specials(&[]);
        for t in corpus {
            for e in &t.edus {
                for w in e.split_whitespace() {
                    words.add(w);
                }
            }
        }
        RstParser::new(config, words, labels, seed)
    }

    pub fn index(&self, edus: &[String]) -> Result<RstInput> {
        let (tokens, bounds) = edu_tokens(edus)?;
        Ok(RstInput {
            words: tokens.iter().map(|w| self.words.index_or_unk(w)).collect(),
            bounds,
        })
    }

    pub fn prepare(&self, g: &mut Graph, input: &RstInput) -> Result<RstPrepared> {
        let (encoded, spans) = self.encoder.encode(g, &input.words, &input.bounds)?;
        let edus: Vec<Var> = spans.iter().map(|s| s.repr).collect();
        let matrix = g.stack(&edus)?;
        Ok(RstPrepared { encoded, edus, matrix })
    }

    fn span_repr(&self, g: &mut Graph, prep: &RstPrepared, span: (usize, usize)) -> Result<Var> {
        g.add(prep.edus[span.0 - 1], prep.edus[span.1 - 1])
    }

    /// Decoder state for `frame`, which has already been popped from `st`.
    pub fn step(&self, g: &mut Graph, prep: &RstPrepared, st: &RstSearchState, frame: &DecoderFrame<(usize, usize)>) -> Result<DecoderState> {
        let element = self.span_repr(g, prep, frame.element)?;
        let input = if self.config.partial_tree {
            let parent = frame.parent_element.map(|p| self.span_repr(g, prep, p)).transpose()?;
            let sibling = match (frame.sibling_element, frame.sibling_step) {
                (Some(s), Some(_)) => Some(self.span_repr(g, prep, s)?),
                _ => None,
            };
            partial_tree_features(g, element, parent, sibling)?
        } else {
            element
        };
        self.decoder.fuse(
            g,
            StepInputs {
                prev: st.states.last(),
                parent: frame.parent_step.map(|i| &st.states[i]),
                sibling: frame.sibling_step.map(|i| &st.states[i]),
                input,
            },
        )
    }

    pub fn label_log_probs(&self, g: &mut Graph, prep: &RstPrepared, split: (usize, usize, usize)) -> Result<Var> {
        classify_rst(g, &self.labeler, prep.edus[split.1 - 1], prep.edus[split.2 - 1])
    }

    fn make_split(
        &self,
        g: &mut Graph,
        prep: &RstPrepared,
        st: &mut RstSearchState,
        policy: &mut dyn Policy,
        split: (usize, usize, usize),
    ) -> Result<()> {
        let lp = self.label_log_probs(g, prep, split)?;
        let label = policy.label(g, split, lp)?;
        st.splits.push((split.0, split.1, split.2, label));
        Ok(())
    }

    /// The stack-driven loop shared by training and decoding. Spans of three
    /// or more EDUs are pointed; two-EDU spans are split at creation.
    fn run(&self, g: &mut Graph, prep: &RstPrepared, policy: &mut dyn Policy) -> Result<RstSearchState> {
        let m = prep.num_edus();
        let (stack, forced) = init_rst_stack(m);
        let mut st = RstSearchState {
            stack,
            states: Vec::new(),
            splits: Vec::with_capacity(m.saturating_sub(1)),
            log_prob: 0.0,
            pointer_calls: 0,
            score_evals: 0,
        };
        if let Some((i, j)) = forced {
            self.make_split(g, prep, &mut st, policy, (i, i, j))?;
        }
        while let Some(frame) = st.stack.pop() {
            let (i, j) = frame.element;
            let state = self.step(g, prep, &st, &frame)?;
            let t = st.states.len();
            let d = state.top();
            st.states.push(state);
            if let Some(right) = st.stack.last_mut() {
                if right.sibling_element == Some((i, j)) && right.sibling_step.is_none() {
                    right.sibling_step = Some(t);
                }
            }
            let attention = point_dot(g, d, prep.matrix, (i, j))?;
            st.pointer_calls += 1;
            st.score_evals += attention.scores.len();
            let k = policy.split(g, (i, j), &attention)?;
            if k < i || k >= j {
                return Err(Error::Contract(format!("split {k} outside span [{i}, {j}]")));
            }
            st.log_prob += attention.log_prob(g, k - 1);
            self.make_split(g, prep, &mut st, policy, (i, k, j))?;
            for (a, b) in [(i, k), (k + 1, j)] {
                if b == a + 1 {
                    self.make_split(g, prep, &mut st, policy, (a, a, b))?;
                }
            }
            let push_left = k >= i + 2;
            if j >= k + 3 {
                st.stack.push(DecoderFrame {
                    element: (k + 1, j),
                    parent_step: Some(t),
                    sibling_step: None,
                    parent_element: Some((i, j)),
                    sibling_element: push_left.then_some((i, k)),
                });
            }
            if push_left {
                st.stack.push(DecoderFrame {
                    element: (i, k),
                    parent_step: Some(t),
                    sibling_step: None,
                    parent_element: Some((i, j)),
                    sibling_element: None,
                });
            }
        }
        Ok(st)
    }

    fn gold_targets(&self, tree: &DiscTree) -> Result<HashMap<(usize, usize), (usize, usize)>> {
        oracle_splits(tree)?
            .into_iter()
            .map(|t| Ok(((t.start, t.end), (t.split, self.labels.index_of(&t.label.to_string())?))))
            .collect()
    }

    fn teacher_force(&self, g: &mut Graph, input: &RstInput, tree: &DiscTree) -> Result<Teacher> {
        if tree.num_edus() != input.num_edus() {
            return Err(Error::Contract(format!(
                "tree over {} EDUs for an input of {}",
                tree.num_edus(),
                input.num_edus()
            )));
        }
        let mut teacher = Teacher {
            gold: self.gold_targets(tree)?,
            pointing: Vec::new(),
            labeling: Vec::new(),
            log_prob: None,
        };
        let prep = self.prepare(g, input)?;
        self.run(g, &prep, &mut teacher)?;
        Ok(teacher)
    }

    /// Split-pointing and label cross-entropy of the gold tree.
    pub fn example_loss(&self, g: &mut Graph, input: &RstInput, tree: &DiscTree) -> Result<RstLossParts> {
        let t = self.teacher_force(g, input, tree)?;
        let sum = |g: &mut Graph, v: &[Var]| {
            if v.is_empty() {
                Ok(g.constant(Tensor::scalar(0.0)))
            } else {
                g.add_all(v)
            }
        };
        let structure = sum(g, &t.pointing)?;
        let labels = sum(g, &t.labeling)?;
        let total = g.add(structure, labels)?;
        Ok(RstLossParts {
            structure,
            labels,
            total,
        })
    }

    /// Log-probability of the gold split sequence.
    pub fn forced_decode(&self, input: &RstInput, tree: &DiscTree) -> Result<f64> {
        let mut g = Graph::new(&self.store);
        Ok(self.teacher_force(&mut g, input, tree)?.log_prob.unwrap_or(0.0))
    }

    pub fn decode_greedy(&self, input: &RstInput, edus: Vec<String>) -> Result<RstParse> {
        if edus.len() != input.num_edus() {
            return Err(Error::Contract("EDU texts do not match the input".into()));
        }
        let mut g = Graph::new(&self.store);
        let prep = self.prepare(&mut g, input)?;
        let mut policy = Greedy::default();
        let st = self.run(&mut g, &prep, &mut policy)?;
        let splits: Vec<Split> = st
            .splits
            .iter()
            .map(|&(start, split, end, l)| {
                Ok(Split {
                    start,
                    split,
                    end,
                    label: self.labels.name(l).parse()?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(RstParse {
            tree: replay_splits(edus, &splits)?,
            log_prob: st.log_prob,
            pointer_calls: st.pointer_calls,
            score_evals: st.score_evals,
            trace: policy.trace,
        })
    }

    pub fn parse(&self, edus: &[String]) -> Result<RstParse> {
        let input = self.index(edus)?;
        self.decode_greedy(&input, edus.to_vec())
    }

    /// Parses EDU sequences in parallel; output order follows input order.
    pub fn parse_all(&self, sentences: &[Vec<String>]) -> Result<Vec<DiscTree>> {
        sentences.par_iter().map(|s| self.parse(s).map(|p| p.tree)).collect()
    }
}
