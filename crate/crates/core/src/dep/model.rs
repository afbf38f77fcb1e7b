use std::collections::{BTreeSet, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::oracle::{oracle_order, Decision};
use super::{DepTree, Sentence};
use crate::corpus::LabelSet;
use crate::decoder::{
    init_dep_stack, partial_tree_features, DecoderConfig, DecoderFrame, DecoderState, Fusion, HierDecoder, StepInputs,
    TraceStep, Variant,
};
use crate::encoder::{DepEncoder, DepEncoderConfig, DepVocabs, EncodedSentence, IndexedSentence};
use crate::error::{Error, Result};
use crate::nn::{Biaffine, BiaffineKeys, CellKind};
use crate::pointer::{classify_dep_label, point_biaffine, AttentionResult};
use crate::tensor::{argmax, Graph, ParamStore, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepModelConfig {
    pub encoder: DepEncoderConfig,
    pub variant: Variant,
    pub fusion: Fusion,
    pub decoder_layers: usize,
    pub decoder_size: usize,
    pub decoder_dropout: f64,
    pub arc_mlp: usize,
    pub label_mlp: usize,
    pub classifier_dropout: f64,
    /// Include completion (self-pointing) steps in the pointing loss.
    pub self_point_loss: bool,
    /// Add parent and sibling encoder states to the decoder input.
    pub partial_tree: bool,
}

impl Default for DepModelConfig {
    fn default() -> Self {
        DepModelConfig {
            encoder: DepEncoderConfig::default(),
            variant: Variant::PS,
            fusion: Fusion::Gate,
            decoder_layers: 1,
            decoder_size: 512,
            decoder_dropout: 0.33,
            arc_mlp: 512,
            label_mlp: 128,
            classifier_dropout: 0.33,
            self_point_loss: true,
            partial_tree: true,
        }
    }
}

/// Encoder output plus the pointer and labeler key projections, computed once
/// per sentence.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub encoded: EncodedSentence,
    pub arc_keys: BiaffineKeys,
    pub label_keys: BiaffineKeys,
    /// Real tokens, ROOT excluded.
    pub n: usize,
}

const UNATTACHED: usize = usize::MAX;

/// Decoding state: stack of frames, partial tree and per-step decoder states.
#[derive(Debug, Clone)]
pub struct DepSearchState {
    pub stack: Vec<DecoderFrame<usize>>,
    /// Head of token `i + 1`, or `usize::MAX` while unattached.
    pub heads: Vec<usize>,
    pub labels: Vec<usize>,
    pub states: Vec<DecoderState>,
    pub decisions: Vec<Decision>,
    /// Accumulated pointing log-probability.
    pub log_prob: f64,
    pub unattached: usize,
    pub root_children: usize,
    pub pointer_calls: usize,
    pub score_evals: usize,
}

impl DepSearchState {
    pub fn new(n: usize) -> Self {
        DepSearchState {
            stack: init_dep_stack(),
            heads: vec![UNATTACHED; n],
            labels: vec![0; n],
            states: Vec::with_capacity(2 * n + 1),
            decisions: Vec::with_capacity(2 * n + 1),
            log_prob: 0.0,
            unattached: n,
            root_children: 0,
            pointer_calls: 0,
            score_evals: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.heads.len()
    }

    pub fn is_done(&self) -> bool {
        self.stack.is_empty()
    }

    pub fn top(&self) -> &DecoderFrame<usize> {
        self.stack.last().expect("decoding already finished")
    }

    /// Candidates for the head on top of the stack, over positions `0..=n`.
    ///
    /// Unattached words are always candidates. ROOT takes exactly one
    /// dependent and may only complete afterwards. Any other head may complete
    /// unless it is the last head above ROOT and words remain unattached.
    pub fn mask(&self) -> Vec<bool> {
        let n = self.n();
        let head = self.top().element;
        let mut m = vec![false; n + 1];
        if head == 0 {
            if self.root_children == 0 {
                m[1..].iter_mut().for_each(|x| *x = true);
            } else {
                m[0] = true;
            }
            return m;
        }
        for (i, &h) in self.heads.iter().enumerate() {
            m[i + 1] = h == UNATTACHED;
        }
        m[head] = self.unattached == 0 || self.stack.len() > 2;
        m
    }

    /// Records the step's decoder state and applies `target` for the top head.
    pub fn apply(&mut self, state: DecoderState, target: usize, label: usize, log_prob: f64) {
        let t = self.states.len();
        self.states.push(state);
        self.log_prob += log_prob;
        let head = self.top().element;
        self.decisions.push(Decision { head, target });
        if target == head {
            self.stack.pop();
            return;
        }
        self.heads[target - 1] = head;
        self.labels[target - 1] = label;
        self.unattached -= 1;
        if head == 0 {
            self.root_children += 1;
        }
        let top = self.stack.last_mut().expect("non-empty stack");
        top.sibling_step = Some(t);
        top.sibling_element = Some(target);
        self.stack.push(DecoderFrame {
            element: target,
            parent_step: Some(t),
            sibling_step: None,
            parent_element: Some(head),
            sibling_element: None,
        });
    }

    /// Identity of the search state for beam deduplication.
    pub fn key(&self) -> (Vec<usize>, Vec<usize>) {
        (self.stack.iter().map(|f| f.element).collect(), self.heads.clone())
    }
}

/// Result of one decoder step before a decision is taken.
#[derive(Debug, Clone)]
pub struct StepScores {
    pub state: DecoderState,
    pub mask: Vec<bool>,
    /// `None` when exactly one candidate exists and the pointer is skipped.
    pub attention: Option<AttentionResult>,
}

impl StepScores {
    pub fn forced_target(&self) -> Option<usize> {
        if self.attention.is_some() {
            None
        } else {
            self.mask.iter().position(|&m| m)
        }
    }
}

/// A decoded sentence with search statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DepParse {
    pub heads: Vec<usize>,
    pub labels: Vec<usize>,
    pub log_prob: f64,
    pub decisions: Vec<Decision>,
    pub pointer_calls: usize,
    pub score_evals: usize,
    pub trace: Vec<TraceStep>,
}

/// Loss terms from teacher forcing along the oracle order.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub structure: Var,
    pub labels: Var,
    pub total: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepParser {
    pub config: DepModelConfig,
    pub vocabs: DepVocabs,
    pub labels: LabelSet,
    pub encoder: DepEncoder,
    pub decoder: HierDecoder,
    pub pointer: Biaffine,
    pub labeler: Biaffine,
    pub store: ParamStore,
}

impl DepParser {
    pub fn new(config: DepModelConfig, vocabs: DepVocabs, labels: LabelSet, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = DepEncoder::new(&mut store, "enc", config.encoder.clone(), &vocabs, &mut rng)?;
        let enc_dim = encoder.output_dim();
        let decoder = HierDecoder::new(
            &mut store,
            "dec",
            DecoderConfig {
                variant: config.variant,
                fusion: config.fusion,
                cell: CellKind::Lstm,
                layers: config.decoder_layers,
                size: config.decoder_size,
                input_dim: enc_dim,
                dropout: config.decoder_dropout,
            },
            &mut rng,
        )?;
        let pointer = Biaffine::new(
            &mut store,
            "arc",
            config.decoder_size,
            enc_dim,
            config.arc_mlp,
            1,
            config.classifier_dropout,
            &mut rng,
        )?;
        let labeler = Biaffine::new(
            &mut store,
            "label",
            config.decoder_size,
            enc_dim,
            config.label_mlp,
            labels.len(),
            config.classifier_dropout,
            &mut rng,
        )?;
        Ok(DepParser {
            config,
            vocabs,
            labels,
            encoder,
            decoder,
            pointer,
            labeler,
            store,
        })
    }

    /// Vocabularies and a sorted label inventory taken from `corpus`.
    pub fn from_corpus(config: DepModelConfig, corpus: &[(Sentence, DepTree)], seed: u64) -> Result<Self> {
        let mut vocabs = DepVocabs::new();
        let mut labels = BTreeSet::new();
        for (s, t) in corpus {
            vocabs.observe(&s.tokens);
            labels.extend(t.labels.iter().cloned());
        }
        if labels.is_empty() {
            return Err(Error::Config("training corpus has no labeled tokens".into()));
        }
        DepParser::new(config, vocabs, LabelSet::new(labels.into_iter().collect())?, seed)
    }

    pub fn index(&self, sentence: &Sentence) -> IndexedSentence {
        self.vocabs.index(&sentence.tokens)
    }

    pub fn prepare(&self, g: &mut Graph, sent: &IndexedSentence) -> Result<Prepared> {
        let encoded = self.encoder.encode(g, sent)?;
        let arc_keys = self.pointer.prepare_keys(g, encoded.matrix)?;
        let label_keys = self.labeler.prepare_keys(g, encoded.matrix)?;
        Ok(Prepared {
            encoded,
            arc_keys,
            label_keys,
            n: sent.len(),
        })
    }

    /// Runs the decoder for the frame on top of `st` and scores candidates.
    pub fn step(&self, g: &mut Graph, prep: &Prepared, st: &DepSearchState) -> Result<StepScores> {
        let frame = *st.top();
        let h = &prep.encoded.states;
        let input = if self.config.partial_tree {
            partial_tree_features(
                g,
                h[frame.element],
                frame.parent_element.map(|p| h[p]),
                frame.sibling_element.map(|s| h[s]),
            )?
        } else {
            h[frame.element]
        };
        let state = self.decoder.fuse(
            g,
            StepInputs {
                prev: st.states.last(),
                parent: frame.parent_step.map(|i| &st.states[i]),
                sibling: frame.sibling_step.map(|i| &st.states[i]),
                input,
            },
        )?;
        let mask = st.mask();
        let candidates = mask.iter().filter(|&&m| m).count();
        let attention = if candidates > 1 {
            Some(point_biaffine(g, &self.pointer, state.top(), &prep.arc_keys, &mask)?)
        } else {
            None
        };
        Ok(StepScores { state, mask, attention })
    }

    pub fn label_log_probs(&self, g: &mut Graph, prep: &Prepared, d: Var, dependent: usize) -> Result<Var> {
        classify_dep_label(g, &self.labeler, d, &prep.label_keys, dependent)
    }

    fn gold_labels(&self, tree: &DepTree) -> Result<Vec<usize>> {
        tree.labels.iter().map(|l| self.labels.index_of(l)).collect()
    }

    fn teacher_force(&self, g: &mut Graph, sent: &IndexedSentence, tree: &DepTree) -> Result<(Vec<Var>, Vec<Var>, f64)> {
        if tree.len() != sent.len() {
            return Err(Error::Contract(format!(
                "tree over {} tokens for a sentence of {}",
                tree.len(),
                sent.len()
            )));
        }
        let decisions = oracle_order(tree)?;
        let gold = self.gold_labels(tree)?;
        let prep = self.prepare(g, sent)?;
        let mut st = DepSearchState::new(sent.len());
        let mut pointing = Vec::new();
        let mut labeling = Vec::new();
        let mut log_prob: Option<f64> = None;
        for d in decisions {
            let s = self.step(g, &prep, &st)?;
            if !s.mask[d.target] {
                return Err(Error::Contract(format!(
                    "oracle target {} is not a candidate for head {}",
                    d.target, d.head
                )));
            }
            if let Some(a) = &s.attention {
                if d.target != d.head || self.config.self_point_loss {
                    let lp = g.pick(a.log_probs, d.target)?;
                    let v = g.scalar(lp);
                    log_prob = Some(log_prob.map_or(v, |acc| acc + v));
                    pointing.push(g.neg(lp));
                }
            }
            let mut label = 0;
            if d.target != d.head {
                label = gold[d.target - 1];
                let lp = self.label_log_probs(g, &prep, s.state.top(), d.target)?;
                let pick = g.pick(lp, label)?;
                labeling.push(g.neg(pick));
            }
            st.apply(s.state, d.target, label, 0.0);
        }
        Ok((pointing, labeling, log_prob.unwrap_or(0.0)))
    }

    /// Pointing and label cross-entropy of the gold tree under teacher forcing.
    pub fn example_loss(&self, g: &mut Graph, sent: &IndexedSentence, tree: &DepTree) -> Result<LossParts> {
        let (pointing, labeling, _) = self.teacher_force(g, sent, tree)?;
        let sum = |g: &mut Graph, v: &[Var]| {
            if v.is_empty() {
                Ok(g.constant(Tensor::scalar(0.0)))
            } else {
                g.add_all(v)
            }
        };
        let structure = sum(g, &pointing)?;
        let labels = sum(g, &labeling)?;
        let total = g.add(structure, labels)?;
        Ok(LossParts {
            structure,
            labels,
            total,
        })
    }

    /// Log-probability of the gold decision sequence (the negated pointing loss).
    pub fn forced_decode(&self, sent: &IndexedSentence, tree: &DepTree) -> Result<f64> {
        let mut g = Graph::new(&self.store);
        Ok(self.teacher_force(&mut g, sent, tree)?.2)
    }

    fn best_label(&self, g: &mut Graph, prep: &Prepared, d: Var, dependent: usize) -> Result<usize> {
        let lp = self.label_log_probs(g, prep, d, dependent)?;
        Ok(argmax(g.value(lp).data()))
    }

    pub fn decode_greedy(&self, sent: &IndexedSentence) -> Result<DepParse> {
        let mut g = Graph::new(&self.store);
        let prep = self.prepare(&mut g, sent)?;
        let mut st = DepSearchState::new(sent.len());
        let mut trace = Vec::with_capacity(2 * sent.len() + 1);
        while !st.is_done() {
            let s = self.step(&mut g, &prep, &st)?;
            let head = st.top().element;
            let (target, lp, probs) = match &s.attention {
                Some(a) => {
                    st.pointer_calls += 1;
                    st.score_evals += a.scores.len();
                    let t = a.argmax();
                    (t, a.log_prob(&g, t), a.probs.clone())
                }
                None => {
                    let t = s.forced_target().expect("one candidate");
                    let mut p = vec![0.0; s.mask.len()];
                    p[t] = 1.0;
                    (t, 0.0, p)
                }
            };
            let label = if target != head {
                self.best_label(&mut g, &prep, s.state.top(), target)?
            } else {
                0
            };
            trace.push(TraceStep {
                step: st.states.len(),
                popped: position_name(head),
                pointed: position_name(target),
                probs,
            });
            st.apply(s.state, target, label, lp);
        }
        Ok(finish(st, trace))
    }

    /// Beam search over pointing decisions. Candidates are ranked by
    /// accumulated log-probability, then by the step probability, then by
    /// earlier hypothesis and lower position, which makes width 1 coincide
    /// with greedy decoding.
    pub fn decode_beam(&self, sent: &IndexedSentence, width: usize) -> Result<DepParse> {
        if width == 0 {
            return Err(Error::Config("beam width must be at least 1".into()));
        }
        let mut g = Graph::new(&self.store);
        let prep = self.prepare(&mut g, sent)?;
        let mut beam = vec![DepSearchState::new(sent.len())];
        let mut traces: Vec<Vec<TraceStep>> = vec![Vec::new()];
        while beam.iter().any(|h| !h.is_done()) {
            struct Cand {
                score: f64,
                prob: f64,
                lp: f64,
                hyp: usize,
                target: usize,
            }
            let mut cands = Vec::new();
            let mut steps = Vec::with_capacity(beam.len());
            for (k, hyp) in beam.iter().enumerate() {
                let s = self.step(&mut g, &prep, hyp)?;
                match &s.attention {
                    Some(a) => {
                        for (t, &m) in s.mask.iter().enumerate() {
                            if m {
                                let lp = a.log_prob(&g, t);
                                cands.push(Cand {
                                    score: hyp.log_prob + lp,
                                    prob: a.probs[t],
                                    lp,
                                    hyp: k,
                                    target: t,
                                });
                            }
                        }
                    }
                    None => cands.push(Cand {
                        score: hyp.log_prob,
                        prob: 1.0,
                        lp: 0.0,
                        hyp: k,
                        target: s.forced_target().expect("one candidate"),
                    }),
                }
                steps.push(s);
            }
            cands.sort_by(|a, b| {
                b.score
                    .total_cmp(&a.score)
                    .then(b.prob.total_cmp(&a.prob))
                    .then(a.hyp.cmp(&b.hyp))
                    .then(a.target.cmp(&b.target))
            });
            let mut next = Vec::with_capacity(width);
            let mut next_traces = Vec::with_capacity(width);
            let mut seen = HashSet::new();
            for c in cands {
                if next.len() == width {
                    break;
                }
                let parent = &beam[c.hyp];
                let s = &steps[c.hyp];
                let head = parent.top().element;
                let mut h = parent.clone();
                if s.attention.is_some() {
                    h.pointer_calls += 1;
                    h.score_evals += s.mask.len();
                }
                let label = if c.target != head {
                    self.best_label(&mut g, &prep, s.state.top(), c.target)?
                } else {
                    0
                };
                let step = parent.states.len();
                h.apply(s.state.clone(), c.target, label, c.lp);
                if seen.insert(h.key()) {
                    let probs = match &s.attention {
                        Some(a) => a.probs.clone(),
                        None => {
                            let mut p = vec![0.0; s.mask.len()];
                            p[c.target] = 1.0;
                            p
                        }
                    };
                    let mut trace = traces[c.hyp].clone();
                    trace.push(TraceStep {
                        step,
                        popped: position_name(head),
                        pointed: position_name(c.target),
                        probs,
                    });
                    next.push(h);
                    next_traces.push(trace);
                }
            }
            beam = next;
            traces = next_traces;
        }
        let best = beam.into_iter().next().expect("non-empty beam");
        let trace = traces.into_iter().next().expect("non-empty beam");
        Ok(finish(best, trace))
    }

    /// Greedy (`beam == 1`) or beam decoding of a raw sentence.
    pub fn parse(&self, sentence: &Sentence, beam: usize) -> Result<(DepTree, DepParse)> {
        let idx = self.index(sentence);
        let p = if beam <= 1 {
            self.decode_greedy(&idx)?
        } else {
            self.decode_beam(&idx, beam)?
        };
        Ok((self.to_tree(&p), p))
    }

    /// Parses sentences in parallel; output order follows input order.
    pub fn parse_all(&self, sentences: &[Sentence], beam: usize) -> Result<Vec<DepTree>> {
        sentences
            .par_iter()
            .map(|s| self.parse(s, beam).map(|r| r.0))
            .collect()
    }

    pub fn to_tree(&self, p: &DepParse) -> DepTree {
        DepTree {
            heads: p.heads.clone(),
            labels: p.labels.iter().map(|&l| self.labels.name(l).to_string()).collect(),
        }
    }
}

fn position_name(i: usize) -> String {
    if i == 0 {
        "ROOT".into()
    } else {
        i.to_string()
    }
}

fn finish(st: DepSearchState, trace: Vec<TraceStep>) -> DepParse {
    DepParse {
        heads: st.heads,
        labels: st.labels,
        log_prob: st.log_prob,
        decisions: st.decisions,
        pointer_calls: st.pointer_calls,
        score_evals: st.score_evals,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::gen_synthetic_dep;
    use crate::tensor::Gradients;
    use crate::train::{HasParams, TrainConfig, Trainer};

    pub(crate) fn tiny_config(variant: Variant, fusion: Fusion) -> DepModelConfig {
        DepModelConfig {
            encoder: DepEncoderConfig {
                word_dim: 6,
                pos_dim: 4,
                char_dim: 3,
                char_filters: 5,
                hidden: 6,
                layers: 1,
                ..Default::default()
            },
            variant,
            fusion,
            decoder_size: 8,
            arc_mlp: 7,
            label_mlp: 5,
            ..Default::default()
        }
    }

    fn tiny(seed: u64) -> (DepParser, Vec<(Sentence, DepTree)>) {
        let corpus = gen_synthetic_dep(seed, 20, 8, 30, 4).unwrap();
        let p = DepParser::from_corpus(tiny_config(Variant::PST, Fusion::SGate), &corpus, seed).unwrap();
        (p, corpus)
    }

    #[test]
    fn greedy_is_valid_and_bounded() {
        let (p, corpus) = tiny(1);
        for (s, _) in &corpus {
            let (tree, parse) = p.parse(s, 1).unwrap();
            tree.validate(false).unwrap();
            assert!(parse.pointer_calls <= 2 * s.len());
            assert_eq!(parse.decisions.len(), 2 * s.len() + 1);
            assert_eq!(super::super::replay(s.len(), &parse.decisions).unwrap(), tree.heads);
        }
    }

    #[test]
    fn single_word_attaches_to_root() {
        let (p, corpus) = tiny(2);
        let s = Sentence::new(vec![corpus[0].0.tokens[0].clone()]);
        let (tree, parse) = p.parse(&s, 1).unwrap();
        assert_eq!(tree.heads, vec![0]);
        assert_eq!(parse.pointer_calls, 0);
    }

    #[test]
    fn uniform_model_loss() {
        let (mut p, corpus) = tiny(3);
        for id in [p.pointer.w, p.pointer.u, p.pointer.v, p.pointer.b, p.labeler.w, p.labeler.u, p.labeler.v, p.labeler.b] {
            p.store.value_mut(id).data_mut().fill(0.0);
        }
        let (s, t) = &corpus[5];
        let idx = p.index(s);
        let mut g = Graph::new(&p.store);
        let loss = p.example_loss(&mut g, &idx, t).unwrap();
        // replay the oracle to count candidates per step
        let mut st = DepSearchState::new(s.len());
        let mut want = 0.0;
        for d in oracle_order(t).unwrap() {
            let c = st.mask().iter().filter(|&&m| m).count();
            want += (c as f64).ln();
            let dummy = DecoderState { layers: vec![] };
            st.apply(dummy, d.target, 0, 0.0);
        }
        assert!((g.scalar(loss.structure) - want).abs() < 1e-9);
        let want_labels = s.len() as f64 * (p.labels.len() as f64).ln();
        assert!((g.scalar(loss.labels) - want_labels).abs() < 1e-9);
        assert_eq!(-g.scalar(loss.structure), p.forced_decode(&idx, t).unwrap());
    }

    #[test]
    fn one_step_reduces_loss() {
        let (mut p, corpus) = tiny(4);
        let (s, t) = corpus[3].clone();
        let idx = p.index(&s);
        let eval = |p: &DepParser| {
            let mut g = Graph::new(&p.store);
            let l = p.example_loss(&mut g, &idx, &t).unwrap();
            g.scalar(l.total)
        };
        let before = eval(&p);
        let mut cfg = TrainConfig::default();
        cfg.adam.lr = 1e-3;
        cfg.batch_size = 1;
        let mut tr = Trainer::new(cfg, p.params()).unwrap();
        // dropout-free step so the update direction matches the evaluated loss
        let mut grads = Gradients::zeros(&p.store);
        {
            let mut g = Graph::new(&p.store);
            let l = p.example_loss(&mut g, &idx, &t).unwrap();
            g.backward(l.total, &mut grads).unwrap();
        }
        tr.adam.step(&mut p.store, &grads).unwrap();
        assert!(eval(&p) < before);
    }

    #[test]
    fn beam_one_matches_greedy_and_beam_dominates() {
        let (p, corpus) = tiny(5);
        for (s, _) in &corpus {
            let idx = p.index(s);
            let g = p.decode_greedy(&idx).unwrap();
            let b1 = p.decode_beam(&idx, 1).unwrap();
            assert_eq!((&g.heads, &g.labels, g.log_prob.to_bits()), (&b1.heads, &b1.labels, b1.log_prob.to_bits()));
            let b4 = p.decode_beam(&idx, 4).unwrap();
            assert!(b4.log_prob >= g.log_prob);
            DepTree { heads: b4.heads.clone(), labels: vec!["x".into(); s.len()] }.validate(false).unwrap();
        }
    }

    #[test]
    fn trace_export() {
        let (p, corpus) = tiny(6);
        let idx = p.index(&corpus[0].0);
        let parse = p.decode_greedy(&idx).unwrap();
        let text = crate::decoder::format_trace(&parse.trace);
        assert_eq!(text.lines().count(), 2 * corpus[0].0.len() + 1);
        assert!(text.lines().last().unwrap().starts_with(&format!("{}\tROOT\tROOT", 2 * corpus[0].0.len())));
    }

    #[test]
    fn beam_trace_follows_the_winner() {
        let (p, corpus) = tiny(6);
        for (s, _) in &corpus {
            let idx = p.index(s);
            let greedy = p.decode_greedy(&idx).unwrap();
            assert_eq!(p.decode_beam(&idx, 1).unwrap().trace, greedy.trace);
            let wide = p.decode_beam(&idx, 4).unwrap();
            assert_eq!(wide.trace.len(), 2 * s.len() + 1);
            let mut heads = vec![usize::MAX; s.len()];
            for t in &wide.trace {
                if t.popped != t.pointed {
                    let name = |x: &str| if x == "ROOT" { 0 } else { x.parse::<usize>().unwrap() };
                    heads[name(&t.pointed) - 1] = name(&t.popped);
                }
            }
            assert_eq!(heads, wide.heads);
        }
    }
}
