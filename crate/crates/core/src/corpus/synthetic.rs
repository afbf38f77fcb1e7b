//! Seeded random corpora for desk-scale training and property tests.
//!
//! Both generators draw from one `ChaCha8Rng` seeded with `seed`, in the
//! order documented on each function, so the output is a pure function of
//! the arguments.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::vocab::LabelSet;
use crate::dep::{DepTree, Sentence, Token};
use crate::error::{Error, Result};
use crate::rst::{DiscNode, DiscTree, RstLabel};

/// POS tags assigned to synthetic word `w{i}` as `TAGS[i % 8]`.
pub const SYNTHETIC_TAGS: [&str; 8] = ["NOUN", "VERB", "ADJ", "ADV", "PRON", "DET", "ADP", "PUNCT"];

/// Words per EDU in synthetic discourse corpora are drawn from `1..=3`.
pub const SYNTHETIC_EDU_MAX_TOKENS: usize = 3;
/// Vocabulary size for synthetic discourse corpora.
pub const SYNTHETIC_RST_VOCAB: usize = 200;

pub fn synthetic_word(index: usize) -> Token {
    Token::new(format!("w{index}"), SYNTHETIC_TAGS[index % SYNTHETIC_TAGS.len()])
}

pub fn synthetic_dep_label(index: usize) -> String {
    format!("rel{index}")
}

/// Random labeled dependency trees.
///
/// Per sentence: length `n ~ U[1, max_len]`; `n` word ids `~ U[0, vocab)`;
/// a shuffle of positions `1..=n`; the first shuffled position attaches to
/// ROOT and position `j` of the shuffle attaches to shuffled position
/// `U[0, j)`; finally `n` label ids `~ U[0, label_count)` in token order.
pub fn gen_synthetic_dep(
    seed: u64,
    count: usize,
    max_len: usize,
    vocab_size: usize,
    label_count: usize,
) -> Result<Vec<(Sentence, DepTree)>> {
    if max_len == 0 || vocab_size == 0 || label_count == 0 {
        return Err(Error::Config(
            "synthetic dependency corpus needs positive max length, vocabulary and label count".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let n = rng.gen_range(1..=max_len);
        let tokens: Vec<Token> = (0..n).map(|_| synthetic_word(rng.gen_range(0..vocab_size))).collect();
        let mut order: Vec<usize> = (1..=n).collect();
        order.shuffle(&mut rng);
        let mut heads = vec![0; n];
        for j in 1..n {
            heads[order[j] - 1] = order[rng.gen_range(0..j)];
        }
        let labels = (0..n).map(|_| synthetic_dep_label(rng.gen_range(0..label_count))).collect();
        let mut sentence = Sentence::new(tokens);
        sentence.comments.push(format!("# sent_id = syn-{}", k + 1));
        out.push((sentence, DepTree { heads, labels }));
    }
    Ok(out)
}

/// Random binary discourse trees.
///
/// Per tree: `m ~ U[1, max_edus]`; for each EDU a length `~ U[1, 3]` then
/// that many word ids `~ U[0, 200)`; then the tree by pre-order recursion,
/// where span `[i, j]` with `i < j` draws split `k ~ U[i, j)` followed by a
/// label id `~ U[0, label_count)`, then recurses left and right.
pub fn gen_synthetic_rst(seed: u64, count: usize, max_edus: usize, label_count: usize) -> Result<Vec<DiscTree>> {
    if max_edus == 0 {
        return Err(Error::Config("synthetic discourse corpus needs max EDUs ≥ 1".into()));
    }
    let labels = LabelSet::rst_prefix(label_count)?;
    let labels: Vec<RstLabel> = labels
        .names()
        .iter()
        .map(|n| n.parse())
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let m = rng.gen_range(1..=max_edus);
        let edus: Vec<String> = (0..m)
            .map(|_| {
                let len = rng.gen_range(1..=SYNTHETIC_EDU_MAX_TOKENS);
                (0..len)
                    .map(|_| format!("w{}", rng.gen_range(0..SYNTHETIC_RST_VOCAB)))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let root = random_node(&mut rng, 1, m, &labels);
        out.push(DiscTree { root, edus });
    }
    Ok(out)
}

fn random_node(rng: &mut ChaCha8Rng, i: usize, j: usize, labels: &[RstLabel]) -> DiscNode {
    if i == j {
        return DiscNode::Leaf(i);
    }
    let k = rng.gen_range(i..j);
    let label = labels[rng.gen_range(0..labels.len())].clone();
    let left = random_node(rng, i, k, labels);
    let right = random_node(rng, k + 1, j, labels);
    DiscNode::Internal {
        label,
        left: Box::new(left),
        right: Box::new(right),
    }
}
