use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Nuclearity {
    NS,
    SN,
    NN,
}

impl Nuclearity {
    pub fn flipped(self) -> Self {
        match self {
            Nuclearity::NS => Nuclearity::SN,
            Nuclearity::SN => Nuclearity::NS,
            Nuclearity::NN => Nuclearity::NN,
        }
    }
}

impl FromStr for Nuclearity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "NS" => Ok(Nuclearity::NS),
            "SN" => Ok(Nuclearity::SN),
            "NN" => Ok(Nuclearity::NN),
            other => Err(Error::Tree(format!("unknown nuclearity `{other}`"))),
        }
    }
}

impl fmt::Display for Nuclearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Nuclearity::NS => "NS",
            Nuclearity::SN => "SN",
            Nuclearity::NN => "NN",
        })
    }
}

/// Nuclearity and relation of one internal node, written `NS-Elaboration`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RstLabel {
    pub nuclearity: Nuclearity,
    pub relation: String,
}

impl RstLabel {
    pub fn new(nuclearity: Nuclearity, relation: impl Into<String>) -> Self {
        RstLabel {
            nuclearity,
            relation: relation.into(),
        }
    }
}

impl FromStr for RstLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (nuc, rel) = s
            .split_once('-')
            .ok_or_else(|| Error::Tree(format!("label `{s}` is not NUC-Relation")))?;
        if rel.is_empty() {
            return Err(Error::Tree(format!("label `{s}` has an empty relation")));
        }
        Ok(RstLabel::new(nuc.parse()?, rel))
    }
}

impl fmt::Display for RstLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.nuclearity, self.relation)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiscNode {
    /// 1-based EDU index.
    Leaf(usize),
    Internal {
        label: RstLabel,
        left: Box<DiscNode>,
        right: Box<DiscNode>,
    },
}

/// One internal node as an EDU interval `[start, end]` split after `split`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Split {
    pub start: usize,
    pub split: usize,
    pub end: usize,
    pub label: RstLabel,
}

/// Binary discourse tree over EDUs `1..=m` with the EDU texts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiscTree {
    pub root: DiscNode,
    pub edus: Vec<String>,
}

impl DiscNode {
    fn span(&self) -> (usize, usize) {
        match self {
            DiscNode::Leaf(i) => (*i, *i),
            DiscNode::Internal { left, right, .. } => (left.span().0, right.span().1),
        }
    }

    fn collect(&self, out: &mut Vec<Split>) {
        if let DiscNode::Internal { label, left, right } = self {
            let (start, split) = left.span();
            let (_, end) = right.span();
            out.push(Split {
                start,
                split,
                end,
                label: label.clone(),
            });
            left.collect(out);
            right.collect(out);
        }
    }

    fn leaves(&self, out: &mut Vec<usize>) {
        match self {
            DiscNode::Leaf(i) => out.push(*i),
            DiscNode::Internal { left, right, .. } => {
                left.leaves(out);
                right.leaves(out);
            }
        }
    }
}

impl DiscTree {
    pub fn new(root: DiscNode, edus: Vec<String>) -> Result<Self> {
        let t = DiscTree { root, edus };
        t.validate()?;
        Ok(t)
    }

    pub fn leaf(text: impl Into<String>) -> Self {
        DiscTree {
            root: DiscNode::Leaf(1),
            edus: vec![text.into()],
        }
    }

    pub fn num_edus(&self) -> usize {
        self.edus.len()
    }

    /// Internal nodes in pre-order (parent before children, left before right).
    pub fn splits(&self) -> Vec<Split> {
        let mut out = Vec::new();
        self.root.collect(&mut out);
        out
    }

    /// In-order leaves must be exactly `1..=m`; adjacency of children then
    /// follows from the recursive structure.
    pub fn validate(&self) -> Result<()> {
        let mut leaves = Vec::new();
        self.root.leaves(&mut leaves);
        if leaves.len() != self.edus.len() {
            return Err(Error::Tree(format!(
                "tree has {} leaves but {} EDU texts",
                leaves.len(),
                self.edus.len()
            )));
        }
        for (pos, &leaf) in leaves.iter().enumerate() {
            if leaf != pos + 1 {
                return Err(Error::Tree(format!(
                    "leaf {} found at in-order position {}",
                    leaf,
                    pos + 1
                )));
            }
        }
        Ok(())
    }

    /// Rebuilds a tree from pre-order splits over `m` EDUs.
    pub fn from_splits(edus: Vec<String>, splits: &[Split]) -> Result<Self> {
        let m = edus.len();
        if m == 0 {
            return Err(Error::Tree("a discourse tree needs at least one EDU".into()));
        }
        let mut iter = splits.iter();
        let root = build(1, m, &mut iter)?;
        if iter.next().is_some() {
            return Err(Error::Tree("unused splits after rebuilding the tree".into()));
        }
        DiscTree::new(root, edus)
    }
}

fn build<'a>(start: usize, end: usize, it: &mut impl Iterator<Item = &'a Split>) -> Result<DiscNode> {
    if start == end {
        return Ok(DiscNode::Leaf(start));
    }
    let s = it
        .next()
        .ok_or_else(|| Error::Tree(format!("missing split for span [{start}, {end}]")))?;
    if s.start != start || s.end != end || s.split < start || s.split >= end {
        return Err(Error::Tree(format!(
            "split ({}, {}, {}) does not fit span [{start}, {end}]",
            s.start, s.split, s.end
        )));
    }
    let left = build(start, s.split, it)?;
    let right = build(s.split + 1, end, it)?;
    Ok(DiscNode::Internal {
        label: s.label.clone(),
        left: Box::new(left),
        right: Box::new(right),
    })
}
