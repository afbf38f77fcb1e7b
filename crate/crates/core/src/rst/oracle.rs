use std::collections::HashMap;

use super::{DiscTree, RstLabel, Split};
use crate::error::{Error, Result};

/// One split in decoding order. `pointed` is false for spans of two EDUs,
/// which are split without a pointer step.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SplitTarget {
    pub start: usize,
    pub split: usize,
    pub end: usize,
    pub label: RstLabel,
    pub pointed: bool,
}

impl SplitTarget {
    pub fn to_split(&self) -> Split {
        Split {
            start: self.start,
            split: self.split,
            end: self.end,
            label: self.label.clone(),
        }
    }
}

/// Gold splits in the order the stack decoder creates them: a popped span's
/// split, then the forced splits of its two-EDU children (left first); the
/// right child is pushed before the left, so the left subtree comes next.
pub fn oracle_splits(gold: &DiscTree) -> Result<Vec<SplitTarget>> {
    gold.validate()?;
    let m = gold.num_edus();
    let by_span: HashMap<(usize, usize), Split> = gold.splits().into_iter().map(|s| ((s.start, s.end), s)).collect();
    let get = |i: usize, j: usize, pointed: bool| -> Result<SplitTarget> {
        let s = by_span
            .get(&(i, j))
            .ok_or_else(|| Error::Tree(format!("gold tree has no split for span [{i}, {j}]")))?;
        Ok(SplitTarget {
            start: i,
            split: s.split,
            end: j,
            label: s.label.clone(),
            pointed,
        })
    };
    let mut out = Vec::with_capacity(m.saturating_sub(1));
    if m == 2 {
        out.push(get(1, 2, false)?);
    }
    let mut stack = if m >= 3 { vec![(1, m)] } else { Vec::new() };
    while let Some((i, j)) = stack.pop() {
        let t = get(i, j, true)?;
        let k = t.split;
        out.push(t);
        for (a, b) in [(i, k), (k + 1, j)] {
            if b == a + 1 {
                out.push(get(a, b, false)?);
            }
        }
        if j >= k + 3 {
            stack.push((k + 1, j));
        }
        if k >= i + 2 {
            stack.push((i, k));
        }
    }
    Ok(out)
}

/// Rebuilds a tree over `edus` from splits given in any order.
pub fn replay_splits(edus: Vec<String>, splits: &[Split]) -> Result<DiscTree> {
    let mut by_span = HashMap::with_capacity(splits.len());
    for s in splits {
        if by_span.insert((s.start, s.end), s).is_some() {
            return Err(Error::Tree(format!("span [{}, {}] split twice", s.start, s.end)));
        }
    }
    let mut ordered = Vec::with_capacity(splits.len());
    let mut stack = vec![(1, edus.len())];
    while let Some((i, j)) = stack.pop() {
        if i >= j {
            continue;
        }
        let s = by_span
            .get(&(i, j))
            .ok_or_else(|| Error::Tree(format!("missing split for span [{i}, {j}]")))?;
        ordered.push((*s).clone());
        stack.push((s.split + 1, j));
        stack.push((i, s.split));
    }
    DiscTree::from_splits(edus, &ordered)
}
