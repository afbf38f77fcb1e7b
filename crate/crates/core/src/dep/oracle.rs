use crate::error::{Error, Result};

use super::DepTree;

/// One pointing decision: the head on top of the stack and the position it
/// points to. `target == head` marks completion of that head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Decision {
    pub head: usize,
    pub target: usize,
}

/// Canonical top-down order: depth-first from ROOT; each head takes its left
/// dependents nearest-first, then its right dependents nearest-first, then
/// points to itself.
pub fn oracle_order(tree: &DepTree) -> Result<Vec<Decision>> {
    tree.validate(false)?;
    let n = tree.len();
    let mut children = vec![Vec::new(); n + 1];
    for d in 1..=n {
        children[tree.head(d)].push(d);
    }
    let mut out = Vec::with_capacity(2 * n + 1);
    // (head, ordered dependents, next dependent to emit)
    let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(0, ordered(0, &children[0]), 0)];
    while let Some(top) = stack.last_mut() {
        let head = top.0;
        if top.2 < top.1.len() {
            let dep = top.1[top.2];
            top.2 += 1;
            out.push(Decision { head, target: dep });
            stack.push((dep, ordered(dep, &children[dep]), 0));
        } else {
            out.push(Decision { head, target: head });
            stack.pop();
        }
    }
    Ok(out)
}

fn ordered(head: usize, deps: &[usize]) -> Vec<usize> {
    let mut left: Vec<usize> = deps.iter().copied().filter(|&d| d < head).collect();
    left.reverse();
    left.extend(deps.iter().copied().filter(|&d| d > head));
    left
}

/// Rebuilds heads from a decision sequence, checking stack discipline.
pub fn replay(n: usize, decisions: &[Decision]) -> Result<Vec<usize>> {
    let mut heads = vec![usize::MAX; n];
    let mut stack = vec![0usize];
    for (t, d) in decisions.iter().enumerate() {
        let top = *stack
            .last()
            .ok_or_else(|| Error::Tree(format!("decision {t} after the stack emptied")))?;
        if d.head != top {
            return Err(Error::Tree(format!("decision {t} expands {} but the stack top is {top}", d.head)));
        }
        if d.target == d.head {
            stack.pop();
            continue;
        }
        if d.target == 0 || d.target > n || heads[d.target - 1] != usize::MAX {
            return Err(Error::Tree(format!("decision {t} points to unavailable position {}", d.target)));
        }
        heads[d.target - 1] = d.head;
        stack.push(d.target);
    }
    if !stack.is_empty() || heads.contains(&usize::MAX) {
        return Err(Error::Tree("decision sequence leaves the tree incomplete".into()));
    }
    Ok(heads)
}
