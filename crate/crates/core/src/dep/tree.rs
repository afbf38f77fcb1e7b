use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One token with the CoNLL-U columns the toolkit keeps verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    pub feats: String,
    pub deps: String,
    pub misc: String,
}

impl Token {
    pub fn new(form: impl Into<String>, upos: impl Into<String>) -> Self {
        let upos = upos.into();
        Token {
            form: form.into(),
            lemma: "_".into(),
            xpos: upos.clone(),
            upos,
            feats: "_".into(),
            deps: "_".into(),
            misc: "_".into(),
        }
    }

    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        self.form.chars()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub comments: Vec<String>,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Self {
        Sentence {
            comments: Vec::new(),
            tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Heads and labels for tokens `1..=n`; head `0` is the synthetic ROOT.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DepTree {
    pub heads: Vec<usize>,
    pub labels: Vec<String>,
}

impl DepTree {
    pub fn new(heads: Vec<usize>, labels: Vec<String>) -> Result<Self> {
        let t = DepTree { heads, labels };
        t.validate(false)?;
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    /// Head of 1-based token `i`.
    pub fn head(&self, i: usize) -> usize {
        self.heads[i - 1]
    }

    /// Checks head range, single root (unless `allow_multi_root`), and that
    /// every token reaches ROOT without a cycle.
    pub fn validate(&self, allow_multi_root: bool) -> Result<()> {
        let n = self.heads.len();
        if self.labels.len() != n {
            return Err(Error::Tree(format!(
                "{} heads but {} labels",
                n,
                self.labels.len()
            )));
        }
        for (i, &h) in self.heads.iter().enumerate() {
            if h > n {
                return Err(Error::Tree(format!("token {} has head {h} beyond {n}", i + 1)));
            }
            if h == i + 1 {
                return Err(Error::Tree(format!("token {} heads itself", i + 1)));
            }
        }
        let roots = self.heads.iter().filter(|&&h| h == 0).count();
        if n > 0 && roots == 0 {
            return Err(Error::Tree("no token attaches to ROOT".into()));
        }
        if roots > 1 && !allow_multi_root {
            return Err(Error::Tree(format!("{roots} tokens attach to ROOT")));
        }
        // 0 = unvisited, 1 = on path, 2 = reaches root
        let mut state = vec![0u8; n + 1];
        state[0] = 2;
        for start in 1..=n {
            let mut path = Vec::new();
            let mut cur = start;
            while state[cur] == 0 {
                state[cur] = 1;
                path.push(cur);
                cur = self.heads[cur - 1];
            }
            if state[cur] == 1 {
                return Err(Error::Tree(format!("cycle through token {cur}")));
            }
            for p in path {
                state[p] = 2;
            }
        }
        Ok(())
    }

    /// Dependents of `head` (0 = ROOT) in increasing position order.
    pub fn children(&self, head: usize) -> Vec<usize> {
        (1..=self.len()).filter(|&i| self.heads[i - 1] == head).collect()
    }

    pub fn is_projective(&self) -> bool {
        let arcs: Vec<(usize, usize)> = self
            .heads
            .iter()
            .enumerate()
            .map(|(i, &h)| {
                let d = i + 1;
                (h.min(d), h.max(d))
            })
            .collect();
        for (a, &(l1, r1)) in arcs.iter().enumerate() {
            for &(l2, r2) in &arcs[a + 1..] {
                if (l1 < l2 && l2 < r1 && r1 < r2) || (l2 < l1 && l1 < r2 && r2 < r1) {
                    return false;
                }
            }
        }
        true
    }
}
