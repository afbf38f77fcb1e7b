use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
pub const ROOT: &str = "<root>";
pub const PAD: &str = "<pad>";

/// String-to-index map. Index 0 is always the unknown symbol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    items: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(items: Vec<String>) -> Self {
        let index = items.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Vocab { items, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.items
    }
}

impl Vocab {
    /// New vocabulary holding `UNK` followed by `specials`.
    pub fn with_specials(specials: &[&str]) -> Self {
        let mut v = Vocab::from(vec![UNK.to_string()]);
        for s in specials {
            v.add(s);
        }
        v
    }

    pub fn add(&mut self, item: &str) -> usize {
        if let Some(&i) = self.index.get(item) {
            return i;
        }
        let i = self.items.len();
        self.items.push(item.to_string());
        self.index.insert(item.to_string(), i);
        i
    }

    pub fn get(&self, item: &str) -> Option<usize> {
        self.index.get(item).copied()
    }

    /// Index of `item`, or the unknown index.
    pub fn index_or_unk(&self, item: &str) -> usize {
        self.get(item).unwrap_or(0)
    }

    pub fn name(&self, index: usize) -> &str {
        &self.items[index]
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }
}

/// Ordered label inventory. Indices are positions in the list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = Error;
    fn try_from(names: Vec<String>) -> Result<Self> {
        LabelSet::new(names)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(l: LabelSet) -> Self {
        l.names
    }
}

/// The full discourse inventory: 18 relations with their attested nuclearities.
pub const RST_LABELS: &str = include_str!("../../data/rst_labels.txt");

impl LabelSet {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Config("label set is empty".into()));
        }
        let mut index = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || n.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("invalid label name `{n}`")));
            }
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate label `{n}`")));
            }
        }
        Ok(LabelSet { names, index })
    }

    /// One label per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        LabelSet::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from)
                .collect(),
        )
    }

    pub fn to_text(&self) -> String {
        let mut s = self.names.join("\n");
        s.push('\n');
        s
    }

    pub fn rst_full() -> Self {
        LabelSet::parse(RST_LABELS).expect("shipped inventory is valid")
    }

    /// The first `count` labels of the full discourse inventory.
    pub fn rst_prefix(count: usize) -> Result<Self> {
        let full = LabelSet::rst_full();
        if count == 0 || count > full.len() {
            return Err(Error::Config(format!(
                "discourse label count must be in 1..={}, got {count}",
                full.len()
            )));
        }
        LabelSet::new(full.names[..count].to_vec())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.get(name)
            .ok_or_else(|| Error::Load(format!("label `{name}` is not in the inventory")))
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// SHA-256 over the newline-joined names, as lowercase hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocab_basics() {
        let mut v = Vocab::with_specials(&[ROOT]);
        assert_eq!(v.get(UNK), Some(0));
        assert_eq!(v.add("a"), 2);
        assert_eq!(v.add("a"), 2);
        assert_eq!(v.index_or_unk("zzz"), 0);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocab = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn full_inventory() {
        let l = LabelSet::rst_full();
        assert_eq!(l.len(), 39);
        let relations: std::collections::BTreeSet<_> =
            l.names().iter().map(|n| n.split_once('-').unwrap().1).collect();
        assert_eq!(relations.len(), 18);
        for n in l.names() {
            n.parse::<crate::rst::RstLabel>().unwrap();
        }
    }

    #[test]
    fn hash_tracks_order() {
        let a = LabelSet::parse("x\ny\n").unwrap();
        let b = LabelSet::parse("y\nx\n").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), LabelSet::parse("# c\nx\n\ny").unwrap().hash());
        assert!(LabelSet::parse("x\nx").is_err());
    }
}
