//! Attachment scores, discourse Parseval, and length-bucketed reports.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::dep::{DepTree, Sentence};
use crate::error::{Error, Result};
use crate::rst::{DiscTree, Nuclearity};

/// Punctuation policy for attachment scores.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PunctPolicy {
    pub exclude: bool,
    /// Gold XPOS values treated as punctuation in addition to UPOS `PUNCT`.
    pub xpos: Vec<String>,
}

impl PunctPolicy {
    pub fn none() -> Self {
        PunctPolicy {
            exclude: false,
            xpos: Vec::new(),
        }
    }

    /// UPOS `PUNCT` plus the Penn Treebank punctuation tags.
    pub fn standard() -> Self {
        PunctPolicy {
            exclude: true,
            xpos: ["``", "''", ",", ".", ":", "-LRB-", "-RRB-", "#", "$"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }

    pub fn is_punct(&self, upos: &str, xpos: &str) -> bool {
        self.exclude && (upos == "PUNCT" || self.xpos.iter().any(|p| p == xpos))
    }
}

impl Default for PunctPolicy {
    fn default() -> Self {
        PunctPolicy::standard()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepScore {
    pub correct_heads: usize,
    pub correct_labeled: usize,
    pub total: usize,
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        100.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

impl DepScore {
    pub fn uas(&self) -> f64 {
        percent(self.correct_heads, self.total)
    }

    pub fn las(&self) -> f64 {
        percent(self.correct_labeled, self.total)
    }

    pub fn merge(&mut self, other: &DepScore) {
        self.correct_heads += other.correct_heads;
        self.correct_labeled += other.correct_labeled;
        self.total += other.total;
    }
}

pub fn score_dep(sentence: &Sentence, gold: &DepTree, pred: &DepTree, punct: &PunctPolicy) -> Result<DepScore> {
    let n = sentence.len();
    if gold.len() != n || pred.len() != n {
        return Err(Error::Contract(format!(
            "token count mismatch: sentence {n}, gold {}, predicted {}",
            gold.len(),
            pred.len()
        )));
    }
    let mut s = DepScore::default();
    for (i, tok) in sentence.tokens.iter().enumerate() {
        if punct.is_punct(&tok.upos, &tok.xpos) {
            continue;
        }
        s.total += 1;
        if gold.heads[i] == pred.heads[i] {
            s.correct_heads += 1;
            if gold.labels[i] == pred.labels[i] {
                s.correct_labeled += 1;
            }
        }
    }
    Ok(s)
}

pub fn score_dep_corpus<'a, I>(items: I, punct: &PunctPolicy) -> Result<DepScore>
where
    I: IntoIterator<Item = (&'a Sentence, &'a DepTree, &'a DepTree)>,
{
    let mut total = DepScore::default();
    for (s, g, p) in items {
        total.merge(&score_dep(s, g, p, punct)?);
    }
    Ok(total)
}

/// Matched / gold / predicted counts for one Parseval facet.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Facet {
    pub matched: usize,
    pub gold: usize,
    pub predicted: usize,
}

impl Facet {
    pub fn precision(&self) -> f64 {
        percent(self.matched, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        percent(self.matched, self.gold)
    }

    pub fn f1(&self) -> f64 {
        if self.gold == 0 && self.predicted == 0 {
            return 100.0;
        }
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    fn merge(&mut self, o: &Facet) {
        self.matched += o.matched;
        self.gold += o.gold;
        self.predicted += o.predicted;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsevalScore {
    pub span: Facet,
    pub nuclearity: Facet,
    pub relation: Facet,
}

impl ParsevalScore {
    pub fn merge(&mut self, o: &ParsevalScore) {
        self.span.merge(&o.span);
        self.nuclearity.merge(&o.nuclearity);
        self.relation.merge(&o.relation);
    }
}

fn facet<T: std::hash::Hash + Eq>(gold: HashSet<T>, pred: HashSet<T>) -> Facet {
    Facet {
        matched: gold.intersection(&pred).count(),
        gold: gold.len(),
        predicted: pred.len(),
    }
}

type Spans = Vec<(usize, usize, Nuclearity, String)>;

fn spans(t: &DiscTree, include_root: bool) -> Spans {
    t.splits()
        .into_iter()
        .filter(|s| include_root || !(s.start == 1 && s.end == t.num_edus()))
        .map(|s| (s.start, s.end, s.label.nuclearity, s.label.relation))
        .collect()
}

/// Internal-node interval sets compared as Span, (Span, Nuclearity) and
/// (Span, Relation).
pub fn score_parseval(gold: &DiscTree, pred: &DiscTree, include_root: bool) -> Result<ParsevalScore> {
    if gold.num_edus() != pred.num_edus() {
        return Err(Error::Contract(format!(
            "EDU count mismatch: gold {}, predicted {}",
            gold.num_edus(),
            pred.num_edus()
        )));
    }
    let g = spans(gold, include_root);
    let p = spans(pred, include_root);
    Ok(ParsevalScore {
        span: facet(g.iter().map(|s| (s.0, s.1)).collect(), p.iter().map(|s| (s.0, s.1)).collect()),
        nuclearity: facet(
            g.iter().map(|s| (s.0, s.1, s.2)).collect(),
            p.iter().map(|s| (s.0, s.1, s.2)).collect(),
        ),
        relation: facet(
            g.iter().map(|s| (s.0, s.1, s.3.clone())).collect(),
            p.iter().map(|s| (s.0, s.1, s.3.clone())).collect(),
        ),
    })
}

/// A per-sentence score that can be pooled and reported.
pub trait Pooled: Default + Clone {
    fn pool(&mut self, other: &Self);
    fn metrics(&self) -> Vec<(&'static str, f64)>;
}

impl Pooled for DepScore {
    fn pool(&mut self, other: &Self) {
        self.merge(other);
    }

    fn metrics(&self) -> Vec<(&'static str, f64)> {
        vec![("uas", self.uas()), ("las", self.las())]
    }
}

impl Pooled for ParsevalScore {
    fn pool(&mut self, other: &Self) {
        self.merge(other);
    }

    fn metrics(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("span", self.span.f1()),
            ("nuclearity", self.nuclearity.f1()),
            ("relation", self.relation.f1()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    /// Inclusive length range, e.g. `10-19`.
    pub bucket: String,
    pub metric: String,
    pub value: f64,
    /// Sentences in the bucket.
    pub count: usize,
}

/// Groups `(length, score)` pairs by `length / width` and pools each group.
pub fn bucket_scores<T: Pooled>(results: &[(usize, T)], width: usize) -> Result<Vec<BucketRow>> {
    if width == 0 {
        return Err(Error::Config("bucket width must be positive".into()));
    }
    let mut groups: BTreeMap<usize, (T, usize)> = BTreeMap::new();
    for (len, s) in results {
        let e = groups.entry(len / width).or_default();
        e.0.pool(s);
        e.1 += 1;
    }
    let mut rows = Vec::new();
    for (b, (score, count)) in groups {
        let bucket = format!("{}-{}", b * width, b * width + width - 1);
        for (metric, value) in score.metrics() {
            rows.push(BucketRow {
                bucket: bucket.clone(),
                metric: metric.to_string(),
                value,
                count,
            });
        }
    }
    Ok(rows)
}

/// CSV with header `bucket,metric,value,count`; values use 4 decimals.
pub fn bucket_csv(rows: &[BucketRow]) -> String {
    let mut s = String::from("bucket,metric,value,count\n");
    for r in rows {
        s.push_str(&format!("{},{},{:.4},{}\n", r.bucket, r.metric, r.value, r.count));
    }
    s
}
