//! CoNLL-U reading and writing for the ten standard columns.

use std::fmt::Write as _;
use std::path::Path;

use crate::dep::{DepTree, Sentence, Token};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConlluOptions {
    /// Accept `_` in HEAD/DEPREL; such sentences get no tree.
    pub allow_missing_heads: bool,
    pub allow_multi_root: bool,
}

/// A sentence with its tree, if the file carried one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConlluSentence {
    pub sentence: Sentence,
    pub tree: Option<DepTree>,
    /// 1-based line of the first token row.
    pub line: usize,
}

struct Block {
    comments: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

pub fn read_conllu(path: &Path) -> Result<Vec<(Sentence, DepTree)>> {
    parse_conllu(&std::fs::read_to_string(path)?)
}

/// Strict reader: every sentence must carry a valid tree.
pub fn parse_conllu(text: &str) -> Result<Vec<(Sentence, DepTree)>> {
    parse_conllu_with(text, ConlluOptions::default())?
        .into_iter()
        .map(|s| {
            let line = s.line;
            s.tree
                .map(|t| (s.sentence, t))
                .ok_or_else(|| Error::parse(line, 7, "missing HEAD"))
        })
        .collect()
}

pub fn parse_conllu_with(text: &str, opts: ConlluOptions) -> Result<Vec<ConlluSentence>> {
    let mut out = Vec::new();
    let mut block = Block {
        comments: Vec::new(),
        rows: Vec::new(),
    };
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            if !block.rows.is_empty() || !block.comments.is_empty() {
                out.push(finish(std::mem::replace(&mut block, Block { comments: Vec::new(), rows: Vec::new() }), lineno, opts)?);
            }
            continue;
        }
        if line.starts_with('#') {
            if !block.rows.is_empty() {
                return Err(Error::parse(lineno, 1, "comment line inside a token block"));
            }
            block.comments.push(line.to_string());
            continue;
        }
        let cols: Vec<String> = line.split('\t').map(String::from).collect();
        if cols.len() != 10 {
            return Err(Error::parse(
                lineno,
                1,
                format!("expected 10 tab-separated columns, found {}", cols.len()),
            ));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            log::warn!("line {lineno}: skipping multiword token or empty node `{}`", cols[0]);
            continue;
        }
        block.rows.push((lineno, cols));
    }
    if !block.rows.is_empty() || !block.comments.is_empty() {
        out.push(finish(block, text.lines().count() + 1, opts)?);
    }
    Ok(out)
}

fn finish(block: Block, end_line: usize, opts: ConlluOptions) -> Result<ConlluSentence> {
    if block.rows.is_empty() {
        return Err(Error::parse(end_line, 1, "sentence block without tokens"));
    }
    let n = block.rows.len();
    let first_line = block.rows[0].0;
    let mut tokens = Vec::with_capacity(n);
    let mut heads = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut missing = false;
    for (pos, (lineno, cols)) in block.rows.into_iter().enumerate() {
        let id: usize = cols[0]
            .parse()
            .map_err(|_| Error::parse(lineno, 1, format!("non-numeric ID `{}`", cols[0])))?;
        if id != pos + 1 {
            return Err(Error::parse(lineno, 1, format!("expected ID {}, found {id}", pos + 1)));
        }
        if cols[1].is_empty() {
            return Err(Error::parse(lineno, 2, "empty FORM"));
        }
        if cols[6] == "_" {
            if !opts.allow_missing_heads {
                return Err(Error::parse(lineno, 7, "missing HEAD"));
            }
            missing = true;
        } else {
            let h: usize = cols[6]
                .parse()
                .map_err(|_| Error::parse(lineno, 7, format!("non-numeric HEAD `{}`", cols[6])))?;
            if h > n {
                return Err(Error::parse(lineno, 7, format!("HEAD {h} beyond sentence length {n}")));
            }
            heads.push(h);
        }
        let mut it = cols.into_iter();
        let _id = it.next();
        let form = it.next().unwrap_or_default();
        let lemma = it.next().unwrap_or_default();
        let upos = it.next().unwrap_or_default();
        let xpos = it.next().unwrap_or_default();
        let feats = it.next().unwrap_or_default();
        let _head = it.next();
        labels.push(it.next().unwrap_or_default());
        let deps = it.next().unwrap_or_default();
        let misc = it.next().unwrap_or_default();
        tokens.push(Token {
            form,
            lemma,
            upos,
            xpos,
            feats,
            deps,
            misc,
        });
    }
    let tree = if missing {
        None
    } else {
        let t = DepTree { heads, labels };
        t.validate(opts.allow_multi_root)
            .map_err(|e| Error::parse(first_line, 7, e.to_string()))?;
        Some(t)
    };
    Ok(ConlluSentence {
        sentence: Sentence {
            comments: block.comments,
            tokens,
        },
        tree,
        line: first_line,
    })
}

/// Renders sentences with their trees; a missing tree writes `_` heads.
pub fn format_conllu<'a, I>(items: I) -> String
where
    I: IntoIterator<Item = (&'a Sentence, Option<&'a DepTree>)>,
{
    let mut out = String::new();
    for (sent, tree) in items {
        for c in &sent.comments {
            out.push_str(c);
            out.push('\n');
        }
        for (i, t) in sent.tokens.iter().enumerate() {
            let (head, label) = match tree {
                Some(tr) => (tr.heads[i].to_string(), tr.labels[i].as_str()),
                None => ("_".to_string(), "_"),
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                i + 1,
                t.form,
                t.lemma,
                t.upos,
                t.xpos,
                t.feats,
                head,
                label,
                t.deps,
                t.misc
            );
        }
        out.push('\n');
    }
    out
}

pub fn write_conllu(path: &Path, items: &[(Sentence, DepTree)]) -> Result<()> {
    std::fs::write(path, format_conllu(items.iter().map(|(s, t)| (s, Some(t)))))?;
    Ok(())
}
