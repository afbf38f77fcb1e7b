//! Bracketed discourse trees.
//!
//! ```text
//! tree  := leaf | node
//! leaf  := "(" "EDU" <index> <quoted text> ")"
//! node  := "(" <NUC> "-" <Relation> tree tree ")"      NUC in NS | SN | NN
//! ```
//!
//! Quoted text uses `\"` and `\\` escapes. Leaves must be numbered `1..m`
//! from left to right. A file holds any number of trees separated by
//! whitespace; the writer emits one tree per line.

use std::path::Path;

use crate::error::{Error, Result};
use crate::rst::{DiscNode, DiscTree, RstLabel};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Atom(String),
    Quoted(String),
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer {
            chars: text.chars().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    /// Next token with the position of its first character.
    fn next(&mut self) -> Result<Option<(Tok, usize, usize)>> {
        while self.chars.peek().is_some_and(|c| c.is_whitespace()) {
            self.bump();
        }
        let (line, col) = (self.line, self.col);
        let Some(c) = self.bump() else {
            return Ok(None);
        };
        let tok = match c {
            '(' => Tok::Open,
            ')' => Tok::Close,
            '"' => {
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return Err(Error::parse(line, col, "unterminated string")),
                        Some('"') => break,
                        Some('\\') => match self.bump() {
                            Some(e @ ('"' | '\\')) => s.push(e),
                            _ => return Err(Error::parse(self.line, self.col, "bad escape in string")),
                        },
                        Some(ch) => s.push(ch),
                    }
                }
                Tok::Quoted(s)
            }
            _ => {
                let mut s = String::from(c);
                while let Some(&ch) = self.chars.peek() {
                    if ch.is_whitespace() || ch == '(' || ch == ')' || ch == '"' {
                        break;
                    }
                    s.push(ch);
                    self.bump();
                }
                Tok::Atom(s)
            }
        };
        Ok(Some((tok, line, col)))
    }
}

struct Parser<'a> {
    lex: Lexer<'a>,
    peeked: Option<(Tok, usize, usize)>,
}

impl<'a> Parser<'a> {
    fn peek(&mut self) -> Result<Option<&(Tok, usize, usize)>> {
        if self.peeked.is_none() {
            self.peeked = self.lex.next()?;
        }
        Ok(self.peeked.as_ref())
    }

    fn take(&mut self) -> Result<(Tok, usize, usize)> {
        self.peek()?;
        self.peeked
            .take()
            .ok_or_else(|| Error::parse(self.lex.line, self.lex.col, "unexpected end of input (unbalanced parentheses)"))
    }

    fn expect_open(&mut self) -> Result<(usize, usize)> {
        match self.take()? {
            (Tok::Open, l, c) => Ok((l, c)),
            (t, l, c) => Err(Error::parse(l, c, format!("expected `(`, found {t:?}"))),
        }
    }

    fn expect_close(&mut self) -> Result<()> {
        match self.take()? {
            (Tok::Close, _, _) => Ok(()),
            (t, l, c) => Err(Error::parse(l, c, format!("expected `)`, found {t:?}"))),
        }
    }

    fn node(&mut self, edus: &mut Vec<String>) -> Result<DiscNode> {
        self.expect_open()?;
        let (head, l, c) = self.take()?;
        let Tok::Atom(head) = head else {
            return Err(Error::parse(l, c, "expected `EDU` or a NUC-Relation label"));
        };
        if head == "EDU" {
            let (idx, il, ic) = self.take()?;
            let index = match idx {
                Tok::Atom(a) => a
                    .parse::<usize>()
                    .map_err(|_| Error::parse(il, ic, format!("bad EDU index `{a}`")))?,
                _ => return Err(Error::parse(il, ic, "expected EDU index")),
            };
            if index != edus.len() + 1 {
                return Err(Error::parse(
                    il,
                    ic,
                    format!("EDU index {index} where {} was expected", edus.len() + 1),
                ));
            }
            let text = match self.take()? {
                (Tok::Quoted(s), _, _) => s,
                (_, tl, tc) => return Err(Error::parse(tl, tc, "expected quoted EDU text")),
            };
            self.expect_close()?;
            edus.push(text);
            return Ok(DiscNode::Leaf(index));
        }
        let label: RstLabel = head.parse().map_err(|e: Error| Error::parse(l, c, e.to_string()))?;
        let left = self.node(edus)?;
        let right = self.node(edus)?;
        self.expect_close()?;
        Ok(DiscNode::Internal {
            label,
            left: Box::new(left),
            right: Box::new(right),
        })
    }
}

pub fn parse_rst_bracket(text: &str) -> Result<Vec<DiscTree>> {
    let mut p = Parser {
        lex: Lexer::new(text),
        peeked: None,
    };
    let mut out = Vec::new();
    while p.peek()?.is_some() {
        let mut edus = Vec::new();
        let root = p.node(&mut edus)?;
        out.push(DiscTree { root, edus });
    }
    Ok(out)
}

pub fn read_rst_bracket(path: &Path) -> Result<Vec<DiscTree>> {
    parse_rst_bracket(&std::fs::read_to_string(path)?)
}

fn quote(s: &str) -> String {
    let mut q = String::with_capacity(s.len() + 2);
    q.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            q.push('\\');
        }
        q.push(c);
    }
    q.push('"');
    q
}

fn render(node: &DiscNode, edus: &[String], out: &mut String) {
    match node {
        DiscNode::Leaf(i) => {
            out.push_str(&format!("(EDU {i} {})", quote(&edus[i - 1])));
        }
        DiscNode::Internal { label, left, right } => {
            out.push('(');
            out.push_str(&label.to_string());
            out.push(' ');
            render(left, edus, out);
            out.push(' ');
            render(right, edus, out);
            out.push(')');
        }
    }
}

pub fn format_rst_tree(tree: &DiscTree) -> String {
    let mut s = String::new();
    render(&tree.root, &tree.edus, &mut s);
    s
}

pub fn format_rst_bracket(trees: &[DiscTree]) -> String {
    trees.iter().map(|t| format_rst_tree(t) + "\n").collect()
}

pub fn write_rst_bracket(path: &Path, trees: &[DiscTree]) -> Result<()> {
    std::fs::write(path, format_rst_bracket(trees))?;
    Ok(())
}

/// Pre-segmented parse input: one sentence per line, EDUs separated by `|||`.
pub fn parse_edu_lines(text: &str) -> Result<Vec<Vec<String>>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let edus: Vec<String> = line
            .split("|||")
            .map(|e| e.split_whitespace().collect::<Vec<_>>().join(" "))
            .collect();
        if let Some(p) = edus.iter().position(String::is_empty) {
            return Err(Error::parse(i + 1, 1, format!("EDU {} is empty", p + 1)));
        }
        out.push(edus);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rst::Nuclearity;

    #[test]
    fn two_leaves() {
        let t = parse_rst_bracket(r#"(NS-Elaboration (EDU 1 "a") (EDU 2 "b"))"#).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].num_edus(), 2);
        let s = t[0].splits();
        assert_eq!(s[0].label.nuclearity, Nuclearity::NS);
        assert_eq!(s[0].label.relation, "Elaboration");
    }

    #[test]
    fn satellite_nucleus_pattern() {
        let src = r#"(NS-Attribution (EDU 1 "Mr. Smith said")
            (SN-Condition (EDU 2 "if rates rise") (EDU 3 "sales will fall")))"#;
        let t = &parse_rst_bracket(src).unwrap()[0];
        let s = t.splits();
        assert_eq!(t.num_edus(), 3);
        assert_eq!((s[0].start, s[0].split, s[0].end), (1, 1, 3));
        assert_eq!(s[0].label.nuclearity, Nuclearity::NS);
        assert_eq!((s[1].start, s[1].split, s[1].end), (2, 2, 3));
        assert_eq!(s[1].label.nuclearity, Nuclearity::SN);
        assert_eq!(s[1].label.relation, "Condition");
        let normalized = src.split_whitespace().collect::<Vec<_>>().join(" ");
        assert_eq!(
            format_rst_tree(t).split_whitespace().collect::<Vec<_>>().join(" "),
            normalized
        );
    }

    #[test]
    fn escapes_round_trip() {
        let tree = DiscTree::leaf(r#"say "hi" \ bye"#);
        let text = format_rst_bracket(std::slice::from_ref(&tree));
        assert_eq!(parse_rst_bracket(&text).unwrap(), vec![tree]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            parse_rst_bracket(r#"(NS-Joint (EDU 1 "a") (EDU 2 "b")"#),
            Err(Error::Parse { .. })
        ));
        match parse_rst_bracket("(XY-Joint (EDU 1 \"a\")\n (EDU 2 \"b\"))") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (1, 2)),
            other => panic!("{other:?}"),
        }
        assert!(parse_rst_bracket(r#"(NN-Joint (EDU 2 "a") (EDU 1 "b"))"#).is_err());
        assert!(parse_rst_bracket(r#"(NN-Joint (EDU 1 "a"))"#).is_err());
        assert!(parse_rst_bracket("").unwrap().is_empty());
    }

    #[test]
    fn edu_lines() {
        let s = parse_edu_lines("a b ||| c\n\nd\n").unwrap();
        assert_eq!(s, vec![vec!["a b".to_string(), "c".into()], vec!["d".into()]]);
        assert!(parse_edu_lines("a ||| ").is_err());
    }
}
