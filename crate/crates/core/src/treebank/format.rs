//! The bracketed treebank format.
//!
//! ```text
//! #labels: Cause1,Cause2,...            (exactly 27 names)
//! #split: train                         (optional; applies to following trees)
//! (Condition (Condition (W set) (W to)) (W true))
//! ```
//!
//! One tree per line. Leaves are `(W token)`; parentheses inside tokens are
//! written as `-LRB-` / `-RRB-`. Trees before any `#split:` directive belong
//! to the training split. Other lines starting with `#` are comments.

use std::fmt::Write as _;
use std::path::Path;

use super::{binarize, BranchingMode, ParseTree, Split, Token, Treebank, TreebankError, Vocabulary, LEAF_LABEL};

const LABELS_HEADER: &str = "#labels:";
const SPLIT_DIRECTIVE: &str = "#split:";

/// Reads a treebank file. With `normalize` set, flat nodes with more than two
/// children are binarized in that mode; otherwise they are rejected.
pub fn parse_treebank_file(
    path: impl AsRef<Path>,
    normalize: Option<BranchingMode>,
) -> Result<Treebank, TreebankError> {
    let text = std::fs::read_to_string(path)?;
    parse_treebank_str(&text, normalize)
}

pub fn parse_treebank_str(text: &str, normalize: Option<BranchingMode>) -> Result<Treebank, TreebankError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let vocabulary = loop {
        match lines.next() {
            None => return Err(TreebankError::MissingHeader),
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => {
                let rest = l
                    .trim()
                    .strip_prefix(LABELS_HEADER)
                    .ok_or(TreebankError::MissingHeader)?;
                break Vocabulary::new(rest.split(',').map(str::trim).filter(|s| !s.is_empty()))?;
            }
        }
    };

    let mut treebank = Treebank::new(vocabulary);
    let mut split = Split::Train;
    for (line_no, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix(SPLIT_DIRECTIVE) {
            split = rest.trim().parse()?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let tree = parse_tree_line(line, line_no, &treebank.vocabulary, normalize)?;
        treebank.entries.push(super::TreebankEntry { tree, split });
    }
    Ok(treebank)
}

/// Parses a single bracketed tree.
pub fn parse_tree(
    text: &str,
    vocabulary: &Vocabulary,
    normalize: Option<BranchingMode>,
) -> Result<ParseTree, TreebankError> {
    parse_tree_line(text.trim(), 1, vocabulary, normalize)
}

fn parse_tree_line(
    line: &str,
    line_no: usize,
    vocabulary: &Vocabulary,
    normalize: Option<BranchingMode>,
) -> Result<ParseTree, TreebankError> {
    let mut reader = Reader::new(line, line_no);
    let raw = reader.node()?;
    reader.skip_ws();
    if let Some((col, c)) = reader.peek() {
        return Err(reader.error(col, format!("unexpected {c:?} after tree")));
    }
    let mut next_index = 0;
    let tree = build(raw, line_no, vocabulary, normalize, &mut next_index)?;
    tree.validate()?;
    Ok(tree)
}

enum Raw {
    Leaf(String),
    Node { label: String, children: Vec<Raw> },
}

struct Reader<'a> {
    chars: std::iter::Peekable<std::iter::Enumerate<std::str::Chars<'a>>>,
    line: usize,
    end: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str, line: usize) -> Self {
        Self {
            chars: text.chars().enumerate().peekable(),
            line,
            end: text.chars().count(),
        }
    }

    fn error(&self, col: usize, message: String) -> TreebankError {
        TreebankError::Syntax {
            line: self.line,
            column: col + 1,
            message,
        }
    }

    fn peek(&mut self) -> Option<(usize, char)> {
        self.chars.peek().copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|(_, c)| c.is_whitespace()) {
            self.chars.next();
        }
    }

    fn expect(&mut self, want: char) -> Result<(), TreebankError> {
        self.skip_ws();
        match self.chars.next() {
            Some((_, c)) if c == want => Ok(()),
            Some((col, c)) => Err(self.error(col, format!("expected {want:?}, found {c:?}"))),
            None => Err(self.error(self.end, format!("expected {want:?}, found end of line"))),
        }
    }

    fn atom(&mut self) -> Result<String, TreebankError> {
        self.skip_ws();
        let mut out = String::new();
        while let Some((_, c)) = self.peek() {
            if c.is_whitespace() || c == '(' || c == ')' {
                break;
            }
            out.push(c);
            self.chars.next();
        }
        if out.is_empty() {
            let (col, msg) = match self.peek() {
                Some((col, c)) => (col, format!("expected a symbol, found {c:?}")),
                None => (self.end, "expected a symbol, found end of line".to_string()),
            };
            return Err(self.error(col, msg));
        }
        Ok(out)
    }

    fn node(&mut self) -> Result<Raw, TreebankError> {
        self.expect('(')?;
        let label = self.atom()?;
        if label == LEAF_LABEL {
            let token = self.atom()?;
            self.expect(')')?;
            return Ok(Raw::Leaf(unescape(&token)));
        }
        let mut children = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some((_, ')')) => {
                    self.chars.next();
                    break;
                }
                Some((_, '(')) => children.push(self.node()?),
                Some((col, c)) => return Err(self.error(col, format!("expected '(' or ')', found {c:?}"))),
                None => return Err(self.error(self.end, "unterminated node".to_string())),
            }
        }
        Ok(Raw::Node { label, children })
    }
}

fn build(
    raw: Raw,
    line: usize,
    vocabulary: &Vocabulary,
    normalize: Option<BranchingMode>,
    next_index: &mut usize,
) -> Result<ParseTree, TreebankError> {
    match raw {
        Raw::Leaf(text) => {
            let tok = Token::new(text, *next_index);
            *next_index += 1;
            Ok(ParseTree::Leaf(tok))
        }
        Raw::Node { label, children } => {
            let seg = vocabulary
                .get(&label)
                .ok_or_else(|| TreebankError::VocabularyMismatch {
                    line,
                    label: label.clone(),
                })?;
            let n = children.len();
            let binary = n == 2;
            if !binary && (n < 2 || normalize.is_none()) {
                return Err(TreebankError::NonBinaryNode {
                    line,
                    label,
                    children: n,
                });
            }
            let subtrees = children
                .into_iter()
                .map(|c| build(c, line, vocabulary, normalize, next_index))
                .collect::<Result<Vec<_>, _>>()?;
            binarize(subtrees, &seg, normalize.unwrap_or_default())
        }
    }
}

fn escape(token: &str) -> String {
    token.replace('(', "-LRB-").replace(')', "-RRB-")
}

fn unescape(token: &str) -> String {
    token.replace("-LRB-", "(").replace("-RRB-", ")")
}

/// Renders a tree in the bracketed one-line form.
pub fn serialize_tree(tree: &ParseTree) -> String {
    let mut out = String::new();
    write_tree(tree, &mut out);
    out
}

fn write_tree(tree: &ParseTree, out: &mut String) {
    match tree {
        ParseTree::Leaf(tok) => {
            let _ = write!(out, "({LEAF_LABEL} {})", escape(&tok.text));
        }
        ParseTree::Internal { label, left, right, .. } => {
            let _ = write!(out, "({} ", label.name);
            write_tree(left, out);
            out.push(' ');
            write_tree(right, out);
            out.push(')');
        }
    }
}

/// Renders a whole treebank: header, then trees grouped by split directives.
pub fn serialize_treebank(treebank: &Treebank) -> String {
    let mut out = format!("{LABELS_HEADER} {}\n", treebank.vocabulary.names().join(","));
    let mut current = None;
    for entry in &treebank.entries {
        if current != Some(entry.split) {
            let _ = writeln!(out, "{SPLIT_DIRECTIVE} {}", entry.split);
            current = Some(entry.split);
        }
        write_tree(&entry.tree, &mut out);
        out.push('\n');
    }
    out
}
