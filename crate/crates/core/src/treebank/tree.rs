use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::TreebankError;

/// Number of segment classes a merge node is classified into.
pub const LABEL_COUNT: usize = 27;

/// Pseudo-label carried by leaves in the bracketed format.
pub const LEAF_LABEL: &str = "W";

const DEFAULT_LABELS: &str = include_str!("../../data/default_labels.txt");

/// A single token of a sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub index: usize,
}

impl Token {
    pub fn new(text: impl Into<String>, index: usize) -> Self {
        Self {
            text: text.into(),
            index,
        }
    }

    pub fn span(&self) -> Span {
        Span::new(self.index, self.index + 1)
    }
}

/// Half-open token-index interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start < end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

/// A segment class: its name in the vocabulary and its dense id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentLabel {
    pub id: usize,
    pub name: String,
}

/// The ordered set of exactly [`LABEL_COUNT`] segment labels.
///
/// Label ids are positions in the list. The list is data: the default
/// vocabulary ships in `data/default_labels.txt` and any other 27-name list
/// can be used in its place.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self, TreebankError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() != LABEL_COUNT {
            return Err(TreebankError::VocabularySize {
                expected: LABEL_COUNT,
                found: names.len(),
            });
        }
        let mut index = HashMap::with_capacity(names.len());
        for (id, name) in names.iter().enumerate() {
            if name.is_empty()
                || name == LEAF_LABEL
                || name.chars().any(|c| c.is_whitespace() || matches!(c, '(' | ')' | ','))
            {
                return Err(TreebankError::InvalidLabelName(name.clone()));
            }
            if index.insert(name.clone(), id).is_some() {
                return Err(TreebankError::DuplicateLabel(name.clone()));
            }
        }
        Ok(Self { names, index })
    }

    /// The built-in vocabulary of causal segment labels.
    pub fn default_causal() -> Self {
        Self::new(DEFAULT_LABELS.lines().map(str::trim).filter(|l| !l.is_empty())).expect("bundled label list is valid")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<SegmentLabel> {
        self.index.get(name).map(|&id| SegmentLabel {
            id,
            name: self.names[id].clone(),
        })
    }

    /// Panics if `id >= LABEL_COUNT`.
    pub fn label(&self, id: usize) -> SegmentLabel {
        SegmentLabel {
            id,
            name: self.names[id].clone(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn contains(&self, label: &SegmentLabel) -> bool {
        self.names.get(label.id).is_some_and(|n| *n == label.name)
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::default_causal()
    }
}

/// Nesting order used when a flat segment is turned into binary structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchingMode {
    /// `(((a b) c) d)`
    #[default]
    Left,
    /// `(a (b (c d)))`
    Right,
}

impl BranchingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BranchingMode::Left => "left",
            BranchingMode::Right => "right",
        }
    }
}

impl fmt::Display for BranchingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BranchingMode {
    type Err = TreebankError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "left" => Ok(BranchingMode::Left),
            "right" => Ok(BranchingMode::Right),
            other => Err(TreebankError::UnknownBranching(other.to_string())),
        }
    }
}

/// A labeled binary tree over a token sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum ParseTree {
    Leaf(Token),
    Internal {
        label: SegmentLabel,
        span: Span,
        left: Box<ParseTree>,
        right: Box<ParseTree>,
        /// Log-probability accumulated at inference, if any.
        score: Option<f64>,
    },
}

impl ParseTree {
    pub fn leaf(text: impl Into<String>, index: usize) -> Self {
        ParseTree::Leaf(Token::new(text, index))
    }

    /// Joins two adjacent subtrees under `label`.
    pub fn join(label: SegmentLabel, left: ParseTree, right: ParseTree) -> Result<Self, TreebankError> {
        let (l, r) = (left.span(), right.span());
        if l.end != r.start {
            return Err(TreebankError::NonAdjacent { left: l, right: r });
        }
        Ok(ParseTree::Internal {
            label,
            span: Span::new(l.start, r.end),
            left: Box::new(left),
            right: Box::new(right),
            score: None,
        })
    }

    pub fn span(&self) -> Span {
        match self {
            ParseTree::Leaf(t) => t.span(),
            ParseTree::Internal { span, .. } => *span,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, ParseTree::Leaf(_))
    }

    pub fn label(&self) -> Option<&SegmentLabel> {
        match self {
            ParseTree::Leaf(_) => None,
            ParseTree::Internal { label, .. } => Some(label),
        }
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<&Token> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Token>) {
        match self {
            ParseTree::Leaf(t) => out.push(t),
            ParseTree::Internal { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    pub fn tokens(&self) -> Vec<Token> {
        self.leaves().into_iter().cloned().collect()
    }

    pub fn leaf_count(&self) -> usize {
        self.span().len()
    }

    pub fn internal_count(&self) -> usize {
        match self {
            ParseTree::Leaf(_) => 0,
            ParseTree::Internal { left, right, .. } => 1 + left.internal_count() + right.internal_count(),
        }
    }

    /// Internal nodes in post-order (children before parents).
    pub fn internal_nodes(&self) -> Vec<&ParseTree> {
        let mut out = Vec::new();
        fn walk<'a>(t: &'a ParseTree, out: &mut Vec<&'a ParseTree>) {
            if let ParseTree::Internal { left, right, .. } = t {
                walk(left, out);
                walk(right, out);
                out.push(t);
            }
        }
        walk(self, &mut out);
        out
    }

    /// Equality of shape, labels and tokens; inference scores are ignored.
    pub fn structurally_eq(&self, other: &ParseTree) -> bool {
        match (self, other) {
            (ParseTree::Leaf(a), ParseTree::Leaf(b)) => a == b,
            (
                ParseTree::Internal {
                    label: la,
                    span: sa,
                    left: l1,
                    right: r1,
                    ..
                },
                ParseTree::Internal {
                    label: lb,
                    span: sb,
                    left: l2,
                    right: r2,
                    ..
                },
            ) => la == lb && sa == sb && l1.structurally_eq(l2) && r1.structurally_eq(r2),
            _ => false,
        }
    }

    /// Equality of bracketing only (labels and tokens ignored).
    pub fn same_shape(&self, other: &ParseTree) -> bool {
        match (self, other) {
            (ParseTree::Leaf(a), ParseTree::Leaf(b)) => a.index == b.index,
            (
                ParseTree::Internal {
                    span: sa,
                    left: l1,
                    right: r1,
                    ..
                },
                ParseTree::Internal {
                    span: sb,
                    left: l2,
                    right: r2,
                    ..
                },
            ) => sa == sb && l1.same_shape(l2) && r1.same_shape(r2),
            _ => false,
        }
    }

    /// Checks the structural invariants of a whole-sentence tree: leaves
    /// indexed `0..n` in order, non-empty whitespace-free tokens, adjacent
    /// children and spans that cover them.
    pub fn validate(&self) -> Result<(), TreebankError> {
        if self.span().start != 0 {
            return Err(TreebankError::InvalidTree(format!(
                "tree span {} does not start at 0",
                self.span()
            )));
        }
        self.validate_node()?;
        for (i, tok) in self.leaves().iter().enumerate() {
            if tok.index != i {
                return Err(TreebankError::InvalidTree(format!("leaf {i} has index {}", tok.index)));
            }
            if tok.text.is_empty() || tok.text.chars().any(char::is_whitespace) {
                return Err(TreebankError::InvalidTree(format!(
                    "leaf {i} has invalid text {:?}",
                    tok.text
                )));
            }
        }
        Ok(())
    }

    fn validate_node(&self) -> Result<(), TreebankError> {
        if let ParseTree::Internal { span, left, right, .. } = self {
            let (l, r) = (left.span(), right.span());
            if l.end != r.start || span.start != l.start || span.end != r.end {
                return Err(TreebankError::InvalidTree(format!(
                    "node {span} does not cover children {l} {r}"
                )));
            }
            left.validate_node()?;
            right.validate_node()?;
        }
        Ok(())
    }
}

/// Joins a flat segment into a binary tree, every introduced node labeled
/// `label`. Left mode nests `(((a b) c) d)`, right mode `(a (b (c d)))`.
pub fn binarize(
    segment: Vec<ParseTree>,
    label: &SegmentLabel,
    mode: BranchingMode,
) -> Result<ParseTree, TreebankError> {
    if segment.is_empty() {
        return Err(TreebankError::EmptySegment);
    }
    let mut items = segment.into_iter();
    match mode {
        BranchingMode::Left => {
            let first = items.next().expect("non-empty");
            items.try_fold(first, |acc, next| ParseTree::join(label.clone(), acc, next))
        }
        BranchingMode::Right => {
            let last = items.next_back().expect("non-empty");
            items.try_rfold(last, |acc, prev| ParseTree::join(label.clone(), prev, acc))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaves(words: &[&str]) -> Vec<ParseTree> {
        words.iter().enumerate().map(|(i, w)| ParseTree::leaf(*w, i)).collect()
    }

    fn shape(t: &ParseTree) -> String {
        match t {
            ParseTree::Leaf(tok) => tok.text.clone(),
            ParseTree::Internal { left, right, .. } => format!("({} {})", shape(left), shape(right)),
        }
    }

    #[test]
    fn default_vocabulary_has_27_unique_labels() {
        let v = Vocabulary::default_causal();
        assert_eq!(v.len(), LABEL_COUNT);
        for id in 0..LABEL_COUNT {
            let l = v.label(id);
            assert_eq!(v.get(&l.name).unwrap().id, id);
        }
        assert!(v.get("Cause1").is_some());
        assert!(v.get("Condition").is_some());
    }

    #[test]
    fn vocabulary_size_is_enforced() {
        let err = Vocabulary::new(["A", "B"]).unwrap_err();
        assert!(matches!(err, TreebankError::VocabularySize { found: 2, .. }));
        let mut names: Vec<String> = (0..27).map(|i| format!("L{i}")).collect();
        names[3] = "L0".into();
        assert!(matches!(
            Vocabulary::new(names).unwrap_err(),
            TreebankError::DuplicateLabel(_)
        ));
        let mut names: Vec<String> = (0..27).map(|i| format!("L{i}")).collect();
        names[0] = "W".into();
        assert!(Vocabulary::new(names).is_err());
    }

    #[test]
    fn binarize_set_to_true() {
        let v = Vocabulary::default_causal();
        let cond = v.get("Condition").unwrap();
        let left = binarize(leaves(&["set", "to", "true"]), &cond, BranchingMode::Left).unwrap();
        assert_eq!(shape(&left), "((set to) true)");
        let right = binarize(leaves(&["set", "to", "true"]), &cond, BranchingMode::Right).unwrap();
        assert_eq!(shape(&right), "(set (to true))");
        assert_eq!(left.internal_count(), 2);
        assert!(left.internal_nodes().iter().all(|n| n.label() == Some(&cond)));
    }

    #[test]
    fn binarize_single_and_empty() {
        let v = Vocabulary::default_causal();
        let l = v.label(0);
        for mode in [BranchingMode::Left, BranchingMode::Right] {
            let t = binarize(leaves(&["a"]), &l, mode).unwrap();
            assert_eq!(t, ParseTree::leaf("a", 0));
            assert!(matches!(binarize(vec![], &l, mode), Err(TreebankError::EmptySegment)));
        }
    }

    #[test]
    fn right_branching_spans() {
        let v = Vocabulary::default_causal();
        let t = binarize(leaves(&["a", "b", "c", "d"]), &v.label(1), BranchingMode::Right).unwrap();
        let spans: Vec<Span> = t.internal_nodes().iter().map(|n| n.span()).collect();
        assert_eq!(spans, vec![Span::new(2, 4), Span::new(1, 4), Span::new(0, 4)]);
    }

    #[test]
    fn join_rejects_gaps() {
        let v = Vocabulary::default_causal();
        let err = ParseTree::join(v.label(0), ParseTree::leaf("a", 0), ParseTree::leaf("c", 2));
        assert!(matches!(err, Err(TreebankError::NonAdjacent { .. })));
    }

    #[test]
    fn validate_catches_misindexed_leaves() {
        let v = Vocabulary::default_causal();
        let t = ParseTree::join(v.label(0), ParseTree::leaf("a", 1), ParseTree::leaf("b", 2)).unwrap();
        assert!(t.validate().is_err());
        let ok = binarize(leaves(&["a", "b"]), &v.label(0), BranchingMode::Left).unwrap();
        ok.validate().unwrap();
    }

    #[test]
    fn branching_mode_parses() {
        assert_eq!("Left".parse::<BranchingMode>().unwrap(), BranchingMode::Left);
        assert_eq!("right".parse::<BranchingMode>().unwrap(), BranchingMode::Right);
        assert!("up".parse::<BranchingMode>().is_err());
    }
}
