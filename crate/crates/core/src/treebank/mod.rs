//! Corpus data model: tokens, labeled binary trees, the bracketed treebank
//! format and a synthetic corpus of causal requirement sentences.

mod format;
mod synthetic;
mod tokenize;
mod tree;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use format::{parse_tree, parse_treebank_file, parse_treebank_str, serialize_tree, serialize_treebank};
pub use synthetic::generate_synthetic_corpus;
pub use tokenize::tokenize;
pub use tree::{binarize, BranchingMode, ParseTree, SegmentLabel, Span, Token, Vocabulary, LABEL_COUNT, LEAF_LABEL};

#[derive(Debug, Error)]
pub enum TreebankError {
    #[error("sentence contains no tokens")]
    EmptySentence,
    #[error("cannot binarize an empty segment")]
    EmptySegment,
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: label {label:?} is not declared in the vocabulary")]
    VocabularyMismatch { line: usize, label: String },
    #[error("line {line}: node {label:?} has {children} children, expected 2")]
    NonBinaryNode {
        line: usize,
        label: String,
        children: usize,
    },
    #[error("vocabulary must have {expected} labels, found {found}")]
    VocabularySize { expected: usize, found: usize },
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("invalid label name {0:?}")]
    InvalidLabelName(String),
    #[error("missing `#labels:` header line")]
    MissingHeader,
    #[error("subtrees {left} and {right} are not adjacent")]
    NonAdjacent { left: Span, right: Span },
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("unknown branching mode {0:?}")]
    UnknownBranching(String),
    #[error("unknown split {0:?}")]
    UnknownSplit(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Corpus partition a tree belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Split {
    #[default]
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = TreebankError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "dev" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(TreebankError::UnknownSplit(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreebankEntry {
    pub tree: ParseTree,
    pub split: Split,
}

/// An ordered collection of gold trees sharing one label vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Treebank {
    pub vocabulary: Vocabulary,
    pub entries: Vec<TreebankEntry>,
}

impl Treebank {
    pub fn new(vocabulary: Vocabulary) -> Self {
        Self {
            vocabulary,
            entries: Vec::new(),
        }
    }

    /// Validates the tree against the vocabulary before adding it.
    pub fn push(&mut self, tree: ParseTree, split: Split) -> Result<(), TreebankError> {
        tree.validate()?;
        for node in tree.internal_nodes() {
            let label = node.label().expect("internal node");
            if !self.vocabulary.contains(label) {
                return Err(TreebankError::VocabularyMismatch {
                    line: 0,
                    label: label.name.clone(),
                });
            }
        }
        self.entries.push(TreebankEntry { tree, split });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn trees(&self) -> impl Iterator<Item = &ParseTree> {
        self.entries.iter().map(|e| &e.tree)
    }

    pub fn split(&self, split: Split) -> Vec<ParseTree> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.tree.clone())
            .collect()
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }
}
