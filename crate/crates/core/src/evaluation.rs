//! Corpus-level scoring of predicted trees against gold trees.
//!
//! Bracket metrics are micro-averaged: matched, gold and predicted bracket
//! counts are summed over the corpus before dividing.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::calibration::CalibrationParams;
use crate::inference::{parse, InferenceError, ParseConfig};
use crate::rnn::{AnnotatedTree, ModelError, ModelParams};
use crate::treebank::{serialize_tree, ParseTree, Span};

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("no trees to evaluate")]
    EmptySplit,
    #[error("gold tree has tokens {gold:?} but predicted tree has {predicted:?}")]
    TokenMismatch { gold: Vec<String>, predicted: Vec<String> },
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Multiset of `(label name, span)` over the internal nodes of a tree.
pub fn labeled_brackets(tree: &ParseTree) -> HashMap<(String, Span), usize> {
    let mut out = HashMap::new();
    for node in tree.internal_nodes() {
        if let Some(label) = node.label() {
            *out.entry((label.name.clone(), node.span())).or_insert(0) += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct BracketCounts {
    pub matched: usize,
    pub gold: usize,
    pub predicted: usize,
}

impl BracketCounts {
    pub fn precision(&self) -> f64 {
        ratio(self.matched, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.matched, self.gold)
    }

    pub fn f1(&self) -> f64 {
        harmonic_mean(self.precision(), self.recall())
    }

    fn add(&mut self, other: BracketCounts) {
        self.matched += other.matched;
        self.gold += other.gold;
        self.predicted += other.predicted;
    }
}

/// Two empty bracket sets agree perfectly.
fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn leaf_texts(tree: &ParseTree) -> Vec<String> {
    tree.leaves().into_iter().map(|t| t.text.clone()).collect()
}

pub fn bracket_counts(gold: &ParseTree, predicted: &ParseTree) -> Result<BracketCounts, EvaluationError> {
    let (g, p) = (leaf_texts(gold), leaf_texts(predicted));
    if g != p {
        return Err(EvaluationError::TokenMismatch { gold: g, predicted: p });
    }
    let gold_set = labeled_brackets(gold);
    let pred_set = labeled_brackets(predicted);
    let matched = gold_set
        .iter()
        .map(|(k, &n)| n.min(pred_set.get(k).copied().unwrap_or(0)))
        .sum();
    Ok(BracketCounts {
        matched,
        gold: gold_set.values().sum(),
        predicted: pred_set.values().sum(),
    })
}

/// Labeled-bracket `(precision, recall, f1)` of one predicted tree.
pub fn bracket_f1(gold: &ParseTree, predicted: &ParseTree) -> Result<(f64, f64, f64), EvaluationError> {
    let c = bracket_counts(gold, predicted)?;
    Ok((c.precision(), c.recall(), c.f1()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SentenceRecord {
    pub sentence: String,
    pub gold: String,
    pub predicted: String,
    /// Same structure and labels.
    pub exact_match: bool,
    /// Same structure, labels ignored.
    pub structure_match: bool,
    pub brackets: BracketCounts,
    pub f1: f64,
    pub cum_logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub averaging: &'static str,
    pub size: usize,
    pub labeled_precision: f64,
    pub labeled_recall: f64,
    pub labeled_f1: f64,
    pub exact_match: f64,
    pub structure_match: f64,
    /// Fraction of gold merge nodes labeled correctly on the gold structure.
    pub node_accuracy: f64,
    pub records: Vec<SentenceRecord>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }

    /// Summary table followed by one line per sentence.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} sentences, micro-averaged", self.size);
        let rows = [
            ("labeled precision", self.labeled_precision),
            ("labeled recall", self.labeled_recall),
            ("labeled F1", self.labeled_f1),
            ("exact match", self.exact_match),
            ("structure match", self.structure_match),
            ("node accuracy", self.node_accuracy),
        ];
        for (name, value) in rows {
            let _ = writeln!(out, "{name:<18} {value:>7.4}");
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:>5}  {:<5}  {:>6}  sentence", "#", "exact", "F1");
        for (i, r) in self.records.iter().enumerate() {
            let flag = if r.exact_match { "yes" } else { "no" };
            let _ = writeln!(out, "{i:>5}  {flag:<5}  {:>6.4}  {}", r.f1, r.sentence);
        }
        out
    }
}

/// Parses every gold tree's sentence and scores the result.
pub fn evaluate_corpus(
    params: &ModelParams,
    calibration: &CalibrationParams,
    trees: &[ParseTree],
    config: &ParseConfig,
) -> Result<EvalReport, EvaluationError> {
    if trees.is_empty() {
        return Err(EvaluationError::EmptySplit);
    }
    let mut totals = BracketCounts::default();
    let mut exact = 0usize;
    let mut shape = 0usize;
    let mut nodes_correct = 0usize;
    let mut nodes_total = 0usize;
    let mut records = Vec::with_capacity(trees.len());

    for gold in trees {
        let tokens = gold.tokens();
        let result = parse(params, calibration, &tokens, config)?;
        let predicted = result.root.to_parse_tree();
        let counts = bracket_counts(gold, &predicted)?;
        totals.add(counts);
        let exact_match = predicted.structurally_eq(gold);
        let structure_match = predicted.same_shape(gold);
        exact += exact_match as usize;
        shape += structure_match as usize;

        for node in params.forward_gold_tree(gold)?.internal_nodes() {
            if let AnnotatedTree::Internal { label, scores, .. } = node {
                nodes_total += 1;
                nodes_correct += (scores.predicted.id == label.id) as usize;
            }
        }

        records.push(SentenceRecord {
            sentence: tokens.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" "),
            gold: serialize_tree(gold),
            predicted: serialize_tree(&predicted),
            exact_match,
            structure_match,
            brackets: counts,
            f1: counts.f1(),
            cum_logprob: result.cum_logprob,
        });
    }

    let n = trees.len() as f64;
    Ok(EvalReport {
        averaging: "micro",
        size: trees.len(),
        labeled_precision: totals.precision(),
        labeled_recall: totals.recall(),
        labeled_f1: totals.f1(),
        exact_match: exact as f64 / n,
        structure_match: shape as f64 / n,
        node_accuracy: ratio(nodes_correct, nodes_total),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::{parse_tree, BranchingMode, Vocabulary};

    fn tree(s: &str) -> ParseTree {
        parse_tree(s, &Vocabulary::default_causal(), None).unwrap()
    }

    #[test]
    fn leaf_has_no_brackets() {
        assert!(labeled_brackets(&tree("(W x)")).is_empty());
    }

    #[test]
    fn left_branching_condition_brackets() {
        let b = labeled_brackets(&tree("(Condition (Condition (W a) (W b)) (W c))"));
        assert_eq!(b.len(), 2);
        assert_eq!(b[&("Condition".to_string(), Span::new(0, 2))], 1);
        assert_eq!(b[&("Condition".to_string(), Span::new(0, 3))], 1);
    }

    #[test]
    fn identical_and_disjoint() {
        let g = tree("(Sentence (Variable (W a) (W b)) (W c))");
        assert_eq!(bracket_f1(&g, &g).unwrap(), (1.0, 1.0, 1.0));
        let p = tree("(Negation (W a) (Keyword (W b) (W c)))");
        assert_eq!(bracket_f1(&g, &p).unwrap(), (0.0, 0.0, 0.0));
    }

    #[test]
    fn half_overlap_on_five_tokens() {
        // Gold: ((a b) c) (d e)    Predicted: ((a b) (c d)) e
        let g = tree("(Sentence (Cause1 (Variable (W a) (W b)) (W c)) (Effect1 (W d) (W e)))");
        let p = tree("(Sentence (Cause1 (Variable (W a) (W b)) (Condition (W c) (W d))) (W e))");
        assert_eq!(bracket_f1(&g, &p).unwrap(), (0.5, 0.5, 0.5));
    }

    #[test]
    fn swapping_trees_swaps_precision_and_recall() {
        let g = tree("(Sentence (Variable (W a) (W b)) (W c))");
        let p = tree("(Sentence (W a) (Condition (W b) (W c)))");
        let (p1, r1, f1) = bracket_f1(&g, &p).unwrap();
        let (p2, r2, f2) = bracket_f1(&p, &g).unwrap();
        assert_eq!((p1, r1, f1), (r2, p2, f2));
    }

    #[test]
    fn token_mismatch() {
        let g = tree("(Sentence (W a) (W b))");
        let p = tree("(Sentence (W a) (W c))");
        assert!(matches!(bracket_f1(&g, &p), Err(EvaluationError::TokenMismatch { .. })));
    }

    #[test]
    fn corpus_report_basics() {
        let m = crate::rnn::tests::random_model(6, 2);
        let tb = crate::treebank::generate_synthetic_corpus(3, 8, BranchingMode::Left);
        let trees: Vec<ParseTree> = tb.trees().cloned().collect();
        let cal = CalibrationParams::identity();
        let cfg = ParseConfig::default();
        let r1 = evaluate_corpus(&m, &cal, &trees, &cfg).unwrap();
        let r2 = evaluate_corpus(&m, &cal, &trees, &cfg).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.size, trees.len());
        assert_eq!(r1.records.len(), trees.len());
        for v in [
            r1.labeled_precision,
            r1.labeled_recall,
            r1.labeled_f1,
            r1.exact_match,
            r1.node_accuracy,
        ] {
            assert!((0.0..=1.0).contains(&v));
        }
        for r in &r1.records {
            if r.exact_match {
                assert_eq!(r.f1, 1.0);
            }
        }
        let mut reversed = trees.clone();
        reversed.reverse();
        let r3 = evaluate_corpus(&m, &cal, &reversed, &cfg).unwrap();
        assert_eq!(r1.labeled_f1, r3.labeled_f1);
        assert_eq!(r1.exact_match, r3.exact_match);
        assert_eq!(r1.node_accuracy, r3.node_accuracy);
        assert!(r1.to_table().starts_with("8 sentences, micro-averaged"));
        let json: serde_json::Value = serde_json::from_str(&r1.to_json()).unwrap();
        assert_eq!(json["size"], 8);
        assert!(matches!(
            evaluate_corpus(&m, &cal, &[], &cfg),
            Err(EvaluationError::EmptySplit)
        ));
    }
}
