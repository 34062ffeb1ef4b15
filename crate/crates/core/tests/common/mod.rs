#![allow(dead_code)]

use std::sync::Arc;

use cate_core::calibration::CalibrationParams;
use cate_core::embeddings::EmbeddingTable;
use cate_core::inference::score_merge;
use cate_core::rnn::{AnnotatedTree, ModelParams};
use cate_core::treebank::{BranchingMode, ParseTree, Span, Token, Treebank, Vocabulary};

/// Random model whose table has a vector for every token of the treebank.
pub fn random_model_for(tb: &Treebank, dim: usize, seed: u64) -> ModelParams {
    let mut table = EmbeddingTable::init_random(dim, seed).unwrap();
    for tree in tb.trees() {
        for tok in tree.leaves() {
            table.key_or_allocate(&tok.text);
        }
    }
    let mut m = ModelParams::init(table, Vocabulary::default_causal(), BranchingMode::Left, seed);
    m.b.mapv_inplace(|_| 0.1);
    m.bs.indexed_iter_mut()
        .for_each(|(i, v)| *v = ((i * 7) % 5) as f64 * 0.2);
    m
}

/// Token sequences of gold constituents with `min..=max` tokens, re-indexed
/// from zero, in tree order.
pub fn phrases(tb: &Treebank, min: usize, max: usize) -> Vec<Vec<Token>> {
    let mut out = Vec::new();
    for tree in tb.trees() {
        for node in tree.internal_nodes() {
            let n = node.leaf_count();
            if (min..=max).contains(&n) {
                out.push(
                    node.leaves()
                        .iter()
                        .enumerate()
                        .map(|(i, t)| Token::new(t.text.clone(), i))
                        .collect(),
                );
            }
        }
    }
    out
}

/// Every binary bracketing of `leaves[i..j]` with its summed merge log-prob.
fn all_trees(
    m: &ModelParams,
    cal: &CalibrationParams,
    leaves: &[Arc<AnnotatedTree>],
    i: usize,
    j: usize,
    use_temperature: bool,
) -> Vec<(Arc<AnnotatedTree>, f64)> {
    if j - i == 1 {
        return vec![(Arc::clone(&leaves[i]), 0.0)];
    }
    let mut out = Vec::new();
    for k in i + 1..j {
        let rights = all_trees(m, cal, leaves, k, j, use_temperature);
        for (l, ls) in all_trees(m, cal, leaves, i, k, use_temperature) {
            for (r, rs) in rights.iter().cloned() {
                let (scores, lp) = score_merge(m, cal, &l, &r, use_temperature).unwrap();
                let hidden = m.compose(l.hidden().view(), r.hidden().view()).unwrap();
                let node = AnnotatedTree::Internal {
                    label: scores.predicted.clone(),
                    span: Span::new(i, j),
                    hidden,
                    scores,
                    left: Arc::clone(&l),
                    right: r,
                };
                out.push((Arc::new(node), ls + rs + lp));
            }
        }
    }
    out
}

/// All bracketings of the sentence, best first.
pub fn enumerate_parses(
    m: &ModelParams,
    cal: &CalibrationParams,
    tokens: &[Token],
    use_temperature: bool,
) -> Vec<(ParseTree, f64)> {
    let leaves: Vec<_> = tokens
        .iter()
        .map(|t| {
            Arc::new(AnnotatedTree::Leaf {
                token: t.clone(),
                hidden: m.embedding.lookup(t).clone(),
            })
        })
        .collect();
    let mut all: Vec<_> = all_trees(m, cal, &leaves, 0, tokens.len(), use_temperature)
        .into_iter()
        .map(|(t, s)| (t.to_parse_tree(), s))
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1));
    all
}

pub fn catalan(n: usize) -> usize {
    (0..n).fold(1, |c, k| c * 2 * (2 * k + 1) / (k + 2))
}
