//! Building a causality tree for an unseen sentence.
//!
//! Both parsers start from the forest of leaves and repeatedly merge two
//! adjacent nodes. A candidate merge is scored by the (optionally
//! temperature-scaled) probability of its predicted class, and a tree's
//! score is the sum of the log merge probabilities. The greedy parser takes
//! the best pair at each stage; the beam parser keeps the `beam_width` best
//! partial forests.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::Array1;
use serde_json::{json, Value};
use thiserror::Error;

use crate::calibration::CalibrationParams;
use crate::math::scaled_log_prob;
use crate::rnn::{AnnotatedTree, ClassScores, ModelError, ModelParams};
use crate::treebank::{BranchingMode, Span, Token};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("sentence contains no tokens")]
    EmptySentence,
    #[error("beam width must be at least 1")]
    ZeroBeamWidth,
    #[error("token {position} has index {index}")]
    MisindexedToken { position: usize, index: usize },
    #[error("nodes {left} and {right} are not adjacent")]
    NonAdjacent { left: Span, right: Span },
    #[error("{tokens} tokens but {vectors} leaf vectors")]
    VectorCount { tokens: usize, vectors: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Inference-time settings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseConfig {
    pub beam_width: usize,
    pub use_temperature: bool,
    /// Selects the model variant; the parser itself is branching-agnostic.
    pub branching: BranchingMode,
    /// Selects the model variant.
    pub embedding_variant: String,
}

impl Default for ParseConfig {
    fn default() -> Self {
        Self {
            beam_width: 1,
            use_temperature: false,
            branching: BranchingMode::Left,
            embedding_variant: "random".to_string(),
        }
    }
}

impl ParseConfig {
    pub fn with_beam(beam_width: usize) -> Self {
        Self {
            beam_width,
            ..Self::default()
        }
    }
}

/// Counters describing the work a parse performed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseStats {
    pub merges: usize,
    /// Candidate merges scored at each stage.
    pub pair_evaluations: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ParseResult {
    pub root: Arc<AnnotatedTree>,
    /// Sum of log merge probabilities of all merges in the tree.
    pub cum_logprob: f64,
    pub stats: ParseStats,
}

fn temperature(calibration: &CalibrationParams, use_temperature: bool) -> f64 {
    if use_temperature {
        calibration.temperature
    } else {
        1.0
    }
}

/// Scores the candidate parent of two adjacent nodes. Returns its class
/// scores and the log-probability of its predicted class.
pub fn score_merge(
    params: &ModelParams,
    calibration: &CalibrationParams,
    left: &AnnotatedTree,
    right: &AnnotatedTree,
    use_temperature: bool,
) -> Result<(ClassScores, f64), InferenceError> {
    let (_, scores, logprob) = score_pair(params, calibration, left, right, use_temperature)?;
    Ok((scores, logprob))
}

fn score_pair(
    params: &ModelParams,
    calibration: &CalibrationParams,
    left: &AnnotatedTree,
    right: &AnnotatedTree,
    use_temperature: bool,
) -> Result<(Array1<f64>, ClassScores, f64), InferenceError> {
    let (l, r) = (left.span(), right.span());
    if l.end != r.start {
        return Err(InferenceError::NonAdjacent { left: l, right: r });
    }
    let t = temperature(calibration, use_temperature);
    let hidden = params.compose(left.hidden().view(), right.hidden().view())?;
    let scores = params.classify_with_temperature(hidden.view(), t)?;
    let logprob = scaled_log_prob(scores.logits.view(), t, scores.predicted.id);
    Ok((hidden, scores, logprob))
}

fn merge(
    params: &ModelParams,
    calibration: &CalibrationParams,
    left: &Arc<AnnotatedTree>,
    right: &Arc<AnnotatedTree>,
    use_temperature: bool,
) -> Result<(Arc<AnnotatedTree>, f64), InferenceError> {
    let (hidden, scores, logprob) = score_pair(params, calibration, left, right, use_temperature)?;
    let node = AnnotatedTree::Internal {
        label: scores.predicted.clone(),
        span: Span::new(left.span().start, right.span().end),
        hidden,
        scores,
        left: Arc::clone(left),
        right: Arc::clone(right),
    };
    Ok((Arc::new(node), logprob))
}

fn leaf_forest(
    params: &ModelParams,
    tokens: &[Token],
    vectors: Option<&[Array1<f64>]>,
) -> Result<Vec<Arc<AnnotatedTree>>, InferenceError> {
    if tokens.is_empty() {
        return Err(InferenceError::EmptySentence);
    }
    if let Some(v) = vectors {
        if v.len() != tokens.len() {
            return Err(InferenceError::VectorCount {
                tokens: tokens.len(),
                vectors: v.len(),
            });
        }
    }
    tokens
        .iter()
        .enumerate()
        .map(|(i, tok)| {
            if tok.index != i {
                return Err(InferenceError::MisindexedToken {
                    position: i,
                    index: tok.index,
                });
            }
            let hidden = match vectors {
                Some(v) => {
                    if v[i].len() != params.dim() {
                        return Err(ModelError::DimensionMismatch {
                            expected: params.dim(),
                            found: v[i].len(),
                        }
                        .into());
                    }
                    v[i].clone()
                }
                None => params.embedding.lookup(tok).clone(),
            };
            Ok(Arc::new(AnnotatedTree::Leaf {
                token: tok.clone(),
                hidden,
            }))
        })
        .collect()
}

/// Greedy bottom-up parse: at every stage score all adjacent pairs and merge
/// the most probable one (leftmost on ties), until one node is left.
pub fn parse_greedy(
    params: &ModelParams,
    calibration: &CalibrationParams,
    tokens: &[Token],
    config: &ParseConfig,
) -> Result<ParseResult, InferenceError> {
    greedy_from_forest(params, calibration, leaf_forest(params, tokens, None)?, config)
}

/// [`parse_greedy`] with caller-supplied leaf vectors (one per token).
pub fn parse_greedy_with_vectors(
    params: &ModelParams,
    calibration: &CalibrationParams,
    tokens: &[Token],
    vectors: &[Array1<f64>],
    config: &ParseConfig,
) -> Result<ParseResult, InferenceError> {
    greedy_from_forest(params, calibration, leaf_forest(params, tokens, Some(vectors))?, config)
}

fn greedy_from_forest(
    params: &ModelParams,
    calibration: &CalibrationParams,
    mut forest: Vec<Arc<AnnotatedTree>>,
    config: &ParseConfig,
) -> Result<ParseResult, InferenceError> {
    let mut stats = ParseStats::default();
    let mut cum_logprob = 0.0;
    while forest.len() > 1 {
        let mut best: Option<(usize, Arc<AnnotatedTree>, f64)> = None;
        for i in 0..forest.len() - 1 {
            let (node, lp) = merge(params, calibration, &forest[i], &forest[i + 1], config.use_temperature)?;
            if best.as_ref().is_none_or(|(_, _, b)| lp > *b) {
                best = Some((i, node, lp));
            }
        }
        stats.pair_evaluations.push(forest.len() - 1);
        let (i, node, lp) = best.expect("forest has at least two nodes");
        forest.splice(i..=i + 1, [node]);
        cum_logprob += lp;
        stats.merges += 1;
    }
    Ok(ParseResult {
        root: forest.pop().expect("one node left"),
        cum_logprob,
        stats,
    })
}

#[derive(Clone)]
struct BeamState {
    forest: Vec<Arc<AnnotatedTree>>,
    cum_logprob: f64,
}

impl BeamState {
    /// Internal spans of the forest; equal iff the forests are identical.
    fn signature(&self) -> Vec<Span> {
        self.forest
            .iter()
            .flat_map(|n| n.internal_nodes().into_iter().map(AnnotatedTree::span))
            .collect()
    }
}

/// Beam search over partial forests. Each stage expands every kept state by
/// every adjacent merge, merges duplicate forests (keeping the best score),
/// and keeps the `beam_width` best states, ties in creation order.
pub fn parse_beam(
    params: &ModelParams,
    calibration: &CalibrationParams,
    tokens: &[Token],
    config: &ParseConfig,
) -> Result<ParseResult, InferenceError> {
    beam_from_forest(params, calibration, leaf_forest(params, tokens, None)?, config)
}

/// [`parse_beam`] with caller-supplied leaf vectors (one per token).
pub fn parse_beam_with_vectors(
    params: &ModelParams,
    calibration: &CalibrationParams,
    tokens: &[Token],
    vectors: &[Array1<f64>],
    config: &ParseConfig,
) -> Result<ParseResult, InferenceError> {
    beam_from_forest(params, calibration, leaf_forest(params, tokens, Some(vectors))?, config)
}

type MergeCache = HashMap<(*const AnnotatedTree, *const AnnotatedTree), (Arc<AnnotatedTree>, f64)>;

fn beam_from_forest(
    params: &ModelParams,
    calibration: &CalibrationParams,
    leaves: Vec<Arc<AnnotatedTree>>,
    config: &ParseConfig,
) -> Result<ParseResult, InferenceError> {
    if config.beam_width == 0 {
        return Err(InferenceError::ZeroBeamWidth);
    }
    let n = leaves.len();
    let mut stats = ParseStats::default();
    let mut beam = vec![BeamState {
        forest: leaves,
        cum_logprob: 0.0,
    }];
    // Subtrees are shared between states, so a pair of the same two nodes is
    // scored once per parse.
    let mut cache = MergeCache::new();

    for _ in 1..n {
        let mut candidates: Vec<BeamState> = Vec::new();
        let mut seen: HashMap<Vec<Span>, usize> = HashMap::new();
        let mut evaluations = 0;
        for state in &beam {
            for i in 0..state.forest.len() - 1 {
                let (l, r) = (&state.forest[i], &state.forest[i + 1]);
                let key = (Arc::as_ptr(l), Arc::as_ptr(r));
                let (node, lp) = match cache.get(&key) {
                    Some(hit) => hit.clone(),
                    None => {
                        let fresh = merge(params, calibration, l, r, config.use_temperature)?;
                        cache.insert(key, fresh.clone());
                        fresh
                    }
                };
                evaluations += 1;
                let mut forest = state.forest.clone();
                forest.splice(i..=i + 1, [node]);
                let next = BeamState {
                    forest,
                    cum_logprob: state.cum_logprob + lp,
                };
                match seen.get(&next.signature()) {
                    Some(&k) => {
                        if next.cum_logprob > candidates[k].cum_logprob {
                            candidates[k].cum_logprob = next.cum_logprob;
                        }
                    }
                    None => {
                        seen.insert(next.signature(), candidates.len());
                        candidates.push(next);
                    }
                }
            }
        }
        stats.pair_evaluations.push(evaluations);
        stats.merges += 1;
        // Stable sort keeps creation order among equal scores.
        candidates.sort_by(|a, b| b.cum_logprob.total_cmp(&a.cum_logprob));
        candidates.truncate(config.beam_width);
        beam = candidates;
    }

    let best = beam.into_iter().next().expect("beam is never empty");
    Ok(ParseResult {
        root: best.forest.into_iter().next().expect("single root"),
        cum_logprob: best.cum_logprob,
        stats,
    })
}

/// Greedy when `beam_width == 1`, beam search otherwise.
pub fn parse(
    params: &ModelParams,
    calibration: &CalibrationParams,
    tokens: &[Token],
    config: &ParseConfig,
) -> Result<ParseResult, InferenceError> {
    match config.beam_width {
        0 => Err(InferenceError::ZeroBeamWidth),
        1 => parse_greedy(params, calibration, tokens, config),
        _ => parse_beam(params, calibration, tokens, config),
    }
}

/// [`parse`] with caller-supplied leaf vectors.
pub fn parse_with_vectors(
    params: &ModelParams,
    calibration: &CalibrationParams,
    tokens: &[Token],
    vectors: &[Array1<f64>],
    config: &ParseConfig,
) -> Result<ParseResult, InferenceError> {
    match config.beam_width {
        0 => Err(InferenceError::ZeroBeamWidth),
        1 => parse_greedy_with_vectors(params, calibration, tokens, vectors, config),
        _ => parse_beam_with_vectors(params, calibration, tokens, vectors, config),
    }
}

/// Nested JSON form: internal nodes are
/// `{"label", "span": [start, end], "prob", "children": [left, right]}` and
/// leaves `{"token", "span"}`.
pub fn tree_to_json(tree: &AnnotatedTree) -> Value {
    match tree {
        AnnotatedTree::Leaf { token, .. } => json!({
            "token": token.text,
            "span": [token.index, token.index + 1],
        }),
        AnnotatedTree::Internal {
            label,
            span,
            scores,
            left,
            right,
            ..
        } => json!({
            "label": label.name,
            "span": [span.start, span.end],
            "prob": scores.probs[label.id],
            "children": [tree_to_json(left), tree_to_json(right)],
        }),
    }
}

/// Leaf tokens of a tree in the [`tree_to_json`] form, left to right.
pub fn json_leaf_tokens(value: &Value) -> Vec<String> {
    let mut out = Vec::new();
    fn walk(v: &Value, out: &mut Vec<String>) {
        if let Some(tok) = v.get("token").and_then(Value::as_str) {
            out.push(tok.to_string());
        } else if let Some(children) = v.get("children").and_then(Value::as_array) {
            for c in children {
                walk(c, out);
            }
        }
    }
    walk(value, &mut out);
    out
}
