//! The recursive neural network: tanh composition of adjacent children, a
//! 27-way classifier at every merge node, the forward pass over a gold tree
//! and exact gradients by backpropagation through structure.

mod checkpoint;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::embeddings::{EmbeddingError, EmbeddingTable, LeafKey};
use crate::math::{argmax, scaled_log_prob, scaled_softmax};
use crate::treebank::{BranchingMode, ParseTree, SegmentLabel, Span, Token, Vocabulary, LABEL_COUNT};

pub use checkpoint::Checkpoint;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("node {span} carries a label outside the model vocabulary")]
    UnlabeledNode { span: Span },
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// All trainable parameters plus the metadata that identifies a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Composition matrix, `d × 2d`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    /// Classifier matrix, `27 × d`.
    pub ws: Array2<f64>,
    pub bs: Array1<f64>,
    pub embedding: EmbeddingTable,
    pub vocabulary: Vocabulary,
    pub branching: BranchingMode,
    /// Identifier of the embedding flavour the model was trained with.
    pub embedding_variant: String,
    pub version: String,
}

impl ModelParams {
    /// Composition and classifier weights uniform in `±1/sqrt(fan_in)`,
    /// biases zero.
    pub fn init(embedding: EmbeddingTable, vocabulary: Vocabulary, branching: BranchingMode, seed: u64) -> Self {
        let d = embedding.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rw = 1.0 / ((2 * d) as f64).sqrt();
        let w = Array2::from_shape_fn((d, 2 * d), |_| rng.random_range(-rw..=rw));
        let rs = 1.0 / (d as f64).sqrt();
        let ws = Array2::from_shape_fn((LABEL_COUNT, d), |_| rng.random_range(-rs..=rs));
        Self::from_parts(
            w,
            Array1::zeros(d),
            ws,
            Array1::zeros(LABEL_COUNT),
            embedding,
            vocabulary,
            branching,
        )
    }

    pub fn from_parts(
        w: Array2<f64>,
        b: Array1<f64>,
        ws: Array2<f64>,
        bs: Array1<f64>,
        embedding: EmbeddingTable,
        vocabulary: Vocabulary,
        branching: BranchingMode,
    ) -> Self {
        let embedding_variant = match embedding.mode() {
            crate::embeddings::EmbeddingMode::RandomTrainable => "random",
            _ => "pretrained",
        }
        .to_string();
        Self {
            w,
            b,
            ws,
            bs,
            embedding,
            vocabulary,
            branching,
            embedding_variant,
            version: format!("cate-{}", env!("CARGO_PKG_VERSION")),
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    fn check_dim(&self, v: ArrayView1<f64>) -> Result<(), ModelError> {
        if v.len() != self.dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.dim(),
                found: v.len(),
            });
        }
        Ok(())
    }

    /// Checks that all shapes agree with `dim` and 27 classes and that every
    /// entry is finite.
    pub fn validate(&self) -> Result<(), ModelError> {
        let d = self.dim();
        let bad = |what: &str| Err(ModelError::Checkpoint(what.to_string()));
        if d == 0 {
            return bad("dimension must be positive");
        }
        if self.w.dim() != (d, 2 * d) {
            return bad("W must be d x 2d");
        }
        if self.ws.dim() != (LABEL_COUNT, d) {
            return bad("Ws must be 27 x d");
        }
        if self.bs.len() != LABEL_COUNT {
            return bad("bs must have 27 entries");
        }
        if self.vocabulary.len() != LABEL_COUNT {
            return bad("vocabulary must have 27 labels");
        }
        if self.embedding.dim() != d {
            return bad("embedding dimension differs from model dimension");
        }
        let finite = self
            .w
            .iter()
            .chain(&self.b)
            .chain(&self.ws)
            .chain(&self.bs)
            .all(|x| x.is_finite());
        if !finite {
            return bad("non-finite parameter");
        }
        Ok(())
    }

    /// `tanh(W [left; right] + b)`.
    pub fn compose(&self, left: ArrayView1<f64>, right: ArrayView1<f64>) -> Result<Array1<f64>, ModelError> {
        self.check_dim(left)?;
        self.check_dim(right)?;
        let d = self.dim();
        let z = self.w.slice(s![.., ..d]).dot(&left) + self.w.slice(s![.., d..]).dot(&right) + &self.b;
        Ok(z.mapv(f64::tanh))
    }

    /// Class scores at temperature 1.
    pub fn classify(&self, hidden: ArrayView1<f64>) -> Result<ClassScores, ModelError> {
        self.classify_with_temperature(hidden, 1.0)
    }

    /// Class scores with `probs = softmax(logits / temperature)`.
    pub fn classify_with_temperature(
        &self,
        hidden: ArrayView1<f64>,
        temperature: f64,
    ) -> Result<ClassScores, ModelError> {
        self.check_dim(hidden)?;
        let logits = self.ws.dot(&hidden) + &self.bs;
        Ok(ClassScores::from_logits(logits, temperature, &self.vocabulary))
    }

    /// Annotates every node of the gold tree bottom-up. Leaves take their
    /// embedding vectors; internal nodes keep their gold label.
    pub fn forward_gold_tree(&self, gold: &ParseTree) -> Result<AnnotatedTree, ModelError> {
        self.forward_with(gold, &|tok: &Token| Ok(self.embedding.lookup(tok).clone()))
    }

    /// Like [`Self::forward_gold_tree`] with leaf vectors supplied by the
    /// caller in token order.
    pub fn forward_gold_tree_with_vectors(
        &self,
        gold: &ParseTree,
        vectors: &[Array1<f64>],
    ) -> Result<AnnotatedTree, ModelError> {
        if vectors.len() != gold.leaf_count() {
            return Err(ModelError::DimensionMismatch {
                expected: gold.leaf_count(),
                found: vectors.len(),
            });
        }
        self.forward_with(gold, &|tok: &Token| {
            let v = &vectors[tok.index];
            self.check_dim(v.view())?;
            Ok(v.clone())
        })
    }

    fn forward_with(
        &self,
        gold: &ParseTree,
        leaf: &dyn Fn(&Token) -> Result<Array1<f64>, ModelError>,
    ) -> Result<AnnotatedTree, ModelError> {
        match gold {
            ParseTree::Leaf(tok) => {
                let hidden = leaf(tok)?;
                self.check_dim(hidden.view())?;
                Ok(AnnotatedTree::Leaf {
                    token: tok.clone(),
                    hidden,
                })
            }
            ParseTree::Internal {
                label,
                span,
                left,
                right,
                ..
            } => {
                if !self.vocabulary.contains(label) {
                    return Err(ModelError::UnlabeledNode { span: *span });
                }
                let left = self.forward_with(left, leaf)?;
                let right = self.forward_with(right, leaf)?;
                let hidden = self.compose(left.hidden().view(), right.hidden().view())?;
                let scores = self.classify(hidden.view())?;
                Ok(AnnotatedTree::Internal {
                    label: label.clone(),
                    span: *span,
                    hidden,
                    scores,
                    left: Arc::new(left),
                    right: Arc::new(right),
                })
            }
        }
    }

    /// Cross-entropy of the gold labels at all merge nodes and its exact
    /// gradient with respect to every parameter. Leaf-embedding gradients are
    /// reported for trainable tables only, keyed by table row.
    pub fn gradients(&self, gold: &ParseTree) -> Result<(f64, Gradients), ModelError> {
        let (loss, _, grads) = self.gradients_with_negative_merges(gold, 0.0)?;
        Ok((loss, grads))
    }

    /// Gold cross-entropy plus a penalty on every merge of two adjacent gold
    /// constituents that are not siblings. The penalty is the cross-entropy
    /// of the merge's class distribution against the uniform distribution,
    /// minus ln 27, scaled by `weight`; it is zero exactly when the merge is
    /// maximally unsure. Returns `(gold_loss, penalty, gradients)`.
    pub fn gradients_with_negative_merges(
        &self,
        gold: &ParseTree,
        weight: f64,
    ) -> Result<(f64, f64, Gradients), ModelError> {
        let annotated = self.forward_gold_tree(gold)?;
        let d = self.dim();
        let mut grads = Gradients::zeros(d);
        let mut extra: HashMap<Span, Array1<f64>> = HashMap::new();
        let mut penalty = 0.0;
        if weight > 0.0 {
            let mut nodes = Vec::new();
            collect_nodes(&annotated, &mut nodes);
            let mut siblings = HashSet::new();
            let mut starting_at: HashMap<usize, Vec<&AnnotatedTree>> = HashMap::new();
            for node in &nodes {
                if let AnnotatedTree::Internal { left, right, .. } = node {
                    siblings.insert((left.span(), right.span()));
                }
                starting_at.entry(node.span().start).or_default().push(node);
            }
            let uniform = 1.0 / LABEL_COUNT as f64;
            for a in &nodes {
                for b in starting_at.get(&a.span().end).into_iter().flatten() {
                    if siblings.contains(&(a.span(), b.span())) {
                        continue;
                    }
                    let input = concatenate(Axis(0), &[a.hidden().view(), b.hidden().view()])
                        .expect("children share dimension");
                    let hidden = (self.w.dot(&input) + &self.b).mapv(f64::tanh);
                    let logits = self.ws.dot(&hidden) + &self.bs;
                    let probs = scaled_softmax(logits.view(), 1.0);
                    let log_norm = logits[0] - scaled_log_prob(logits.view(), 1.0, 0);
                    let mean_log_prob = logits.mean().expect("27 classes") - log_norm;
                    penalty += weight * (-mean_log_prob - (LABEL_COUNT as f64).ln());

                    let dlogits = probs.mapv(|p| weight * (p - uniform));
                    grads.ws += &outer(dlogits.view(), hidden.view());
                    grads.bs += &dlogits;
                    let dz = self.ws.t().dot(&dlogits) * hidden.mapv(|h| 1.0 - h * h);
                    grads.w += &outer(dz.view(), input.view());
                    grads.b += &dz;
                    let dinput = self.w.t().dot(&dz);
                    *extra.entry(a.span()).or_insert_with(|| Array1::zeros(d)) += &dinput.slice(s![..d]);
                    *extra.entry(b.span()).or_insert_with(|| Array1::zeros(d)) += &dinput.slice(s![d..]);
                }
            }
        }
        let mut loss = 0.0;
        self.backprop(&annotated, Array1::zeros(d), &extra, &mut grads, &mut loss);
        Ok((loss, penalty, grads))
    }

    fn backprop(
        &self,
        node: &AnnotatedTree,
        mut dh: Array1<f64>,
        extra: &HashMap<Span, Array1<f64>>,
        grads: &mut Gradients,
        loss: &mut f64,
    ) {
        if let Some(e) = extra.get(&node.span()) {
            dh += e;
        }
        match node {
            AnnotatedTree::Leaf { token, .. } => {
                if self.embedding.is_trainable() {
                    if let LeafKey::Row(row) = self.embedding.key(&token.text) {
                        *grads.embeddings.entry(row).or_insert_with(|| Array1::zeros(self.dim())) += &dh;
                    }
                }
            }
            AnnotatedTree::Internal {
                label,
                hidden,
                scores,
                left,
                right,
                ..
            } => {
                *loss -= scaled_log_prob(scores.logits.view(), 1.0, label.id);
                let mut dlogits = scores.probs.clone();
                dlogits[label.id] -= 1.0;
                grads.ws += &outer(dlogits.view(), hidden.view());
                grads.bs += &dlogits;

                let dh = dh + self.ws.t().dot(&dlogits);
                let dz = dh * hidden.mapv(|h| 1.0 - h * h);
                let input = concatenate(Axis(0), &[left.hidden().view(), right.hidden().view()])
                    .expect("children share dimension");
                grads.w += &outer(dz.view(), input.view());
                grads.b += &dz;

                let dinput = self.w.t().dot(&dz);
                let d = self.dim();
                self.backprop(left, dinput.slice(s![..d]).to_owned(), extra, grads, loss);
                self.backprop(right, dinput.slice(s![d..]).to_owned(), extra, grads, loss);
            }
        }
    }

    /// Mean cross-entropy per merge node over a set of gold trees.
    pub fn mean_node_loss(&self, trees: &[ParseTree]) -> Result<f64, ModelError> {
        let mut total = 0.0;
        let mut nodes = 0usize;
        for tree in trees {
            let annotated = self.forward_gold_tree(tree)?;
            for node in annotated.internal_nodes() {
                if let AnnotatedTree::Internal { label, scores, .. } = node {
                    total -= scaled_log_prob(scores.logits.view(), 1.0, label.id);
                    nodes += 1;
                }
            }
        }
        Ok(if nodes == 0 { 0.0 } else { total / nodes as f64 })
    }
}

fn collect_nodes<'a>(node: &'a AnnotatedTree, out: &mut Vec<&'a AnnotatedTree>) {
    if let AnnotatedTree::Internal { left, right, .. } = node {
        collect_nodes(left, out);
        collect_nodes(right, out);
    }
    out.push(node);
}

fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let a2 = a.insert_axis(Axis(1));
    let b2 = b.insert_axis(Axis(0));
    a2.dot(&b2)
}

/// Gradient buffers shaped like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub ws: Array2<f64>,
    pub bs: Array1<f64>,
    /// Embedding-table row -> gradient of its vector.
    pub embeddings: BTreeMap<usize, Array1<f64>>,
}

impl Gradients {
    pub fn zeros(dim: usize) -> Self {
        Self {
            w: Array2::zeros((dim, 2 * dim)),
            b: Array1::zeros(dim),
            ws: Array2::zeros((LABEL_COUNT, dim)),
            bs: Array1::zeros(LABEL_COUNT),
            embeddings: BTreeMap::new(),
        }
    }
}

/// Logits and probabilities of the 27 classes at a merge node.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    pub logits: Array1<f64>,
    pub probs: Array1<f64>,
    /// Argmax of `probs`, ties to the lowest label id.
    pub predicted: SegmentLabel,
}

impl ClassScores {
    pub fn from_logits(logits: Array1<f64>, temperature: f64, vocabulary: &Vocabulary) -> Self {
        let probs = scaled_softmax(logits.view(), temperature);
        let predicted = vocabulary.label(argmax(probs.view()));
        Self {
            logits,
            probs,
            predicted,
        }
    }

    pub fn max_prob(&self) -> f64 {
        self.probs[self.predicted.id]
    }
}

/// A tree whose nodes carry hidden vectors and, at merge nodes, class scores.
///
/// For gold-structure passes the label of an internal node is the gold label;
/// for parser output it is the predicted label.
#[derive(Debug, Clone, PartialEq)]
pub enum AnnotatedTree {
    Leaf {
        token: Token,
        hidden: Array1<f64>,
    },
    Internal {
        label: SegmentLabel,
        span: Span,
        hidden: Array1<f64>,
        scores: ClassScores,
        left: Arc<AnnotatedTree>,
        right: Arc<AnnotatedTree>,
    },
}

impl AnnotatedTree {
    pub fn hidden(&self) -> &Array1<f64> {
        match self {
            AnnotatedTree::Leaf { hidden, .. } | AnnotatedTree::Internal { hidden, .. } => hidden,
        }
    }

    pub fn span(&self) -> Span {
        match self {
            AnnotatedTree::Leaf { token, .. } => token.span(),
            AnnotatedTree::Internal { span, .. } => *span,
        }
    }

    pub fn scores(&self) -> Option<&ClassScores> {
        match self {
            AnnotatedTree::Leaf { .. } => None,
            AnnotatedTree::Internal { scores, .. } => Some(scores),
        }
    }

    pub fn label(&self) -> Option<&SegmentLabel> {
        match self {
            AnnotatedTree::Leaf { .. } => None,
            AnnotatedTree::Internal { label, .. } => Some(label),
        }
    }

    /// Probability the node's scores assign to its label.
    pub fn prob(&self) -> Option<f64> {
        match self {
            AnnotatedTree::Leaf { .. } => None,
            AnnotatedTree::Internal { label, scores, .. } => Some(scores.probs[label.id]),
        }
    }

    pub fn tokens(&self) -> Vec<Token> {
        let mut out = Vec::new();
        fn walk(t: &AnnotatedTree, out: &mut Vec<Token>) {
            match t {
                AnnotatedTree::Leaf { token, .. } => out.push(token.clone()),
                AnnotatedTree::Internal { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        walk(self, &mut out);
        out
    }

    /// Internal nodes in post-order.
    pub fn internal_nodes(&self) -> Vec<&AnnotatedTree> {
        let mut out = Vec::new();
        fn walk<'a>(t: &'a AnnotatedTree, out: &mut Vec<&'a AnnotatedTree>) {
            if let AnnotatedTree::Internal { left, right, .. } = t {
                walk(left, out);
                walk(right, out);
                out.push(t);
            }
        }
        walk(self, &mut out);
        out
    }

    /// Drops hidden vectors and scores, keeping structure and labels.
    pub fn to_parse_tree(&self) -> ParseTree {
        match self {
            AnnotatedTree::Leaf { token, .. } => ParseTree::Leaf(token.clone()),
            AnnotatedTree::Internal {
                label,
                span,
                left,
                right,
                ..
            } => ParseTree::Internal {
                label: label.clone(),
                span: *span,
                left: Box::new(left.to_parse_tree()),
                right: Box::new(right.to_parse_tree()),
                score: None,
            },
        }
    }
}
