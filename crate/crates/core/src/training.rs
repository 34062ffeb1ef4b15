//! Supervised training on gold trees with per-tree SGD.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::embeddings::{EmbeddingTable, LeafKey};
use crate::rnn::{AnnotatedTree, ModelError, ModelParams};
use crate::treebank::{BranchingMode, ParseTree, Split, Treebank, LABEL_COUNT};

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("treebank has no training trees")]
    EmptyTrainSplit,
    #[error("no trees to evaluate")]
    EmptyInput,
    #[error("loss became non-finite in epoch {epoch}; try a lower learning rate")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("vocabulary has {0} labels, expected 27")]
    VocabularySize(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Weight-decay coefficient on the composition and classifier matrices.
    pub l2: f64,
    pub seed: u64,
    pub shuffle: bool,
    /// Stop after this many epochs without a validation-loss improvement.
    pub patience: usize,
    pub dim: usize,
    /// Weight of the penalty on merges of adjacent gold constituents that
    /// are not siblings. Zero trains on gold labels only.
    pub negative_merge_weight: f64,
    /// Recorded in the model; training itself follows the gold structure.
    pub branching: BranchingMode,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 0.05,
            l2: 1e-4,
            seed: 0,
            shuffle: true,
            patience: 20,
            dim: 25,
            negative_merge_weight: 1.0,
            branching: BranchingMode::Left,
        }
    }
}

impl TrainingConfig {
    fn validate(&self) -> Result<(), TrainingError> {
        let bad = |m: &str| Err(TrainingError::InvalidConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return bad("l2 must be non-negative");
        }
        if !(self.negative_merge_weight.is_finite() && self.negative_merge_weight >= 0.0) {
            return bad("negative merge weight must be non-negative");
        }
        if self.dim == 0 {
            return bad("dimension must be positive");
        }
        Ok(())
    }
}

/// Per-epoch history of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    /// Mean per-node gold cross-entropy over the epoch's updates.
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub validation_accuracy: Vec<f64>,
    /// 0-based epoch whose parameters were returned.
    pub best_epoch: usize,
    /// Whether validation used the training split (no validation trees).
    pub validated_on_train: bool,
    pub wall_time: Duration,
}

impl TrainingReport {
    pub fn epochs_run(&self) -> usize {
        self.train_loss.len()
    }

    /// Equality of everything except wall time.
    pub fn same_trajectory(&self, other: &TrainingReport) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        bits(&self.train_loss) == bits(&other.train_loss)
            && bits(&self.validation_loss) == bits(&other.validation_loss)
            && bits(&self.validation_accuracy) == bits(&other.validation_accuracy)
            && self.best_epoch == other.best_epoch
            && self.validated_on_train == other.validated_on_train
    }
}

/// Trains a model on the training split and returns the parameters of the
/// epoch with the lowest validation loss.
pub fn train(
    treebank: &Treebank,
    config: &TrainingConfig,
    table: EmbeddingTable,
) -> Result<(ModelParams, TrainingReport), TrainingError> {
    config.validate()?;
    if treebank.vocabulary.len() != LABEL_COUNT {
        return Err(TrainingError::VocabularySize(treebank.vocabulary.len()));
    }
    if table.dim() != config.dim {
        return Err(TrainingError::InvalidConfig(format!(
            "embedding dimension {} differs from configured dimension {}",
            table.dim(),
            config.dim
        )));
    }
    let train_trees = treebank.split(Split::Train);
    if train_trees.is_empty() {
        return Err(TrainingError::EmptyTrainSplit);
    }
    let mut validation = treebank.split(Split::Validation);
    let validated_on_train = validation.is_empty();
    if validated_on_train {
        validation = train_trees.clone();
    }

    let start = Instant::now();
    let mut params = ModelParams::init(table, treebank.vocabulary.clone(), config.branching, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_trees.len()).collect();

    let mut report = TrainingReport {
        train_loss: Vec::new(),
        validation_loss: Vec::new(),
        validation_accuracy: Vec::new(),
        best_epoch: 0,
        validated_on_train,
        wall_time: Duration::ZERO,
    };
    let mut best: Option<(f64, ModelParams)> = None;

    for epoch in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        let mut epoch_nodes = 0usize;
        for &i in &order {
            let tree = &train_trees[i];
            for tok in tree.leaves() {
                params.embedding.key_or_allocate(&tok.text);
            }
            let (loss, penalty, grads) = params.gradients_with_negative_merges(tree, config.negative_merge_weight)?;
            if !(loss.is_finite() && penalty.is_finite()) {
                return Err(TrainingError::NonFiniteLoss { epoch });
            }
            epoch_loss += loss;
            epoch_nodes += tree.internal_count();
            sgd_step(&mut params, &grads, config);
        }

        let val_loss = params.mean_node_loss(&validation)?;
        if !val_loss.is_finite() || params.validate().is_err() {
            return Err(TrainingError::NonFiniteLoss { epoch });
        }
        report.train_loss.push(if epoch_nodes == 0 {
            0.0
        } else {
            epoch_loss / epoch_nodes as f64
        });
        report.validation_loss.push(val_loss);
        report
            .validation_accuracy
            .push(node_accuracy(&params, &validation).unwrap_or(1.0));

        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, params.clone()));
            report.best_epoch = epoch;
        } else if epoch - report.best_epoch >= config.patience {
            break;
        }
    }

    report.wall_time = start.elapsed();
    let (_, best_params) = best.expect("at least one epoch ran");
    Ok((best_params, report))
}

fn sgd_step(params: &mut ModelParams, grads: &crate::rnn::Gradients, config: &TrainingConfig) {
    let lr = config.learning_rate;
    let decay = 1.0 - lr * config.l2;
    params.w *= decay;
    params.w.scaled_add(-lr, &grads.w);
    params.ws *= decay;
    params.ws.scaled_add(-lr, &grads.ws);
    params.b.scaled_add(-lr, &grads.b);
    params.bs.scaled_add(-lr, &grads.bs);
    if params.embedding.is_trainable() {
        for (&row, g) in &grads.embeddings {
            params.embedding.vector_mut(row).scaled_add(-lr, g);
        }
    }
}

/// Fraction of merge nodes whose predicted label (on the gold structure)
/// equals the gold label.
pub fn node_accuracy(params: &ModelParams, trees: &[ParseTree]) -> Result<f64, TrainingError> {
    if trees.is_empty() {
        return Err(TrainingError::EmptyInput);
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    for tree in trees {
        let annotated = params.forward_gold_tree(tree)?;
        for node in annotated.internal_nodes() {
            if let AnnotatedTree::Internal { label, scores, .. } = node {
                total += 1;
                if scores.predicted.id == label.id {
                    correct += 1;
                }
            }
        }
    }
    if total == 0 {
        return Err(TrainingError::EmptyInput);
    }
    Ok(correct as f64 / total as f64)
}

/// Allocates embedding rows for every token of the trees (a no-op for
/// non-random tables). Returns how many tokens resolved to the unk vector.
pub fn prepare_vocabulary(table: &mut EmbeddingTable, trees: &[ParseTree]) -> usize {
    trees
        .iter()
        .flat_map(|t| t.leaves())
        .filter(|tok| table.key_or_allocate(&tok.text) == LeafKey::Unk)
        .count()
}
