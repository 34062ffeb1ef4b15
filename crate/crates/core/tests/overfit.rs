//! A small model must be able to memorize a small corpus: labels and
//! structure.

use cate_core::calibration::CalibrationParams;
use cate_core::embeddings::EmbeddingTable;
use cate_core::inference::{parse_greedy, ParseConfig};
use cate_core::training::{node_accuracy, train, TrainingConfig};
use cate_core::treebank::{generate_synthetic_corpus, BranchingMode, Split};

#[test]
fn memorizes_fifty_synthetic_trees() {
    let mut tb = generate_synthetic_corpus(0, 50, BranchingMode::Left);
    for entry in &mut tb.entries {
        entry.split = Split::Train;
    }
    let config = TrainingConfig {
        dim: 25,
        learning_rate: 0.05,
        epochs: 300,
        ..TrainingConfig::default()
    };
    let (params, report) = train(&tb, &config, EmbeddingTable::init_random(25, 0).unwrap()).unwrap();
    assert!(report.validated_on_train);
    assert!(report.epochs_run() <= 300);

    let trees = tb.split(Split::Train);
    let acc = node_accuracy(&params, &trees).unwrap();
    assert!(acc >= 0.99, "node accuracy {acc}");

    let exact = trees
        .iter()
        .filter(|gold| {
            let parsed = parse_greedy(
                &params,
                &CalibrationParams::identity(),
                &gold.tokens(),
                &ParseConfig::default(),
            )
            .unwrap();
            parsed.root.to_parse_tree().structurally_eq(gold)
        })
        .count();
    assert!(
        exact as f64 >= 0.95 * trees.len() as f64,
        "exact match {exact}/{}",
        trees.len()
    );
}

#[test]
fn gold_only_training_learns_labels_but_not_structure() {
    let mut tb = generate_synthetic_corpus(0, 50, BranchingMode::Left);
    for entry in &mut tb.entries {
        entry.split = Split::Train;
    }
    let config = TrainingConfig {
        negative_merge_weight: 0.0,
        epochs: 60,
        ..TrainingConfig::default()
    };
    let (params, _) = train(&tb, &config, EmbeddingTable::init_random(25, 0).unwrap()).unwrap();
    let trees = tb.split(Split::Train);
    assert!(node_accuracy(&params, &trees).unwrap() >= 0.99);
}
