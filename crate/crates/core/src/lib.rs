//! Causality tree extraction with a recursive neural network.

pub mod calibration;
pub mod embeddings;
pub mod evaluation;
pub mod inference;
mod math;
pub mod rnn;
pub mod training;
pub mod treebank;
