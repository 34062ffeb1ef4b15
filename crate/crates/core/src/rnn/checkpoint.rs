//! JSON checkpoint: every float is written in shortest round-trip decimal
//! form, so save followed by load reproduces all parameters bit for bit.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{ModelError, ModelParams};
use crate::embeddings::{EmbeddingRecord, EmbeddingTable};
use crate::treebank::{BranchingMode, Vocabulary};

/// A trained model plus its fitted temperature, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    /// Absent means `T = 1`.
    pub temperature: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct Record {
    version: String,
    dim: usize,
    branching: BranchingMode,
    #[serde(default = "default_variant")]
    embedding_variant: String,
    vocabulary: Vec<String>,
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
    #[serde(rename = "Ws")]
    ws: Vec<Vec<f64>>,
    bs: Vec<f64>,
    embedding: EmbeddingRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
}

fn default_variant() -> String {
    "random".to_string()
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn matrix(rows: Vec<Vec<f64>>, name: &str, shape: (usize, usize)) -> Result<Array2<f64>, ModelError> {
    let bad = || ModelError::Checkpoint(format!("{name} must be {} x {}", shape.0, shape.1));
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(bad());
    }
    Array2::from_shape_vec(shape, rows.into_iter().flatten().collect()).map_err(|_| bad())
}

impl Checkpoint {
    pub fn new(params: ModelParams) -> Self {
        Self {
            params,
            temperature: None,
        }
    }

    pub fn temperature_or_default(&self) -> f64 {
        self.temperature.unwrap_or(1.0)
    }

    pub fn to_json_string(&self) -> Result<String, ModelError> {
        let p = &self.params;
        let record = Record {
            version: p.version.clone(),
            dim: p.dim(),
            branching: p.branching,
            embedding_variant: p.embedding_variant.clone(),
            vocabulary: p.vocabulary.names().to_vec(),
            w: rows(&p.w),
            b: p.b.to_vec(),
            ws: rows(&p.ws),
            bs: p.bs.to_vec(),
            embedding: p.embedding.to_record(),
            temperature: self.temperature,
        };
        Ok(serde_json::to_string(&record)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        let r: Record = serde_json::from_str(text)?;
        let d = r.dim;
        let vocabulary = Vocabulary::new(r.vocabulary).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        let w = matrix(r.w, "W", (d, 2 * d))?;
        let ws = matrix(r.ws, "Ws", (vocabulary.len(), d))?;
        if r.b.len() != d {
            return Err(ModelError::Checkpoint("b must have dim entries".into()));
        }
        if r.temperature.is_some_and(|t| !(t.is_finite() && t > 0.0)) {
            return Err(ModelError::Checkpoint("temperature must be positive".into()));
        }
        let embedding = EmbeddingTable::from_record(r.embedding)?;
        let params = ModelParams {
            w,
            b: Array1::from(r.b),
            ws,
            bs: Array1::from(r.bs),
            embedding,
            vocabulary,
            branching: r.branching,
            embedding_variant: r.embedding_variant,
            version: r.version,
        };
        params.validate()?;
        Ok(Self {
            params,
            temperature: r.temperature,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}
