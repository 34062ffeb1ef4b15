//! Token embeddings: static pretrained vector files, a lazily grown random
//! table trained jointly with the network, and precomputed contextual vectors.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::treebank::Token;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: malformed embedding line")]
    MalformedLine { line: usize },
    #[error("embedding file contains no vectors")]
    EmptyFile,
    #[error("embedding dimension must be positive")]
    ZeroDimension,
    #[error("contextual vectors: {0}")]
    Contextual(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMode {
    PretrainedFrozen,
    PretrainedFineTuned,
    RandomTrainable,
}

/// Where a leaf vector lives in the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LeafKey {
    Row(usize),
    Unk,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    mode: EmbeddingMode,
    seed: u64,
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<Array1<f64>>,
    unk: Array1<f64>,
}

impl EmbeddingTable {
    /// An empty trainable table. Vectors are allocated on first sight of a
    /// token during training, uniform in `[-1/sqrt(dim), 1/sqrt(dim)]`.
    pub fn init_random(dim: usize, seed: u64) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDimension);
        }
        Ok(Self {
            dim,
            mode: EmbeddingMode::RandomTrainable,
            seed,
            words: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
            unk: Array1::zeros(dim),
        })
    }

    /// Reads a whitespace-separated `word v1 ... vd` file (GloVe layout). A
    /// `count dim` header line (word2vec/FastText layout) is skipped.
    pub fn load_pretrained(
        path: impl AsRef<Path>,
        limit: Option<usize>,
        mode: EmbeddingMode,
    ) -> Result<Self, EmbeddingError> {
        let file = std::fs::File::open(path)?;
        Self::read_pretrained(std::io::BufReader::new(file), limit, mode)
    }

    pub fn read_pretrained(
        reader: impl BufRead,
        limit: Option<usize>,
        mode: EmbeddingMode,
    ) -> Result<Self, EmbeddingError> {
        let mut header_dim = None;
        let mut dim = None;
        let mut words = Vec::new();
        let mut index = HashMap::new();
        let mut vectors: Vec<Array1<f64>> = Vec::new();

        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if line_no == 1 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
                header_dim = Some(fields[1].parse::<usize>().expect("checked"));
                continue;
            }
            if limit.is_some_and(|l| vectors.len() >= l) {
                break;
            }
            if fields.len() < 2 {
                return Err(EmbeddingError::MalformedLine { line: line_no });
            }
            let values = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| EmbeddingError::MalformedLine { line: line_no })?;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(EmbeddingError::MalformedLine { line: line_no });
            }
            let expected = *dim.get_or_insert_with(|| header_dim.unwrap_or(values.len()));
            if values.len() != expected {
                return Err(EmbeddingError::DimensionMismatch {
                    line: line_no,
                    expected,
                    found: values.len(),
                });
            }
            let word = fields[0].to_string();
            if index.contains_key(&word) {
                continue;
            }
            index.insert(word.clone(), words.len());
            words.push(word);
            vectors.push(Array1::from(values));
        }

        let dim = dim.ok_or(EmbeddingError::EmptyFile)?;
        let mut unk = Array1::zeros(dim);
        for v in &vectors {
            unk += v;
        }
        unk /= vectors.len() as f64;
        Ok(Self {
            dim,
            mode,
            seed: 0,
            words,
            index,
            vectors,
            unk,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> EmbeddingMode {
        self.mode
    }

    pub fn is_trainable(&self) -> bool {
        self.mode != EmbeddingMode::PretrainedFrozen
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn unk(&self) -> &Array1<f64> {
        &self.unk
    }

    /// Exact match, then lowercased match, then nothing.
    pub fn find(&self, text: &str) -> Option<usize> {
        self.index
            .get(text)
            .or_else(|| self.index.get(&text.to_lowercase()))
            .copied()
    }

    pub fn key(&self, text: &str) -> LeafKey {
        self.find(text).map_or(LeafKey::Unk, LeafKey::Row)
    }

    /// Inference lookup: never allocates, unknown tokens map to the unk vector.
    pub fn lookup(&self, token: &Token) -> &Array1<f64> {
        self.vector(self.key(&token.text))
    }

    pub fn vector(&self, key: LeafKey) -> &Array1<f64> {
        match key {
            LeafKey::Row(i) => &self.vectors[i],
            LeafKey::Unk => &self.unk,
        }
    }

    /// Training lookup: a random trainable table allocates a vector for a
    /// token it has not seen; other modes behave like [`Self::key`].
    pub fn key_or_allocate(&mut self, text: &str) -> LeafKey {
        if let Some(i) = self.find(text) {
            return LeafKey::Row(i);
        }
        if self.mode != EmbeddingMode::RandomTrainable {
            return LeafKey::Unk;
        }
        let row = self.words.len();
        let v = self.random_vector(row as u64);
        self.index.insert(text.to_string(), row);
        self.words.push(text.to_string());
        self.vectors.push(v);
        LeafKey::Row(row)
    }

    fn random_vector(&self, stream: u64) -> Array1<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        let r = 1.0 / (self.dim as f64).sqrt();
        Array1::from_iter((0..self.dim).map(|_| rng.random_range(-r..=r)))
    }

    pub fn vector_mut(&mut self, row: usize) -> &mut Array1<f64> {
        &mut self.vectors[row]
    }

    /// Fails if the contextual vectors cannot serve as leaves for this table.
    pub fn check_contextual(&self, ctx: &ContextualSentenceVectors) -> Result<(), EmbeddingError> {
        if ctx.dim() != self.dim {
            return Err(EmbeddingError::Contextual(format!(
                "vector dimension {} does not match model dimension {}",
                ctx.dim(),
                self.dim
            )));
        }
        Ok(())
    }

    pub fn to_record(&self) -> EmbeddingRecord {
        EmbeddingRecord {
            mode: self.mode,
            dim: self.dim,
            seed: self.seed,
            words: self.words.clone(),
            vectors: self.vectors.iter().map(|v| v.to_vec()).collect(),
            unk: self.unk.to_vec(),
        }
    }

    pub fn from_record(record: EmbeddingRecord) -> Result<Self, EmbeddingError> {
        if record.dim == 0 {
            return Err(EmbeddingError::ZeroDimension);
        }
        if record.words.len() != record.vectors.len() {
            return Err(EmbeddingError::MalformedLine { line: 0 });
        }
        let check = |line: usize, v: &[f64]| {
            if v.len() != record.dim {
                Err(EmbeddingError::DimensionMismatch {
                    line,
                    expected: record.dim,
                    found: v.len(),
                })
            } else {
                Ok(())
            }
        };
        check(0, &record.unk)?;
        let mut index = HashMap::with_capacity(record.words.len());
        for (i, (w, v)) in record.words.iter().zip(&record.vectors).enumerate() {
            check(i + 1, v)?;
            index.insert(w.clone(), i);
        }
        Ok(Self {
            dim: record.dim,
            mode: record.mode,
            seed: record.seed,
            index,
            vectors: record.vectors.into_iter().map(Array1::from).collect(),
            words: record.words,
            unk: Array1::from(record.unk),
        })
    }
}

/// Serialized form of an [`EmbeddingTable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub mode: EmbeddingMode,
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
    pub words: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
    pub unk: Vec<f64>,
}

/// Per-token vectors for one sentence, computed outside this crate (for
/// example by a transformer encoder).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "RawContextual")]
pub struct ContextualSentenceVectors {
    tokens: Vec<Token>,
    vectors: Vec<Array1<f64>>,
}

#[derive(Deserialize)]
struct RawContextual {
    tokens: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

impl TryFrom<RawContextual> for ContextualSentenceVectors {
    type Error = EmbeddingError;

    fn try_from(raw: RawContextual) -> Result<Self, Self::Error> {
        Self::new(raw.tokens, raw.vectors)
    }
}

impl ContextualSentenceVectors {
    pub fn new(tokens: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self, EmbeddingError> {
        if tokens.is_empty() {
            return Err(EmbeddingError::Contextual("no tokens".into()));
        }
        if tokens.len() != vectors.len() {
            return Err(EmbeddingError::Contextual(format!(
                "{} tokens but {} vectors",
                tokens.len(),
                vectors.len()
            )));
        }
        let dim = vectors[0].len();
        if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
            return Err(EmbeddingError::Contextual(
                "vectors must share a positive dimension".into(),
            ));
        }
        if vectors.iter().flatten().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::Contextual("non-finite component".into()));
        }
        if tokens
            .iter()
            .any(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(EmbeddingError::Contextual(
                "tokens must be non-empty without whitespace".into(),
            ));
        }
        Ok(Self {
            tokens: tokens.into_iter().enumerate().map(|(i, t)| Token::new(t, i)).collect(),
            vectors: vectors.into_iter().map(Array1::from).collect(),
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self, EmbeddingError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn vectors(&self) -> &[Array1<f64>] {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }
}

impl Serialize for ContextualSentenceVectors {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("ContextualSentenceVectors", 2)?;
        st.serialize_field("tokens", &self.tokens.iter().map(|t| &t.text).collect::<Vec<_>>())?;
        st.serialize_field("vectors", &self.vectors.iter().map(|v| v.to_vec()).collect::<Vec<_>>())?;
        st.end()
    }
}
