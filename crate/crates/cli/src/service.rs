//! HTTP service: `POST /api/parse`, `GET /api/models`, `GET /api/health`.
//!
//! Every checkpoint in the model directory is loaded once at startup and
//! held read-only. A model is addressed by its embedding variant and
//! branching mode; its id is `"{variant}-{branching}"`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cate_core::calibration::CalibrationParams;
use cate_core::embeddings::EmbeddingMode;
use cate_core::inference::{parse, tree_to_json, InferenceError, ParseConfig};
use cate_core::rnn::{Checkpoint, ModelParams};
use cate_core::treebank::{tokenize, BranchingMode, TreebankError};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tower_http::cors::CorsLayer;

pub fn variant_id(embedding_variant: &str, branching: BranchingMode) -> String {
    format!("{embedding_variant}-{}", branching.as_str())
}

#[derive(Debug)]
pub struct LoadedModel {
    pub id: String,
    pub path: PathBuf,
    pub params: ModelParams,
    pub calibration: CalibrationParams,
    pub temperature_fitted: bool,
}

impl LoadedModel {
    pub fn from_checkpoint(checkpoint: Checkpoint, path: PathBuf) -> Result<Self, RegistryError> {
        let calibration = CalibrationParams::with_temperature(checkpoint.temperature_or_default()).map_err(|e| {
            RegistryError::Load {
                path: path.clone(),
                message: e.to_string(),
            }
        })?;
        Ok(Self {
            id: variant_id(&checkpoint.params.embedding_variant, checkpoint.params.branching),
            path,
            temperature_fitted: checkpoint.temperature.is_some(),
            params: checkpoint.params,
            calibration,
        })
    }

    pub fn info(&self) -> ModelInfo {
        ModelInfo {
            id: self.id.clone(),
            branching: self.params.branching,
            embedding_variant: self.params.embedding_variant.clone(),
            embedding_mode: self.params.embedding.mode(),
            dim: self.params.dim(),
            temperature_fitted: self.temperature_fitted,
            temperature: self.calibration.temperature,
            version: self.params.version.clone(),
        }
    }
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("cannot read model directory {path}: {source}")]
    Directory { path: PathBuf, source: std::io::Error },
    #[error("cannot load checkpoint {path}: {message}")]
    Load { path: PathBuf, message: String },
    #[error("checkpoints {first} and {second} both provide model {id}")]
    Duplicate {
        id: String,
        first: PathBuf,
        second: PathBuf,
    },
    #[error("no checkpoints (*.json) found in {0}")]
    Empty(PathBuf),
}

/// Models keyed by variant id.
#[derive(Debug, Default)]
pub struct ModelRegistry {
    models: BTreeMap<String, LoadedModel>,
}

impl ModelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, model: LoadedModel) -> Result<(), RegistryError> {
        if let Some(existing) = self.models.get(&model.id) {
            return Err(RegistryError::Duplicate {
                id: model.id.clone(),
                first: existing.path.clone(),
                second: model.path,
            });
        }
        self.models.insert(model.id.clone(), model);
        Ok(())
    }

    /// Loads every `*.json` file of the directory as a checkpoint.
    pub fn load_dir(dir: &Path) -> Result<Self, RegistryError> {
        let entries = std::fs::read_dir(dir).map_err(|source| RegistryError::Directory {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut paths = Vec::new();
        for entry in entries {
            let path = entry
                .map_err(|source| RegistryError::Directory {
                    path: dir.to_path_buf(),
                    source,
                })?
                .path();
            if path.is_file() && path.extension().is_some_and(|e| e == "json") {
                paths.push(path);
            }
        }
        paths.sort();
        let mut registry = Self::new();
        for path in paths {
            let ckpt = Checkpoint::load(&path).map_err(|e| RegistryError::Load {
                path: path.clone(),
                message: e.to_string(),
            })?;
            registry.insert(LoadedModel::from_checkpoint(ckpt, path)?)?;
        }
        if registry.is_empty() {
            return Err(RegistryError::Empty(dir.to_path_buf()));
        }
        Ok(registry)
    }

    pub fn get(&self, id: &str) -> Option<&LoadedModel> {
        self.models.get(id)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn infos(&self) -> Vec<ModelInfo> {
        self.models.values().map(LoadedModel::info).collect()
    }
}

fn default_beam_width() -> usize {
    1
}

fn default_variant() -> String {
    "random".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParseRequest {
    pub sentence: String,
    #[serde(default = "default_beam_width")]
    pub beam_width: usize,
    #[serde(default)]
    pub use_temperature: bool,
    #[serde(default)]
    pub branching: BranchingMode,
    #[serde(default = "default_variant")]
    pub embedding_variant: String,
}

impl ParseRequest {
    pub fn new(sentence: impl Into<String>) -> Self {
        Self {
            sentence: sentence.into(),
            beam_width: 1,
            use_temperature: false,
            branching: BranchingMode::Left,
            embedding_variant: default_variant(),
        }
    }

    pub fn variant_id(&self) -> String {
        variant_id(&self.embedding_variant, self.branching)
    }

    pub fn config(&self) -> ParseConfig {
        ParseConfig {
            beam_width: self.beam_width,
            use_temperature: self.use_temperature,
            branching: self.branching,
            embedding_variant: self.embedding_variant.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseResponse {
    pub tree: Value,
    pub cum_logprob: f64,
    pub model_version: String,
    pub timing_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: String,
    pub branching: BranchingMode,
    pub embedding_variant: String,
    pub embedding_mode: EmbeddingMode,
    pub dim: usize,
    pub temperature_fitted: bool,
    pub temperature: f64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelsResponse {
    pub models: Vec<ModelInfo>,
}

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("sentence is empty")]
    EmptySentence,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no model for variant {requested}; available: {available:?}")]
    UnknownModelVariant { requested: String, available: Vec<String> },
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::EmptySentence | ApiError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::UnknownModelVariant { .. } => StatusCode::NOT_FOUND,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ApiError::EmptySentence => "EmptySentence",
            ApiError::InvalidRequest(_) => "InvalidRequest",
            ApiError::UnknownModelVariant { .. } => "UnknownModelVariant",
            ApiError::Internal(_) => "Internal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: ErrorDetail {
                code: self.code().to_string(),
                message: self.to_string(),
            },
        };
        (self.status(), Json(body)).into_response()
    }
}

/// Tokenizes and parses one sentence. Shared by the service and the CLI so
/// both emit the same tree.
pub fn parse_sentence(model: &LoadedModel, request: &ParseRequest) -> Result<ParseResponse, ApiError> {
    if request.beam_width == 0 {
        return Err(ApiError::InvalidRequest("beam_width must be at least 1".into()));
    }
    let start = Instant::now();
    let tokens = tokenize(&request.sentence).map_err(|e| match e {
        TreebankError::EmptySentence => ApiError::EmptySentence,
        other => ApiError::InvalidRequest(other.to_string()),
    })?;
    let result = parse(&model.params, &model.calibration, &tokens, &request.config()).map_err(|e| match e {
        InferenceError::EmptySentence => ApiError::EmptySentence,
        InferenceError::ZeroBeamWidth => ApiError::InvalidRequest(e.to_string()),
        other => ApiError::Internal(other.to_string()),
    })?;
    Ok(ParseResponse {
        tree: tree_to_json(&result.root),
        cum_logprob: result.cum_logprob,
        model_version: model.params.version.clone(),
        timing_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

pub fn resolve<'a>(registry: &'a ModelRegistry, request: &ParseRequest) -> Result<&'a LoadedModel, ApiError> {
    let id = request.variant_id();
    registry.get(&id).ok_or_else(|| ApiError::UnknownModelVariant {
        requested: id,
        available: registry.infos().into_iter().map(|m| m.id).collect(),
    })
}

pub fn router(registry: Arc<ModelRegistry>) -> Router {
    Router::new()
        .route("/api/parse", post(parse_handler))
        .route("/api/models", get(models_handler))
        .route("/api/health", get(health_handler))
        .layer(CorsLayer::permissive())
        .with_state(registry)
}

async fn parse_handler(
    State(registry): State<Arc<ModelRegistry>>,
    body: Bytes,
) -> Result<Json<ParseResponse>, ApiError> {
    let request: ParseRequest = serde_json::from_slice(&body).map_err(|e| ApiError::InvalidRequest(e.to_string()))?;
    if request.sentence.trim().is_empty() {
        return Err(ApiError::EmptySentence);
    }
    resolve(&registry, &request)?;
    let response = tokio::task::spawn_blocking(move || {
        let model = resolve(&registry, &request)?;
        parse_sentence(model, &request)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok(Json(response))
}

async fn models_handler(State(registry): State<Arc<ModelRegistry>>) -> Json<ModelsResponse> {
    Json(ModelsResponse {
        models: registry.infos(),
    })
}

async fn health_handler(State(registry): State<Arc<ModelRegistry>>) -> Json<Value> {
    Json(serde_json::json!({ "status": "ok", "models": registry.len() }))
}

/// Serves until ctrl-c.
pub async fn serve(registry: ModelRegistry, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(registry)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
