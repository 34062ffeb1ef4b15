use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use cate::service::{router, ErrorBody, LoadedModel, ModelRegistry, ModelsResponse, ParseResponse};
use cate_core::embeddings::EmbeddingTable;
use cate_core::inference::json_leaf_tokens;
use cate_core::rnn::Checkpoint;
use cate_core::training::{train, TrainingConfig};
use cate_core::treebank::{generate_synthetic_corpus, tokenize, BranchingMode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const FIG3: &str = "If the system detects an error, a warning window shall be shown.";

fn checkpoint(branching: BranchingMode, temperature: Option<f64>) -> Checkpoint {
    let tb = generate_synthetic_corpus(3, 20, branching);
    let config = TrainingConfig {
        dim: 8,
        epochs: 3,
        branching,
        ..TrainingConfig::default()
    };
    let (params, _) = train(&tb, &config, EmbeddingTable::init_random(8, 3).unwrap()).unwrap();
    Checkpoint { params, temperature }
}

fn registry() -> ModelRegistry {
    let mut r = ModelRegistry::new();
    r.insert(
        LoadedModel::from_checkpoint(checkpoint(BranchingMode::Left, Some(1.5)), PathBuf::from("left.json")).unwrap(),
    )
    .unwrap();
    r.insert(
        LoadedModel::from_checkpoint(checkpoint(BranchingMode::Right, None), PathBuf::from("right.json")).unwrap(),
    )
    .unwrap();
    r
}

async fn call(app: axum::Router, req: Request<Body>) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, headers, body)
}

fn post_parse(body: impl Into<Body>) -> Request<Body> {
    Request::post("/api/parse")
        .header(header::CONTENT_TYPE, "application/json")
        .body(body.into())
        .unwrap()
}

fn app() -> axum::Router {
    router(Arc::new(registry()))
}

#[tokio::test]
async fn parses_the_example_requirement() {
    let body = json!({"sentence": FIG3, "beam_width": 4}).to_string();
    let (status, _, bytes) = call(app(), post_parse(body)).await;
    assert_eq!(status, StatusCode::OK);
    let resp: ParseResponse = serde_json::from_slice(&bytes).unwrap();
    let leaves = json_leaf_tokens(&resp.tree);
    assert_eq!(leaves.len(), 14);
    let expected: Vec<String> = tokenize(FIG3).unwrap().into_iter().map(|t| t.text).collect();
    assert_eq!(leaves, expected);
    assert!(resp.cum_logprob <= 0.0);
    assert!(resp.timing_ms >= 0.0);
    assert!(resp.model_version.starts_with("cate-"));
}

#[tokio::test]
async fn identical_requests_give_identical_trees() {
    let app = app();
    let body = json!({"sentence": FIG3, "beam_width": 3, "use_temperature": true}).to_string();
    let (_, _, a) = call(app.clone(), post_parse(body.clone())).await;
    let (_, _, b) = call(app, post_parse(body)).await;
    let a: ParseResponse = serde_json::from_slice(&a).unwrap();
    let b: ParseResponse = serde_json::from_slice(&b).unwrap();
    assert_eq!(a.tree, b.tree);
    assert_eq!(a.cum_logprob.to_bits(), b.cum_logprob.to_bits());
}

#[tokio::test]
async fn variants_select_models() {
    let app = app();
    let left = json!({"sentence": FIG3, "branching": "left"}).to_string();
    let right = json!({"sentence": FIG3, "branching": "right"}).to_string();
    let (s1, _, _) = call(app.clone(), post_parse(left)).await;
    let (s2, _, _) = call(app.clone(), post_parse(right)).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));

    let unknown = json!({"sentence": FIG3, "embedding_variant": "glove"}).to_string();
    let (status, _, bytes) = call(app, post_parse(unknown)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let err: ErrorBody = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(err.error.code, "UnknownModelVariant");
    assert!(err.error.message.contains("random-left"));
}

#[tokio::test]
async fn bad_requests_are_400_with_structured_body() {
    let cases = [
        (json!({"sentence": ""}).to_string(), "EmptySentence"),
        (json!({"sentence": "   "}).to_string(), "EmptySentence"),
        (
            json!({"sentence": "a b", "beam_width": 0}).to_string(),
            "InvalidRequest",
        ),
        (
            json!({"sentence": "a b", "branching": "diagonal"}).to_string(),
            "InvalidRequest",
        ),
        (json!({"sentence": "a b", "colour": 1}).to_string(), "InvalidRequest"),
        (json!({"beam_width": 2}).to_string(), "InvalidRequest"),
        ("{not json".to_string(), "InvalidRequest"),
    ];
    for (body, code) in cases {
        let (status, _, bytes) = call(app(), post_parse(body.clone())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        let err: ErrorBody = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(err.error.code, code, "{body}");
    }
}

#[tokio::test]
async fn internal_failures_are_500() {
    let mut ckpt = checkpoint(BranchingMode::Left, None);
    ckpt.params.embedding = EmbeddingTable::init_random(5, 0).unwrap();
    let mut r = ModelRegistry::new();
    r.insert(LoadedModel::from_checkpoint(ckpt, PathBuf::from("broken.json")).unwrap())
        .unwrap();
    let (status, _, bytes) = call(router(Arc::new(r)), post_parse(json!({"sentence": "a b"}).to_string())).await;
    assert_eq!(status, StatusCode::INTERNAL_SERVER_ERROR);
    let err: ErrorBody = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(err.error.code, "Internal");
}

#[tokio::test]
async fn models_are_listed_stably() {
    let app = app();
    let get = || Request::get("/api/models").body(Body::empty()).unwrap();
    let (status, _, a) = call(app.clone(), get()).await;
    let (_, _, b) = call(app, get()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(a, b);
    let models: ModelsResponse = serde_json::from_slice(&a).unwrap();
    let ids: Vec<_> = models.models.iter().map(|m| m.id.as_str()).collect();
    assert_eq!(ids, ["random-left", "random-right"]);
    assert!(models.models[0].temperature_fitted);
    assert_eq!(models.models[0].temperature, 1.5);
    assert!(!models.models[1].temperature_fitted);
    assert_eq!(models.models[0].dim, 8);
    let raw: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(raw["models"][0]["embedding_mode"], "random_trainable");
    assert_eq!(raw["models"][1]["branching"], "right");
}

#[tokio::test]
async fn health_and_cors() {
    let req = Request::get("/api/health")
        .header(header::ORIGIN, "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let (status, headers, bytes) = call(app(), req).await;
    assert_eq!(status, StatusCode::OK);
    assert!(headers.contains_key(header::ACCESS_CONTROL_ALLOW_ORIGIN));
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v, json!({"status": "ok", "models": 2}));

    let preflight = Request::options("/api/parse")
        .header(header::ORIGIN, "http://localhost:5173")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .body(Body::empty())
        .unwrap();
    let (status, headers, _) = call(app(), preflight).await;
    assert!(status.is_success());
    assert!(headers.contains_key(header::ACCESS_CONTROL_ALLOW_METHODS));
}

#[test]
fn registry_loads_a_directory() {
    let dir = tempfile::tempdir().unwrap();
    checkpoint(BranchingMode::Left, None)
        .save(dir.path().join("a.json"))
        .unwrap();
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let r = ModelRegistry::load_dir(dir.path()).unwrap();
    assert_eq!(r.len(), 1);
    assert!(r.get("random-left").is_some());

    checkpoint(BranchingMode::Left, Some(2.0))
        .save(dir.path().join("b.json"))
        .unwrap();
    assert!(ModelRegistry::load_dir(dir.path()).is_err());

    let empty = tempfile::tempdir().unwrap();
    assert!(ModelRegistry::load_dir(empty.path()).is_err());
    std::fs::write(empty.path().join("bad.json"), "{}").unwrap();
    assert!(ModelRegistry::load_dir(empty.path()).is_err());
}
