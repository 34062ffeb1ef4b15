use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request};
use cate::service::{router, LoadedModel, ModelRegistry};
use cate_core::inference::json_leaf_tokens;
use cate_core::rnn::Checkpoint;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn cate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cate")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = cate(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_train_calibrate_parse_eval() {
    let dir = tempfile::tempdir().unwrap();
    let tb = dir.path().join("tb.txt");
    let model = dir.path().join("m.json");
    let calibrated = dir.path().join("m_cal.json");
    let report = dir.path().join("report.json");

    let msg = ok(&["generate", "--seed", "7", "--n", "100", "--out", p(&tb)]);
    assert!(msg.contains("100 trees (80 train, 10 validation, 10 test)"));

    ok(&[
        "train",
        "--treebank",
        p(&tb),
        "--out",
        p(&model),
        "--dim",
        "10",
        "--epochs",
        "4",
        "--seed",
        "1",
        "--report",
        p(&report),
    ]);
    let ckpt = Checkpoint::load(&model).unwrap();
    assert_eq!(ckpt.params.dim(), 10);
    assert!(ckpt.temperature.is_none());
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rep["train_loss"].as_array().unwrap().len(), 4);

    let msg = ok(&[
        "calibrate",
        "--model",
        p(&model),
        "--treebank",
        p(&tb),
        "--out",
        p(&calibrated),
    ]);
    assert!(msg.starts_with("T = "));
    let t = Checkpoint::load(&calibrated).unwrap().temperature.unwrap();
    assert!((0.05..=10.0).contains(&t));

    let ascii = ok(&[
        "parse",
        "--model",
        p(&model),
        "--sentence",
        "set to true",
        "--beam",
        "1",
    ]);
    let leaf_lines = ascii
        .lines()
        .filter(|l| !l.contains("p=") && !l.starts_with("cum_logprob"))
        .count();
    assert_eq!(leaf_lines, 3);
    assert_eq!(ascii.lines().filter(|l| l.contains("p=")).count(), 2);

    let table = ok(&[
        "eval",
        "--model",
        p(&calibrated),
        "--treebank",
        p(&tb),
        "--split",
        "test",
    ]);
    assert!(table.starts_with("10 sentences, micro-averaged"));
    let json_report = ok(&[
        "eval",
        "--model",
        p(&model),
        "--treebank",
        p(&tb),
        "--format",
        "json",
        "--beam",
        "2",
    ]);
    let v: Value = serde_json::from_str(&json_report).unwrap();
    assert_eq!(v["size"], 10);
}

#[tokio::test]
async fn cli_json_tree_is_byte_identical_to_service_tree() {
    let dir = tempfile::tempdir().unwrap();
    let tb = dir.path().join("tb.txt");
    let model = dir.path().join("m.json");
    ok(&["generate", "--seed", "2", "--n", "30", "--out", p(&tb)]);
    ok(&[
        "train",
        "--treebank",
        p(&tb),
        "--out",
        p(&model),
        "--dim",
        "6",
        "--epochs",
        "2",
    ]);
    ok(&["calibrate", "--model", p(&model), "--treebank", p(&tb)]);

    let sentence = "If the user is logged in, the session shall be saved.";
    let mut registry = ModelRegistry::new();
    registry
        .insert(LoadedModel::from_checkpoint(Checkpoint::load(&model).unwrap(), model.clone()).unwrap())
        .unwrap();
    let app = router(Arc::new(registry));

    for (beam, temp) in [("1", false), ("3", true)] {
        let mut args = vec![
            "parse",
            "--model",
            p(&model),
            "--sentence",
            sentence,
            "--beam",
            beam,
            "--format",
            "json",
        ];
        if temp {
            args.push("--temperature");
        }
        let cli_out = ok(&args);
        let cli_tree = serde_json::to_string(&serde_json::from_str::<Value>(&cli_out).unwrap()["tree"]).unwrap();

        let body = json!({"sentence": sentence, "beam_width": beam.parse::<usize>().unwrap(), "use_temperature": temp});
        let req = Request::post("/api/parse")
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(body.to_string()))
            .unwrap();
        let resp = app.clone().oneshot(req).await.unwrap();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let http_text = String::from_utf8(bytes.to_vec()).unwrap();
        let http_tree = serde_json::to_string(&serde_json::from_str::<Value>(&http_text).unwrap()["tree"]).unwrap();

        assert_eq!(cli_tree, http_tree);
        assert!(cli_out.contains(&cli_tree));
        assert!(http_text.contains(&cli_tree));
    }
}

#[test]
fn parses_precomputed_leaf_vectors() {
    let dir = tempfile::tempdir().unwrap();
    let tb = dir.path().join("tb.txt");
    let model = dir.path().join("m.json");
    let vectors = dir.path().join("v.json");
    ok(&["generate", "--n", "20", "--out", p(&tb)]);
    ok(&[
        "train",
        "--treebank",
        p(&tb),
        "--out",
        p(&model),
        "--dim",
        "4",
        "--epochs",
        "1",
    ]);
    let doc = json!({
        "tokens": ["set", "to", "true"],
        "vectors": [[0.1, 0.2, 0.3, 0.4], [0.0, -0.1, 0.5, 0.2], [0.3, 0.3, -0.2, 0.1]],
    });
    std::fs::write(&vectors, doc.to_string()).unwrap();
    let out = ok(&[
        "parse",
        "--model",
        p(&model),
        "--vectors",
        p(&vectors),
        "--format",
        "json",
        "--beam",
        "2",
    ]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(json_leaf_tokens(&v["tree"]), ["set", "to", "true"]);

    let wrong = json!({"tokens": ["a"], "vectors": [[0.1, 0.2]]});
    std::fs::write(&vectors, wrong.to_string()).unwrap();
    assert_eq!(
        cate(&["parse", "--model", p(&model), "--vectors", p(&vectors)])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn trains_on_pretrained_vectors_with_named_variant() {
    let dir = tempfile::tempdir().unwrap();
    let tb = dir.path().join("tb.txt");
    let vecs = dir.path().join("vecs.txt");
    let model = dir.path().join("glove.json");
    ok(&["generate", "--n", "20", "--out", p(&tb)]);
    std::fs::write(&vecs, "2 3\nthe 0.1 0.2 0.3\nsystem -0.2 0.0 0.4\n").unwrap();
    ok(&[
        "train",
        "--treebank",
        p(&tb),
        "--out",
        p(&model),
        "--embeddings",
        p(&vecs),
        "--variant",
        "glove",
        "--epochs",
        "1",
    ]);
    let ckpt = Checkpoint::load(&model).unwrap();
    assert_eq!(ckpt.params.dim(), 3);
    assert_eq!(ckpt.params.embedding_variant, "glove");
}

#[test]
fn exit_codes() {
    assert_eq!(cate(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(cate(&["train"]).status.code(), Some(1));
    assert_eq!(cate(&["--version"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.txt");
    let out = dir.path().join("m.json");
    assert_eq!(
        cate(&["train", "--treebank", p(&missing), "--out", p(&out)])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(cate(&["serve", "--model-dir", p(dir.path())]).status.code(), Some(2));
    let bad = cate(&["parse", "--model", p(&out), "--sentence", "x"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(!bad.stderr.is_empty());
}
