//! Indented plain-text rendering of a JSON parse tree, one node per line.

use std::fmt::Write as _;

use serde_json::Value;

pub fn ascii_tree(tree: &Value) -> String {
    let mut out = String::new();
    write_node(tree, 0, &mut out);
    out
}

fn span(node: &Value) -> String {
    match node.get("span").and_then(Value::as_array).map(Vec::as_slice) {
        Some([s, e]) => format!("[{s},{e})"),
        _ => "[?]".to_string(),
    }
}

fn write_node(node: &Value, depth: usize, out: &mut String) {
    let indent = "  ".repeat(depth);
    if let Some(token) = node.get("token").and_then(Value::as_str) {
        let _ = writeln!(out, "{indent}{token} {}", span(node));
        return;
    }
    let label = node.get("label").and_then(Value::as_str).unwrap_or("?");
    let prob = node.get("prob").and_then(Value::as_f64).unwrap_or(f64::NAN);
    let _ = writeln!(out, "{indent}{label} {} p={prob:.4}", span(node));
    for child in node.get("children").and_then(Value::as_array).into_iter().flatten() {
        write_node(child, depth + 1, out);
    }
}
