//! Read-merge-write of the golden constants file.

use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value};

pub fn record(path: &Path, key: &str, value: f64, provenance: &str) -> std::io::Result<()> {
    let mut root: Map<String, Value> = match fs::read_to_string(path) {
        Ok(text) => serde_json::from_str(&text).unwrap_or_default(),
        Err(_) => Map::new(),
    };
    root.insert(
        key.to_string(),
        json!({ "value": value, "provenance": provenance }),
    );
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(&Value::Object(root))?;
    fs::write(path, text + "\n")
}
