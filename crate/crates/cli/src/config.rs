//! JSON inputs and exit-code classification.

use std::fmt;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::Value;

use mfcn::graph::{GraphConfig, GRAPH_KEYS};
use mfcn::harness::{ExperimentConfig, EXPERIMENT_KEYS};
use mfcn::mfcn::{NetworkSpec, LAYER_KEYS, NETWORK_KEYS};

/// Bad flags or configuration; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<UsageError>() || cause.is::<serde_json::Error>() {
            return 2;
        }
        if let Some(err) = cause.downcast_ref::<mfcn::Error>() {
            return if is_usage(err) { 2 } else { 1 };
        }
    }
    1
}

fn is_usage(e: &mfcn::Error) -> bool {
    use mfcn::Error::*;
    match e {
        InvalidArgument(_) | Parse { .. } | Config(_) | DimensionMismatch { .. } | Normalization { .. } | Json(_) => true,
        Layer { source, .. } => is_usage(source),
        _ => false,
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| UsageError(format!("{}: malformed JSON: {e}", path.display())).into())
}

fn unknown_keys(value: &Value, allowed: &[&str], prefix: &str, found: &mut Vec<String>) {
    if let Value::Object(map) = value {
        found.extend(map.keys().filter(|k| !allowed.contains(&k.as_str())).map(|k| format!("{prefix}{k}")));
    }
}

fn reject_unknown(path: &Path, found: Vec<String>, allowed: &[&str]) -> Result<()> {
    if found.is_empty() {
        return Ok(());
    }
    Err(UsageError(format!(
        "{}: unknown keys {} (allowed: {})",
        path.display(),
        found.join(", "),
        allowed.join(", ")
    ))
    .into())
}

fn decode<T: serde::de::DeserializeOwned>(path: &Path, value: Value) -> Result<T> {
    serde_json::from_value(value).map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
}

pub fn load_graph_config(path: &Path) -> Result<GraphConfig> {
    let value = read_json(path)?;
    let mut found = Vec::new();
    unknown_keys(&value, GRAPH_KEYS, "", &mut found);
    reject_unknown(path, found, GRAPH_KEYS)?;
    decode(path, value)
}

pub fn load_experiment_config(path: &Path) -> Result<ExperimentConfig> {
    let value = read_json(path)?;
    let mut found = Vec::new();
    unknown_keys(&value, EXPERIMENT_KEYS, "", &mut found);
    if let Some(g) = value.get("graph") {
        unknown_keys(g, GRAPH_KEYS, "graph.", &mut found);
    }
    reject_unknown(path, found, EXPERIMENT_KEYS)?;
    decode(path, value)
}

pub fn load_network(path: &Path) -> Result<NetworkSpec> {
    let value = read_json(path)?;
    let mut found = Vec::new();
    unknown_keys(&value, NETWORK_KEYS, "", &mut found);
    if let Some(Value::Array(layers)) = value.get("layers") {
        for (i, layer) in layers.iter().enumerate() {
            unknown_keys(layer, LAYER_KEYS, &format!("layers[{i}]."), &mut found);
        }
    }
    let mut allowed = NETWORK_KEYS.to_vec();
    allowed.extend(LAYER_KEYS.iter().map(|k| *k));
    reject_unknown(path, found, &allowed)?;
    Ok(NetworkSpec::from_json(&value.to_string()).with_context(|| format!("network {}", path.display()))?)
}
