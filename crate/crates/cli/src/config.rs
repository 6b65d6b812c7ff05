//! Layered configuration: preset defaults, then a TOML file, then flags.
//! Layers are merged as JSON trees and deserialized once, so unknown keys in
//! any layer are rejected by the target type.

use std::path::Path;

use onedatum::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// Recursively overlay `top` onto `base`. Objects merge key by key; every
/// other value replaces.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub fn read_toml(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Load { path: path.to_path_buf(), reason: e.to_string() })?;
    let t: toml::Value =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(serde_json::to_value(t)?)
}

/// Parse a flag value: TOML scalar/array/inline table if it parses, else a
/// bare string.
pub fn parse_value(raw: &str) -> Value {
    toml::from_str::<toml::Value>(&format!("v = {raw}"))
        .ok()
        .and_then(|t| t.get("v").cloned())
        .and_then(|v| serde_json::to_value(v).ok())
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Turn `a.b.c=value` into `{"a": {"b": {"c": value}}}`.
pub fn set_assignment(assign: &str) -> Result<Value> {
    let (key, raw) = assign
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--set expects key=value, got `{assign}`")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("bad --set key `{key}`")));
    }
    let mut v = parse_value(raw.trim());
    for part in key.rsplit('.') {
        let mut m = Map::new();
        m.insert(part.to_string(), v);
        v = Value::Object(m);
    }
    Ok(v)
}

/// Set `path` (dot separated) to `value` inside `tree`, creating objects.
pub fn put(tree: &mut Value, path: &str, value: Value) {
    let mut v = value;
    for part in path.rsplit('.') {
        let mut m = Map::new();
        m.insert(part.to_string(), v);
        v = Value::Object(m);
    }
    merge(tree, v);
}

/// Resolve `preset` <- `file` <- `flags` into `T`.
pub fn resolve<T: Serialize + DeserializeOwned>(preset: &T, file: Option<&Path>, flags: Value) -> Result<T> {
    let mut tree = serde_json::to_value(preset)?;
    if let Some(f) = file {
        merge(&mut tree, read_toml(f)?);
    }
    merge(&mut tree, flags);
    serde_json::from_value(tree).map_err(|e| Error::Config(format!("invalid configuration: {e}")))
}
