//! Config assembly: defaults, then the config file, then `--set` overrides.

use std::path::Path;

use churnlab::harness::ExperimentConfig;
use churnlab::{Error, Result};
use serde_json::Value;

/// Parses `key=value`; the value is JSON when it parses as JSON and a plain
/// string otherwise.
pub fn parse_assignment(raw: &str) -> Result<(String, Value)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("override {raw:?} is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Usage(format!("override {raw:?} has an empty key")));
    }
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    Ok((key.to_string(), value))
}

/// Replaces the value at dotted `key`, which must already exist.
pub fn apply(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = root;
    let mut walked = Vec::new();
    for part in key.split('.') {
        walked.push(part);
        node = match node {
            Value::Object(map) => map.get_mut(part),
            _ => None,
        }
        .ok_or_else(|| Error::Usage(format!("unknown config key {:?}", walked.join("."))))?;
    }
    *node = value;
    Ok(())
}

pub fn load_config(path: Option<&Path>, sets: &[String]) -> Result<ExperimentConfig> {
    let base = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<ExperimentConfig>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => ExperimentConfig::default(),
    };
    let mut value = serde_json::to_value(&base)?;
    for raw in sets {
        let (key, v) = parse_assignment(raw)?;
        apply(&mut value, &key, v)?;
    }
    serde_json::from_value(value).map_err(|e| Error::Config(format!("after overrides: {e}")))
}
