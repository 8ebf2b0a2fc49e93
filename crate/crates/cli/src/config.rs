use std::path::Path;

use anyhow::{Context, Result};
use phaselab::{CascadeConfig, InterferenceParams, LaserParams, SimGrid};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::Value;

/// Parameters a `--params` file may set. Every section is optional and may
/// be partial; missing fields keep their defaults.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ParamFile {
    pub laser: LaserParams,
    pub grid: SimGrid,
    pub interference: InterferenceParams,
    pub cascade: CascadeConfig,
}

/// Raised for malformed command input, as opposed to a failing computation.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    laser: Option<Value>,
    grid: Option<Value>,
    interference: Option<Value>,
    cascade: Option<Value>,
}

/// Overlays `patch` on the serialized defaults so unknown keys and wrong
/// types are still rejected by the target schema.
fn overlay<T: Serialize + DeserializeOwned>(base: &T, patch: Option<Value>, section: &str) -> Result<T> {
    let Some(patch) = patch else {
        return Ok(serde_json::from_value(serde_json::to_value(base)?)?);
    };
    let Value::Object(fields) = patch else {
        return Err(usage(format!("section `{section}` must be an object")));
    };
    let mut merged = serde_json::to_value(base)?;
    if let Value::Object(m) = &mut merged {
        m.extend(fields);
    }
    serde_json::from_value(merged).map_err(|e| usage(format!("section `{section}`: {e}")))
}

impl ParamFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let raw: RawFile =
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let d = Self::default();
        Ok(Self {
            laser: overlay(&d.laser, raw.laser, "laser")?,
            grid: overlay(&d.grid, raw.grid, "grid")?,
            interference: overlay(&d.interference, raw.interference, "interference")?,
            cascade: overlay(&d.cascade, raw.cascade, "cascade")?,
        })
    }
}
