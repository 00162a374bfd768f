//! Run provenance embedded in every artifact.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
}

/// Snapshot of the command, problem dimensions, seeds, and hyperparameters
/// that produced an artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub family: String,
    pub dims: Dims,
    pub seeds: BTreeMap<String, u64>,
    pub config: serde_json::Value,
    pub tool_version: String,
    pub timestamp_unix_s: u64,
}

impl RunManifest {
    pub fn new(
        command: &str,
        family: &str,
        dims: Dims,
        seeds: BTreeMap<String, u64>,
        config: serde_json::Value,
    ) -> Self {
        Self {
            command: command.to_string(),
            family: family.to_string(),
            dims,
            seeds,
            config,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix_s: timestamp(),
        }
    }
}

/// Current unix time, overridable via `SOURCE_DATE_EPOCH` (the reproducible
/// build convention) so identical flags and seed yield identical bytes.
pub fn timestamp() -> u64 {
    if let Ok(v) = std::env::var("SOURCE_DATE_EPOCH") {
        if let Ok(t) = v.trim().parse::<u64>() {
            return t;
        }
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
