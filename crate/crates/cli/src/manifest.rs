//! Run manifest sidecars: `<output stem>.manifest.json` next to each primary output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use newton_scheme::scenario::{NoiseSpec, ScenarioSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub command: String,
    /// Scenario the data originate from, carried forward through `fit`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    pub config: BTreeMap<String, Value>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            version: MANIFEST_VERSION,
            command: command.to_string(),
            scenario: None,
            noise: None,
            config: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
        }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        self.config
            .insert(key.to_string(), serde_json::to_value(value).expect("config values serialize"));
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    /// The manifest stored beside `output`, if there is one.
    pub fn read_beside(output: &Path) -> Result<Option<Self>> {
        let path = sidecar_path(output);
        if !path.is_file() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let m = serde_json::from_str(&text).with_context(|| format!("malformed manifest {}", path.display()))?;
        Ok(Some(m))
    }
}

/// `dir/name.ext` → `dir/name.manifest.json`.
pub fn sidecar_path(output: &Path) -> PathBuf {
    sibling(output, "manifest.json")
}

/// `dir/name.ext` → `dir/name.<suffix>`.
pub fn sibling(output: &Path, suffix: &str) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    output.with_file_name(format!("{stem}.{suffix}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_names() {
        assert_eq!(sidecar_path(Path::new("out/run.csv")), PathBuf::from("out/run.manifest.json"));
        assert_eq!(sibling(Path::new("model.json"), "residuals.csv"), PathBuf::from("model.residuals.csv"));
    }

    #[test]
    fn round_trip() {
        let mut m = RunManifest::new("generate");
        m.scenario = Some(ScenarioSpec::regime_switch(1.0, -9.8, 5.0, 10.0, 100.0));
        m.noise = Some(NoiseSpec { sigma: 0.1, seed: 7 });
        m.set("rate", 100.0);
        m.outputs.push("a.csv".into());
        m.seed = Some(7);
        let back: RunManifest = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }
}
