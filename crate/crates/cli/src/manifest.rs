use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;

/// Record of one invocation, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub wall_seconds: f64,
}

pub struct ManifestBuilder {
    started: Instant,
    manifest: RunManifest,
}

impl ManifestBuilder {
    pub fn new(subcommand: &str) -> Self {
        Self {
            started: Instant::now(),
            manifest: RunManifest {
                subcommand: subcommand.to_string(),
                version: crate::commands::VERSION_LINE.to_string(),
                config: serde_json::Value::Null,
                seeds: BTreeMap::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                wall_seconds: 0.0,
            },
        }
    }

    pub fn config(mut self, c: impl Serialize) -> Self {
        self.manifest.config = serde_json::to_value(c).unwrap_or(serde_json::Value::Null);
        self
    }

    pub fn seed(mut self, name: &str, seed: u64) -> Self {
        self.manifest.seeds.insert(name.to_string(), seed);
        self
    }

    pub fn input(mut self, p: &Path) -> Self {
        self.manifest.inputs.push(p.to_path_buf());
        self
    }

    pub fn output(mut self, p: &Path) -> Self {
        self.manifest.outputs.push(p.to_path_buf());
        self
    }

    /// Writes the manifest to `path`.
    pub fn write(mut self, path: &Path) -> anyhow::Result<()> {
        self.manifest.wall_seconds = self.started.elapsed().as_secs_f64();
        let text = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

/// `out.jsonl` -> `out.jsonl.manifest.json`.
pub fn beside(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}
