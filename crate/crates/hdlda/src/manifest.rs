//! Run manifest: what ran, with which configuration, and what it produced.
//! Written after every run, including failed ones.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::ingest::LabelAssignment;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config: RunConfig,
    pub config_hash: String,
    pub started_at: String,
    pub elapsed_s: f64,
    pub tool_version: String,
    pub outputs: Vec<String>,
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label_mapping: Option<Vec<LabelAssignment>>,
}

/// Tracks files written during a run.
#[derive(Debug)]
pub struct RunRecord {
    dir: PathBuf,
    started_at: String,
    clock: Instant,
    outputs: Vec<String>,
    pub label_mapping: Option<Vec<LabelAssignment>>,
}

impl RunRecord {
    pub fn start(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            started_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            clock: Instant::now(),
            outputs: Vec::new(),
            label_mapping: None,
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Full path of an output file, recorded in the manifest.
    pub fn output(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.dir.join(name)
    }

    pub fn finish(self, cfg: &RunConfig, error: Option<String>) -> std::io::Result<Manifest> {
        let manifest = Manifest {
            seed: cfg.seed,
            config: cfg.clone(),
            config_hash: cfg.hash(),
            started_at: self.started_at,
            elapsed_s: self.clock.elapsed().as_secs_f64(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: self.outputs,
            error,
            label_mapping: self.label_mapping,
        };
        std::fs::create_dir_all(&self.dir)?;
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        std::fs::write(self.dir.join(MANIFEST_FILE), json + "\n")?;
        Ok(manifest)
    }
}
