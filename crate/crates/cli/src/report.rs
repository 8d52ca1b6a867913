//! Run reports and output files.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sideband_core::io::Table;

use crate::config::{LoadedConfig, SCHEMA_VERSION};
use crate::experiments::ExperimentOutput;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Versions {
    pub cli: String,
    pub core: String,
}

/// Wall-clock data. The only part of a report that differs between
/// identical runs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Timings {
    pub total_s: f64,
    pub experiment_s: f64,
    /// Worker count requested through the environment, if any.
    pub workers: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Metadata {
    /// SHA-256 over the config text and the device file text.
    pub config_hash: String,
    pub seed: u64,
    pub versions: Versions,
    pub timings: Timings,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub experiment: String,
    pub metadata: Metadata,
    /// Experiment parameters with defaults filled in.
    pub params: serde_json::Value,
    pub tables: Vec<Table>,
    /// Files written next to the report.
    pub files: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn config_hash(cfg: &LoadedConfig) -> String {
    let mut h = Sha256::new();
    h.update(cfg.text.as_bytes());
    h.update([0u8]);
    h.update(cfg.device_text.as_bytes());
    format!("{:x}", h.finalize())
}

impl RunReport {
    pub fn new(cfg: &LoadedConfig, out: ExperimentOutput, timings: Timings) -> Self {
        let mut files: Vec<String> = out.tables.iter().map(|t| format!("{}.csv", t.name)).collect();
        files.extend(out.artifacts.iter().map(|(n, _)| n.clone()));
        let mut warnings = cfg.device_warnings.clone();
        warnings.extend(out.warnings);
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: cfg.file.experiment.name().to_string(),
            metadata: Metadata {
                config_hash: config_hash(cfg),
                seed: cfg.file.seed,
                versions: Versions { cli: env!("CARGO_PKG_VERSION").to_string(), core: sideband_core::VERSION.to_string() },
                timings,
            },
            params: out.params,
            tables: out.tables,
            files,
            warnings,
        }
    }

    /// Write every table as CSV, the artifacts, and `report.json` into `dir`.
    pub fn write(&self, dir: &Path, artifacts: &[(String, Vec<u8>)]) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for t in &self.tables {
            let path = dir.join(format!("{}.csv", t.name));
            let f = std::fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
            t.write_csv(std::io::BufWriter::new(f))?;
        }
        for (name, bytes) in artifacts {
            std::fs::write(dir.join(name), bytes).with_context(|| format!("writing {name}"))?;
        }
        let f = std::fs::File::create(dir.join("report.json"))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }
}
