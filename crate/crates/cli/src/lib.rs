//! Config-driven experiment runner for `sideband-core`.

pub mod config;
pub mod experiments;
pub mod report;

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use sideband_core::exec::{self, Executor};

pub use config::{ExperimentKind, LoadedConfig};
pub use report::RunReport;

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "SIDEBAND_WORKERS";

/// Worker count from [`WORKERS_ENV`], if set.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => bail!("{WORKERS_ENV} must be a positive integer, got {v:?}"),
        },
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => bail!("{WORKERS_ENV}: {e}"),
    }
}

/// Load, run and write the experiment described by the config at `path`.
pub fn run_path(path: &Path) -> Result<RunReport> {
    let start = Instant::now();
    let cfg = LoadedConfig::from_path(path)?;
    let workers = workers_from_env()?;
    let t0 = Instant::now();
    let out = exec::with_workers(workers.unwrap_or(0), || experiments::run_experiment(&cfg, Executor::default()))?;
    let experiment_s = t0.elapsed().as_secs_f64();
    let artifacts = out.artifacts.clone();
    let mut report = RunReport::new(&cfg, out, report::Timings { total_s: 0.0, experiment_s, workers });
    report.metadata.timings.total_s = start.elapsed().as_secs_f64();
    report.write(&cfg.output_dir, &artifacts).with_context(|| format!("output_dir {}", cfg.output_dir.display()))?;
    Ok(report)
}

/// Parse the config at `path` and its params; returns device warnings.
pub fn validate_path(path: &Path) -> Result<(LoadedConfig, Vec<String>)> {
    let cfg = LoadedConfig::from_path(path)?;
    experiments::check_params(&cfg).with_context(|| format!("in {}", path.display()))?;
    let w = cfg.device_warnings.clone();
    Ok((cfg, w))
}

/// Write the bundled device file and one default config per experiment.
pub fn export_defaults(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let device = "reference_device.toml";
    let mut written = vec![dir.join(device)];
    std::fs::write(&written[0], config::REFERENCE_DEVICE_TOML)?;
    for kind in ExperimentKind::ALL {
        let text = config::default_config_text(kind, experiments::default_params(kind)?, Some(device))?;
        let path = dir.join(format!("{}.toml", kind.name()));
        std::fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}
