//! Experiment and device configuration files.
//!
//! Configs are TOML. Device files use Hz and seconds; they are converted to
//! angular units when loaded. Parse errors carry the TOML line and column.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sideband_core::hz;
use sideband_core::model::{coupling_from_chi, SystemParams, T2Kind};

/// Version of the config and report layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Device file shipped with the binary.
pub const REFERENCE_DEVICE_TOML: &str = include_str!("../defaults/reference_device.toml");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    FloquetScan,
    SidebandRabi,
    PulseTrain,
    FockPrep,
    VacFock,
    Noon,
    BinomialEncode,
    Tomography,
    Reset,
    Thermal,
    ErrorBudget,
    LawEberlyCompare,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 12] = [
        ExperimentKind::FloquetScan,
        ExperimentKind::SidebandRabi,
        ExperimentKind::PulseTrain,
        ExperimentKind::FockPrep,
        ExperimentKind::VacFock,
        ExperimentKind::Noon,
        ExperimentKind::BinomialEncode,
        ExperimentKind::Tomography,
        ExperimentKind::Reset,
        ExperimentKind::Thermal,
        ExperimentKind::ErrorBudget,
        ExperimentKind::LawEberlyCompare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::FloquetScan => "floquet_scan",
            ExperimentKind::SidebandRabi => "sideband_rabi",
            ExperimentKind::PulseTrain => "pulse_train",
            ExperimentKind::FockPrep => "fock_prep",
            ExperimentKind::VacFock => "vac_fock",
            ExperimentKind::Noon => "noon",
            ExperimentKind::BinomialEncode => "binomial_encode",
            ExperimentKind::Tomography => "tomography",
            ExperimentKind::Reset => "reset",
            ExperimentKind::Thermal => "thermal",
            ExperimentKind::ErrorBudget => "error_budget",
            ExperimentKind::LawEberlyCompare => "law_eberly_compare",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Top level of an experiment config file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    /// Device file, relative to the config file. The bundled reference
    /// device is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Output directory, relative to the config file.
    pub output_dir: PathBuf,
    /// Experiment-specific settings; checked against the experiment's schema.
    #[serde(default)]
    pub params: toml::Table,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmonSection {
    pub ge_frequency_hz: f64,
    pub ef_frequency_hz: f64,
    pub phi_zpt: f64,
    pub levels: usize,
    pub t1_s: f64,
    pub t2_echo_s: f64,
    pub t2_ramsey_s: f64,
    pub t1_ef_s: f64,
    pub t2_gf_echo_s: f64,
    pub t2_gf_ramsey_s: f64,
    #[serde(default)]
    pub t2_kind: T2Kind,
    pub thermal_population: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutSection {
    pub frequency_hz: f64,
    pub chi_hz: f64,
    /// Photon lifetime 1/κ.
    pub lifetime_s: f64,
    pub thermal_population: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSection {
    pub frequency_hz: f64,
    pub chi_e_hz: f64,
    pub chi_f_hz: f64,
    pub t1_s: f64,
    pub t2_s: f64,
    pub thermal_population: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling_hz: Option<f64>,
    #[serde(default)]
    pub kerr_hz: f64,
}

/// Device description in laboratory units.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceFile {
    pub transmon: TransmonSection,
    pub readout: ReadoutSection,
    pub modes: Vec<ModeSection>,
}

impl DeviceFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| anyhow::anyhow!("{e}"))
    }

    pub fn to_params(&self) -> Result<SystemParams> {
        let t = &self.transmon;
        let omega_q = hz(t.ge_frequency_hz);
        let anharm_k = hz(t.ef_frequency_hz - t.ge_frequency_hz);
        let mut couplings_g = Vec::with_capacity(self.modes.len());
        for (i, m) in self.modes.iter().enumerate() {
            let g = match m.coupling_hz {
                Some(g) => hz(g),
                None => coupling_from_chi(hz(m.chi_e_hz), omega_q - hz(m.frequency_hz), anharm_k)
                    .with_context(|| format!("modes[{i}]: cannot invert chi_e_hz into a coupling"))?,
            };
            couplings_g.push(g);
        }
        let col = |f: fn(&ModeSection) -> f64| self.modes.iter().map(f).collect::<Vec<_>>();
        let params = SystemParams {
            omega_q,
            anharm_k,
            phi_zpt: t.phi_zpt,
            transmon_dim: t.levels,
            mode_freqs: col(|m| hz(m.frequency_hz)),
            couplings_g,
            chi_e: col(|m| hz(m.chi_e_hz)),
            chi_f: col(|m| hz(m.chi_f_hz)),
            mode_kerr: col(|m| hz(m.kerr_hz)),
            t1_transmon: t.t1_s,
            t2_transmon: t.t2_echo_s,
            t2_star_transmon: t.t2_ramsey_s,
            t1_ef: t.t1_ef_s,
            t2_gf: t.t2_gf_echo_s,
            t2_star_gf: t.t2_gf_ramsey_s,
            t2_kind: t.t2_kind,
            mode_t1: col(|m| m.t1_s),
            mode_t2: col(|m| m.t2_s),
            thermal_transmon: t.thermal_population,
            thermal_modes: col(|m| m.thermal_population),
            readout_freq: hz(self.readout.frequency_hz),
            readout_chi: hz(self.readout.chi_hz),
            readout_kappa: 1.0 / self.readout.lifetime_s,
            readout_thermal: self.readout.thermal_population,
        };
        Ok(params)
    }
}

/// A parsed, resolved experiment config.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub file: ConfigFile,
    /// Raw config text, kept for typed re-parsing of `params`.
    pub text: String,
    pub device_text: String,
    pub params: SystemParams,
    pub device_warnings: Vec<String>,
    pub output_dir: PathBuf,
}

impl LoadedConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_str(&text, base).with_context(|| format!("in {}", path.display()))
    }

    /// Parse `text`; relative paths resolve against `base`.
    pub fn from_str(text: &str, base: &Path) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| anyhow::anyhow!("{e}"))?;
        if file.schema_version != SCHEMA_VERSION {
            bail!("schema_version {} is not supported (expected {SCHEMA_VERSION})", file.schema_version);
        }
        let device_text = match &file.system {
            Some(p) => {
                let full = base.join(p);
                std::fs::read_to_string(&full).with_context(|| format!("system: reading {}", full.display()))?
            }
            None => REFERENCE_DEVICE_TOML.to_string(),
        };
        let device = DeviceFile::parse(&device_text).context("system file")?;
        let params = device.to_params()?;
        let device_warnings = params.validate().context("system file")?;
        let output_dir = base.join(&file.output_dir);
        Ok(Self { file, text: text.to_string(), device_text, params, device_warnings, output_dir })
    }

    /// The `[params]` table as the experiment's typed settings. Errors point
    /// at the offending line of the original file.
    pub fn typed_params<P: DeserializeOwned + Default>(&self) -> Result<P> {
        #[derive(Deserialize)]
        struct Wrapper<P> {
            #[serde(default)]
            params: Option<P>,
        }
        let w: Wrapper<P> = toml::from_str(&self.text).map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(w.params.unwrap_or_default())
    }
}

/// Template config for `kind` with every parameter at its default.
pub fn default_config_text(kind: ExperimentKind, params: toml::Table, system: Option<&str>) -> Result<String> {
    let file = ConfigFile {
        schema_version: SCHEMA_VERSION,
        experiment: kind,
        system: system.map(PathBuf::from),
        seed: 1,
        output_dir: PathBuf::from(format!("out/{}", kind.name())),
        params,
    };
    Ok(toml::to_string(&file)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_device_matches_reference() {
        let p = DeviceFile::parse(REFERENCE_DEVICE_TOML).unwrap().to_params().unwrap();
        let r = SystemParams::reference_device();
        let a = serde_json::to_value(&p).unwrap();
        let b = serde_json::to_value(&r).unwrap();
        fn close(a: &serde_json::Value, b: &serde_json::Value) -> bool {
            match (a, b) {
                (serde_json::Value::Number(x), serde_json::Value::Number(y)) => {
                    let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
                    (x - y).abs() <= 1e-12 * x.abs().max(y.abs())
                }
                (serde_json::Value::Array(x), serde_json::Value::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(x, y)| close(x, y)),
                (serde_json::Value::Object(x), serde_json::Value::Object(y)) => {
                    x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| close(v, w)))
                }
                _ => a == b,
            }
        }
        assert!(close(&a, &b));
    }

    #[test]
    fn unknown_top_level_key_is_reported_with_line() {
        let err = LoadedConfig::from_str("experiment = \"noon\"\noutput_dir = \"o\"\nsedd = 3\n", Path::new(".")).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("line 3") && msg.contains("sedd"), "{msg}");
    }
}
