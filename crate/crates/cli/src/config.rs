//! Run configuration: a JSON document with optional per-command blocks.
//! Unknown fields are rejected everywhere so typos fail loudly.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use wavetune_core::device::{ChannelPlan, DsdbrParams, SoaParams};
use wavetune_core::preemph::RegressionConfig;
use wavetune_core::pso::PsoConfig;
use wavetune_core::signal::AwgModel;
use wavetune_core::system::{PowerModelParams, SlotSpec};

use crate::CliError;

/// Device parameter sets, loadable inline or from a separate JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceConfig {
    pub soa: SoaParams,
    pub laser: DsdbrParams,
    pub channel_plan: ChannelPlan,
    pub awg_laser: AwgModel,
    pub awg_soa: AwgModel,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            soa: SoaParams::default(),
            laser: DsdbrParams::default(),
            channel_plan: ChannelPlan::default(),
            awg_laser: AwgModel::default_laser_awg(),
            awg_soa: AwgModel::default_soa_awg(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaserOptConfig {
    /// Channel subset for the switch matrix; the default five channels span
    /// the band. `--full` replaces this with the 21-channel test set.
    pub channels: Vec<u32>,
}

impl Default for LaserOptConfig {
    fn default() -> Self {
        Self {
            channels: vec![0, 30, 60, 91, 121],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub slot_ns: f64,
    /// Slot sequence; empty selects the default 4-slot scenario.
    pub assignment: Vec<SlotSpec>,
    pub soa_drive_path: Option<PathBuf>,
    pub preemph_table_path: Option<PathBuf>,
    pub tol_ghz: f64,
    pub flatness_db: f64,
    pub input_power_mw: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            slot_ns: 20.0,
            assignment: Vec::new(),
            soa_drive_path: None,
            preemph_table_path: None,
            tol_ghz: 5.0,
            flatness_db: 1.0,
            input_power_mw: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerConfig {
    pub n_min: u32,
    pub n_max: u32,
    pub params: PowerModelParams,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            n_min: 1,
            n_max: 366,
            params: PowerModelParams::default(),
        }
    }
}

/// Top-level run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Inline device parameters; ignored when `devices_path` is set.
    pub devices: DeviceConfig,
    pub devices_path: Option<PathBuf>,
    pub pso: PsoConfig,
    pub regression: RegressionConfig,
    pub laser_opt: LaserOptConfig,
    pub system: SystemConfig,
    pub power: PowerConfig,
    /// SOA input power for the gate optimization, in mW.
    pub soa_input_power_mw: f64,
    /// Slot duration for the gate optimization, in ns.
    pub soa_slot_ns: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out_dir: PathBuf::from("out"),
            devices: DeviceConfig::default(),
            devices_path: None,
            pso: PsoConfig::default(),
            regression: RegressionConfig::default(),
            laser_opt: LaserOptConfig::default(),
            system: SystemConfig::default(),
            power: PowerConfig::default(),
            soa_input_power_mw: 1.0,
            soa_slot_ns: 20.0,
        }
    }
}

impl RunConfig {
    /// Load the configuration file (when given), apply overrides, and
    /// resolve external device files.
    pub fn resolve(
        config_path: Option<&Path>,
        seed: Option<u64>,
        out: Option<&Path>,
    ) -> Result<Self, CliError> {
        let mut cfg = match config_path {
            None => RunConfig::default(),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::config(format!("cannot read config {}: {e}", path.display()))
                })?;
                serde_json::from_str(&text).map_err(|e| {
                    CliError::config(format!("invalid config {}: {e}", path.display()))
                })?
            }
        };
        if let Some(path) = cfg.devices_path.clone() {
            let base = config_path.and_then(|p| p.parent()).unwrap_or(Path::new(""));
            let full = if path.is_absolute() {
                path.clone()
            } else {
                base.join(&path)
            };
            let text = std::fs::read_to_string(&full).map_err(|e| {
                CliError::config(format!("cannot read device file {}: {e}", full.display()))
            })?;
            cfg.devices = serde_json::from_str(&text).map_err(|e| {
                CliError::config(format!("invalid device file {}: {e}", full.display()))
            })?;
        }
        if let Some(seed) = seed {
            cfg.seed = seed;
            cfg.pso.seed = seed;
        } else {
            cfg.pso.seed = cfg.seed;
        }
        if let Some(out) = out {
            cfg.out_dir = out.to_path_buf();
        }
        Ok(cfg)
    }
}
