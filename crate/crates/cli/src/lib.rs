//! Reusable pieces of the `gslr` command-line tool: the parameter presets,
//! the run manifest format, and config resolution.

pub mod manifest;
pub mod presets;

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use gslr_core::restore::{DeltaMode, SolverConfig};

/// A partial solver configuration; present fields override the base.
///
/// JSON config files deserialize into this, so a file may set any subset of
/// the solver parameters. A full manifest also parses: its `config` object
/// is used.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigPatch {
    pub patch: Option<usize>,
    pub group_size: Option<usize>,
    pub window: Option<usize>,
    pub stride: Option<usize>,
    pub rho: Option<f64>,
    pub p: Option<f64>,
    pub sigma: Option<f64>,
    pub eps_w: Option<f64>,
    pub eps_l: Option<f64>,
    pub iters: Option<usize>,
    pub seed: Option<u64>,
    pub gst_iters: Option<usize>,
    pub delta_mode: Option<DeltaMode>,
}

macro_rules! apply_fields {
    ($patch:expr, $cfg:expr, $($field:ident),+) => {
        $(if let Some(value) = $patch.$field {
            $cfg.$field = value;
        })+
    };
}

impl ConfigPatch {
    pub fn apply(&self, cfg: &mut SolverConfig) {
        apply_fields!(
            self, cfg, patch, group_size, window, stride, rho, p, sigma, eps_w, eps_l, iters,
            seed, gst_iters, delta_mode
        );
    }
}

/// Loads a config patch from a JSON file. Accepts either a bare config
/// object or a run manifest (whose `config` is reused).
pub fn load_config_patch(path: &Path) -> anyhow::Result<ConfigPatch> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    let config_value = match value.get("config") {
        Some(inner) => inner.clone(),
        None => value,
    };
    let patch: ConfigPatch = serde_json::from_value(config_value)
        .with_context(|| format!("interpreting config fields in {}", path.display()))?;
    Ok(patch)
}

/// Resolves the effective solver configuration.
///
/// Precedence, lowest to highest: built-in preset (or defaults), JSON
/// config file, individual command-line overrides.
pub fn resolve_config(
    preset: Option<&str>,
    config_file: Option<&Path>,
    flag_patch: &ConfigPatch,
) -> anyhow::Result<SolverConfig> {
    let mut cfg = match preset {
        Some(name) => match presets::lookup(name) {
            Some(cfg) => cfg,
            None => bail!(
                "unknown preset {name:?}; available: {}",
                presets::names().join(", ")
            ),
        },
        None => SolverConfig::default(),
    };
    if let Some(path) = config_file {
        load_config_patch(path)?.apply(&mut cfg);
    }
    flag_patch.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}
