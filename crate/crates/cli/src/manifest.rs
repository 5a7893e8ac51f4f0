//! Run manifests: every command that writes files also records exactly how
//! it was invoked, so a run can be reproduced byte-for-byte later.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use gslr_core::restore::SolverConfig;

/// Parameters of a degradation run, by mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DegradeParams {
    Mask {
        fraction: f64,
    },
    Text {
        threshold: f64,
    },
    Cs {
        block: usize,
        ratio: f64,
    },
}

/// Parameters of a spectrum-analysis run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisParams {
    pub row: usize,
    pub col: usize,
    pub tau_nnm: f64,
    pub tau_wnnm: f64,
    pub tau_snm: f64,
    pub tau_wsnm: f64,
    pub weight_eps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub config: SolverConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degradation: Option<DegradeParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisParams>,
}

impl RunManifest {
    pub fn new(command: &str, config: SolverConfig) -> Self {
        Self {
            tool: "gslr".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed: config.seed,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            config,
            degradation: None,
            noise_sigma: None,
            analysis: None,
        }
    }

    pub fn input(mut self, key: &str, path: impl AsRef<Path>) -> Self {
        self.inputs
            .insert(key.into(), path.as_ref().display().to_string());
        self
    }

    pub fn output(mut self, key: &str, path: impl AsRef<Path>) -> Self {
        self.outputs
            .insert(key.into(), path.as_ref().display().to_string());
        self
    }

    pub fn save(&self, path: impl AsRef<Path>) -> anyhow::Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n")
            .with_context(|| format!("writing manifest {}", path.display()))
    }

    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("parsing manifest {}", path.display()))
    }
}
