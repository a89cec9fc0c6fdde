//! Experiment configuration: JSON file keys mirror the struct fields and
//! every key can be overridden from the command line (flags win).

use std::path::PathBuf;

use asht_core::instance::GenMode;
use asht_core::policy::PolicySpec;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceSource {
    File { path: PathBuf },
    Generate { generate: GenerateSpec },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateSpec {
    pub hyps: usize,
    pub acts: usize,
    pub mode: String,
    pub seed: u64,
}

impl GenerateSpec {
    pub fn gen_mode(&self) -> anyhow::Result<GenMode> {
        parse_mode(&self.mode)
    }
}

/// `uniform01` or `grid:K`.
pub fn parse_mode(s: &str) -> anyhow::Result<GenMode> {
    if s == "uniform01" {
        return Ok(GenMode::Uniform01);
    }
    if let Some(k) = s.strip_prefix("grid:") {
        let k: u32 = k.parse()?;
        return Ok(GenMode::Grid(k));
    }
    anyhow::bail!("unknown generation mode `{s}` (expected uniform01 or grid:K)")
}

fn default_reps() -> u64 {
    300
}

fn default_reference() -> String {
    "random".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instances: Vec<InstanceSource>,
    pub policies: Vec<PolicySpec>,
    pub deltas: Vec<f64>,
    #[serde(default = "default_reps")]
    pub replications: u64,
    #[serde(default)]
    pub master_seed: Option<u64>,
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub out_csv: Option<PathBuf>,
    #[serde(default)]
    pub out_metrics: Option<PathBuf>,
    #[serde(default = "default_reference")]
    pub reference: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            instances: Vec::new(),
            policies: Vec::new(),
            deltas: Vec::new(),
            replications: default_reps(),
            master_seed: None,
            threads: 0,
            out_csv: None,
            out_metrics: None,
            reference: default_reference(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.instances.is_empty() {
            anyhow::bail!("no instances configured");
        }
        if self.policies.is_empty() {
            anyhow::bail!("no policies configured");
        }
        if self.deltas.is_empty() {
            anyhow::bail!("no deltas configured");
        }
        for d in &self.deltas {
            if !(*d > 0.0 && *d < 0.5) {
                anyhow::bail!("delta {d} outside (0, 0.5)");
            }
        }
        if self.replications < 1 {
            anyhow::bail!("replications must be at least 1");
        }
        Ok(())
    }
}
