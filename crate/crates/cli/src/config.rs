//! Declarative TOML configs for the CLI commands.
//!
//! Unknown keys are rejected everywhere so typos fail loudly instead of
//! silently running with defaults.

use std::path::PathBuf;

use serde::Deserialize;

use mmseeker::harness::ExperimentSpec;
use mmseeker::synth::{GammaPreset, SynthConfig};

/// `gen` command: a synthetic dataset description plus the output path.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub dataset: SynthConfig,
    pub output: GenOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenOutput {
    pub path: PathBuf,
}

/// `train` command: dataset in, per-channel codebooks (and optionally the
/// distance table) out.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub train: TrainSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub dataset: PathBuf,
    #[serde(default = "default_n_subvectors")]
    pub n_subvectors: usize,
    #[serde(default = "default_cardinality")]
    pub cardinality: usize,
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Also build and persist the cross-modal distance table.
    #[serde(default)]
    pub table: bool,
    #[serde(default)]
    pub half_table: bool,
}

fn default_n_subvectors() -> usize {
    8
}

fn default_cardinality() -> usize {
    512
}

/// `bench` command: one or more experiments plus output settings.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Log filter (error|warn|info|debug|trace); RUST_LOG overrides.
    #[serde(default)]
    pub log: Option<String>,
    #[serde(rename = "experiment")]
    pub experiments: Vec<ExperimentSpec>,
}

/// `verify` command: self-consistency checks over trained artifacts.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub verify: VerifySection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub dataset: PathBuf,
    /// One codebook file per channel, channel order.
    pub codebooks: Vec<PathBuf>,
    /// Optional persisted table to check against the codebooks.
    #[serde(default)]
    pub table: Option<PathBuf>,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Fusion weights; defaults to the dataset metadata's gamma.
    #[serde(default)]
    pub gamma: Option<GammaPreset>,
}

fn default_pairs() -> usize {
    200
}

pub fn load_toml<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| anyhow::anyhow!("malformed config {}: {e}", path.display()))
}
