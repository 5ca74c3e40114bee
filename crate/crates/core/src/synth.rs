//! Seeded synthetic multi-modal sequences with controlled per-channel norms.
//!
//! Every coordinate of channel m is drawn i.i.d. from N(mu_m, sigma_m²) using
//! one ChaCha12 stream per (channel, position) cell (see [`crate::rng`]), so
//! generation is byte-reproducible, order-independent, and parallelizable.
//! Target records for trial `t` come from the same per-channel distributions
//! at stream position `L + 1 + t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FusionWeights, MultiModalRecord, SequenceStore};
use crate::par;
use crate::rng::{fill_normal_f32, sequence_stream_id, stream_rng};

/// Built-in fusion-weight presets: equal spreads gamma uniformly, unequal uses
/// the ramped 0.1/0.2/0.3/0.4 split over query/text/image/attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaPreset {
    Equal,
    Unequal,
    Custom(Vec<f64>),
}

impl GammaPreset {
    /// Expands to per-channel gammas for `m_total` channels.
    pub fn expand(&self, m_total: usize) -> Result<Vec<f64>> {
        match self {
            GammaPreset::Equal => Ok(vec![1.0 / m_total as f64; m_total]),
            GammaPreset::Unequal => {
                if m_total != 4 {
                    return Err(Error::InvalidParameter(format!(
                        "unequal preset is defined for 4 channels, got {m_total}"
                    )));
                }
                Ok(vec![0.1, 0.2, 0.3, 0.4])
            }
            GammaPreset::Custom(g) => {
                if g.len() != m_total {
                    return Err(Error::InvalidParameter(format!(
                        "custom gamma has {} entries, expected {m_total}",
                        g.len()
                    )));
                }
                Ok(g.clone())
            }
        }
    }

    pub fn weights(&self, m_total: usize) -> Result<FusionWeights> {
        FusionWeights::from_gamma(&self.expand(m_total)?)
    }
}

/// Full description of one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub l: usize,
    pub dim: usize,
    pub m_total: usize,
    /// Per-channel coordinate means, canonical channel order
    /// (query, text, image, attributes).
    pub mu: Vec<f64>,
    /// Per-channel coordinate standard deviations.
    pub sigma: Vec<f64>,
    pub gamma: GammaPreset,
    pub seed: u64,
}

impl SynthConfig {
    /// The different-norm group: query/attribute/text/image coordinate means
    /// 0.25 / 0.5 / 1.0 / 2.0 with unit sigma. In canonical channel order
    /// (query, text, image, attributes) that is mu = [0.25, 1.0, 2.0, 0.5].
    pub fn different_norms(l: usize, dim: usize, gamma: GammaPreset, seed: u64) -> Self {
        Self {
            l,
            dim,
            m_total: 4,
            mu: vec![0.25, 1.0, 2.0, 0.5],
            sigma: vec![1.0; 4],
            gamma,
            seed,
        }
    }

    /// The same-norm control group: every channel mean 1.0, unit sigma.
    pub fn same_norms(l: usize, dim: usize, gamma: GammaPreset, seed: u64) -> Self {
        Self {
            l,
            dim,
            m_total: 4,
            mu: vec![1.0; 4],
            sigma: vec![1.0; 4],
            gamma,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 {
            return Err(Error::InvalidParameter("L must be at least 1".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidParameter("dim must be at least 1".into()));
        }
        if self.m_total == 0 {
            return Err(Error::InvalidParameter(
                "need at least one channel".into(),
            ));
        }
        if self.mu.len() != self.m_total || self.sigma.len() != self.m_total {
            return Err(Error::InvalidParameter(format!(
                "mu/sigma lengths {}/{} do not match {} channels",
                self.mu.len(),
                self.sigma.len(),
                self.m_total
            )));
        }
        if self.sigma.iter().any(|&s| s < 0.0 || !s.is_finite())
            || self.mu.iter().any(|&m| !m.is_finite())
        {
            return Err(Error::InvalidParameter(
                "mu must be finite, sigma finite and nonnegative".into(),
            ));
        }
        self.gamma.expand(self.m_total)?;
        Ok(())
    }

    pub fn fusion_weights(&self) -> Result<FusionWeights> {
        self.gamma.weights(self.m_total)
    }
}

fn draw_channels(config: &SynthConfig, position: usize) -> Vec<f32> {
    let mut flat = vec![0.0f32; config.m_total * config.dim];
    for (ch, slice) in flat.chunks_mut(config.dim).enumerate() {
        let mut rng = stream_rng(config.seed, sequence_stream_id(ch, position));
        fill_normal_f32(&mut rng, config.mu[ch], config.sigma[ch], slice);
    }
    flat
}

/// Generates the sequence described by `config`.
pub fn generate(config: &SynthConfig) -> Result<SequenceStore> {
    config.validate()?;
    let stride = config.m_total * config.dim;
    let rows = par::map_indexed(config.l, |idx| draw_channels(config, idx + 1));
    let mut data = Vec::with_capacity(config.l * stride);
    for row in rows {
        data.extend_from_slice(&row);
    }
    let query_ids = (0..config.l).map(|i| Some(i as u64 + 1)).collect();
    let item_ids = (0..config.l).map(|i| i as u64 + 1).collect();
    SequenceStore::from_parts(data, query_ids, item_ids, config.m_total, config.dim)
}

/// Draws the target record for one trial from the same distributions.
pub fn generate_target(config: &SynthConfig, trial: usize) -> Result<MultiModalRecord> {
    config.validate()?;
    let position = config.l + 1 + trial;
    let flat = draw_channels(config, position);
    let channels = flat.chunks(config.dim).map(<[f32]>::to_vec).collect();
    Ok(MultiModalRecord::new(
        position as u32,
        Some(position as u64),
        position as u64,
        channels,
    ))
}
