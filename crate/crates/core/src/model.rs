//! Shared data model: channels, records, sequences, fusion weights, results.
//!
//! A behavior sequence is `L` aligned records, each carrying `M_total`
//! channel vectors of dimension `d`: channel 0 is the search query and the
//! remaining `M_total - 1` channels are item modalities (text, image,
//! attributes in the canonical 4-channel setup). Positions are 1-based.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topk::ScoredPosition;

/// Tolerance for "weights sum to one" checks on user input.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-6;

/// Index of one channel. Channel 0 is always the query channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelId(pub usize);

impl ChannelId {
    pub const QUERY: ChannelId = ChannelId(0);
}

/// Canonical channel names for the 4-channel configuration.
pub const CHANNEL_NAMES: [&str; 4] = ["query", "text", "image", "attributes"];

/// One sequence position: ids plus one vector per channel.
///
/// A browse-only behavior has no query; its `query_id` is `None` and its
/// channel-0 vector is all zeros, which contributes nothing to any inner
/// product.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiModalRecord {
    /// 1-based position in the sequence.
    pub position: u32,
    /// `None` marks the padded empty query of a browse behavior.
    pub query_id: Option<u64>,
    pub item_id: u64,
    channels: Vec<Vec<f32>>,
}

impl MultiModalRecord {
    pub fn new(
        position: u32,
        query_id: Option<u64>,
        item_id: u64,
        channels: Vec<Vec<f32>>,
    ) -> Self {
        Self {
            position,
            query_id,
            item_id,
            channels,
        }
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, m: usize) -> &[f32] {
        &self.channels[m]
    }

    pub fn channels(&self) -> &[Vec<f32>] {
        &self.channels
    }

    pub fn channels_mut(&mut self) -> &mut [Vec<f32>] {
        &mut self.channels
    }

    /// All channels concatenated into one `[m * d]` buffer.
    pub fn flat(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.channels.iter().map(Vec::len).sum());
        for c in &self.channels {
            out.extend_from_slice(c);
        }
        out
    }
}

/// Immutable aligned sequence with contiguous storage.
///
/// Layout is position-major, channel-second: record `l`'s channels occupy
/// `data[l * M * d .. (l + 1) * M * d]`, channel `m` at offset `m * d` within
/// that. Construction is single-writer; reads may be shared freely.
#[derive(Debug, Clone)]
pub struct SequenceStore {
    data: Vec<f32>,
    query_ids: Vec<Option<u64>>,
    item_ids: Vec<u64>,
    num_channels: usize,
    dim: usize,
}

impl SequenceStore {
    /// Packs validated records into contiguous storage.
    ///
    /// Records must already be in chronological order with positions 1..=L.
    pub fn from_records(records: Vec<MultiModalRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyInput("sequence has no records".into()));
        }
        let num_channels = records[0].num_channels();
        let dim = records[0].channel(0).len();
        let mut data = Vec::with_capacity(records.len() * num_channels * dim);
        let mut query_ids = Vec::with_capacity(records.len());
        let mut item_ids = Vec::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            if rec.position as usize != i + 1 {
                return Err(Error::InvalidParameter(format!(
                    "record {} has position {}, expected {}",
                    i,
                    rec.position,
                    i + 1
                )));
            }
            if rec.num_channels() != num_channels {
                return Err(Error::ChannelMismatch {
                    expected: num_channels,
                    got: rec.num_channels(),
                });
            }
            for ch in rec.channels() {
                if ch.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: ch.len(),
                    });
                }
                data.extend_from_slice(ch);
            }
            query_ids.push(rec.query_id);
            item_ids.push(rec.item_id);
        }
        Ok(Self {
            data,
            query_ids,
            item_ids,
            num_channels,
            dim,
        })
    }

    /// Builds a store directly from packed parts. `data` must hold
    /// `L * num_channels * dim` values in the documented layout.
    pub fn from_parts(
        data: Vec<f32>,
        query_ids: Vec<Option<u64>>,
        item_ids: Vec<u64>,
        num_channels: usize,
        dim: usize,
    ) -> Result<Self> {
        let l = item_ids.len();
        if l == 0 {
            return Err(Error::EmptyInput("sequence has no records".into()));
        }
        if data.len() != l * num_channels * dim || query_ids.len() != l {
            return Err(Error::InvalidParameter(format!(
                "packed data of {} values does not match L={} M={} d={}",
                data.len(),
                l,
                num_channels,
                dim
            )));
        }
        Ok(Self {
            data,
            query_ids,
            item_ids,
            num_channels,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.item_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_ids.is_empty()
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn raw_data(&self) -> &[f32] {
        &self.data
    }

    /// Channel `m` of the record at 0-based index `idx`.
    pub fn channel_vector(&self, idx: usize, m: usize) -> &[f32] {
        let stride = self.num_channels * self.dim;
        let base = idx * stride + m * self.dim;
        &self.data[base..base + self.dim]
    }

    /// All channels of record `idx` as one contiguous `[M * d]` slice.
    pub fn record_flat(&self, idx: usize) -> &[f32] {
        let stride = self.num_channels * self.dim;
        &self.data[idx * stride..(idx + 1) * stride]
    }

    /// Owned copy of record `idx` (0-based index; the record's position is
    /// `idx + 1`).
    pub fn record(&self, idx: usize) -> MultiModalRecord {
        let channels = (0..self.num_channels)
            .map(|m| self.channel_vector(idx, m).to_vec())
            .collect();
        MultiModalRecord::new(
            idx as u32 + 1,
            self.query_ids[idx],
            self.item_ids[idx],
            channels,
        )
    }

    pub fn query_id(&self, idx: usize) -> Option<u64> {
        self.query_ids[idx]
    }

    pub fn item_id(&self, idx: usize) -> u64 {
        self.item_ids[idx]
    }

    /// Diagnostic scan of the packed store: non-finite coordinates only, since
    /// shape violations cannot survive construction.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let stride = self.num_channels * self.dim;
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                out.push(Violation::NonFinite {
                    position: (i / stride) as u32 + 1,
                    channel: (i % stride) / self.dim,
                });
            }
        }
        out
    }
}

/// One problem found by sequence validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DimensionMismatch {
        position: u32,
        channel: usize,
        expected: usize,
        got: usize,
    },
    ChannelCountMismatch {
        position: u32,
        expected: usize,
        got: usize,
    },
    NonFinite {
        position: u32,
        channel: usize,
    },
    DuplicatePosition {
        position: u32,
    },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::DimensionMismatch {
                position,
                channel,
                expected,
                got,
            } => write!(
                f,
                "position {position} channel {channel}: dimension {got}, expected {expected}"
            ),
            Violation::ChannelCountMismatch {
                position,
                expected,
                got,
            } => write!(f, "position {position}: {got} channels, expected {expected}"),
            Violation::NonFinite { position, channel } => {
                write!(f, "position {position} channel {channel}: non-finite value")
            }
            Violation::DuplicatePosition { position } => {
                write!(f, "position {position}: duplicate")
            }
        }
    }
}

/// Diagnostic pass over loose records before packing: reports dimension
/// mismatches, non-finite values, and duplicate positions. Empty iff valid.
pub fn validate_records(records: &[MultiModalRecord]) -> Vec<Violation> {
    let mut out = Vec::new();
    if records.is_empty() {
        return out;
    }
    let num_channels = records[0].num_channels();
    let dim = records[0].channel(0).len();
    let mut seen = std::collections::HashSet::new();
    for rec in records {
        if !seen.insert(rec.position) {
            out.push(Violation::DuplicatePosition {
                position: rec.position,
            });
        }
        if rec.num_channels() != num_channels {
            out.push(Violation::ChannelCountMismatch {
                position: rec.position,
                expected: num_channels,
                got: rec.num_channels(),
            });
            continue;
        }
        for (m, ch) in rec.channels().iter().enumerate() {
            if ch.len() != dim {
                out.push(Violation::DimensionMismatch {
                    position: rec.position,
                    channel: m,
                    expected: dim,
                    got: ch.len(),
                });
            }
            for v in ch {
                if !v.is_finite() {
                    out.push(Violation::NonFinite {
                        position: rec.position,
                        channel: m,
                    });
                    break;
                }
            }
        }
    }
    out
}

/// Per-channel merge weights for the weighted cross-modal score.
///
/// `gamma[0] = lambda` is the query share; `gamma[m] = (1 - lambda) * w_m` for
/// item channels. The gammas are nonnegative and sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    lambda: f64,
    item_weights: Vec<f64>,
    gamma: Vec<f64>,
}

impl FusionWeights {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn item_weights(&self) -> &[f64] {
        &self.item_weights
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn num_channels(&self) -> usize {
        self.gamma.len()
    }

    /// Builds weights from per-channel gammas (must be nonnegative, sum to 1
    /// within [`WEIGHT_SUM_TOLERANCE`]). The stored gammas are renormalized so
    /// they sum to 1 exactly up to floating-point rounding. A single-element
    /// gamma describes a query-only sequence.
    pub fn from_gamma(gamma: &[f64]) -> Result<Self> {
        if gamma.is_empty() {
            return Err(Error::InvalidParameter("empty gamma vector".into()));
        }
        if gamma.iter().any(|&g| !g.is_finite() || g < 0.0) {
            return Err(Error::InvalidParameter(
                "gamma weights must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = gamma.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "gamma weights sum to {sum}, expected 1"
            )));
        }
        let gamma: Vec<f64> = gamma.iter().map(|g| g / sum).collect();
        let lambda = gamma[0];
        let item_mass = 1.0 - lambda;
        let m = gamma.len() - 1;
        let item_weights = if item_mass > 0.0 {
            gamma[1..].iter().map(|g| g / item_mass).collect()
        } else {
            // Query-only limit: item weights are irrelevant, keep them uniform.
            vec![1.0 / m as f64; m]
        };
        Ok(Self {
            lambda,
            item_weights,
            gamma,
        })
    }
}

/// Derives fused per-channel weights from the query share `lambda` and the
/// item-channel weights `w` (nonnegative, summing to 1).
pub fn derive_gamma(lambda: f64, item_weights: &[f64]) -> Result<FusionWeights> {
    if !(0.0..=1.0).contains(&lambda) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda {lambda} outside [0, 1]"
        )));
    }
    if item_weights.is_empty() {
        return Err(Error::InvalidParameter("no item weights".into()));
    }
    if item_weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
        return Err(Error::InvalidParameter(
            "item weights must be finite and nonnegative".into(),
        ));
    }
    let sum: f64 = item_weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::InvalidParameter(format!(
            "item weights sum to {sum}, expected 1"
        )));
    }
    let item_weights: Vec<f64> = item_weights.iter().map(|w| w / sum).collect();
    let mut gamma = Vec::with_capacity(item_weights.len() + 1);
    gamma.push(lambda);
    gamma.extend(item_weights.iter().map(|w| (1.0 - lambda) * w));
    Ok(FusionWeights {
        lambda,
        item_weights,
        gamma,
    })
}

/// Retrieval method tags used across results and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Pq,
    CascadeFlat,
    CascadeGraph,
    Lsh,
    Rq,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Pq => "pq",
            Method::CascadeFlat => "cascade_flat",
            Method::CascadeGraph => "cascade_graph",
            Method::Lsh => "lsh",
            Method::Rq => "rq",
        }
    }

    pub const ALL: [Method; 6] = [
        Method::Exact,
        Method::Pq,
        Method::CascadeFlat,
        Method::CascadeGraph,
        Method::Lsh,
        Method::Rq,
    ];
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method '{s}'")))
    }
}

/// Ranked retrieval output: positions with scores, best first.
///
/// Entries are strictly ordered by score descending with ties broken by
/// ascending position; positions are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct TopKResult {
    pub method: Method,
    entries: Vec<ScoredPosition>,
}

impl TopKResult {
    /// Wraps already-selected entries, re-sorting to enforce the ordering
    /// invariant. Positions must be unique.
    pub fn new(method: Method, entries: Vec<ScoredPosition>) -> Self {
        let entries = crate::topk::sort_topk(entries, usize::MAX);
        debug_assert!(entries.windows(2).all(|w| w[0].position != w[1].position));
        Self { method, entries }
    }

    pub fn entries(&self) -> &[ScoredPosition] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Positions of the first `k` entries.
    pub fn positions(&self, k: usize) -> Vec<u32> {
        self.entries.iter().take(k).map(|e| e.position).collect()
    }
}
