//! Product quantization: per-channel, per-subvector k-means codebooks.
//!
//! A d-dimensional channel vector splits into `n_subvectors` contiguous
//! slices; each slice maps to its nearest centroid in that slice's codebook,
//! so the vector becomes `n_subvectors` small integer codes. Codes are stored
//! as u16 since cardinalities up to 512 need more than 8 bits.

use log::warn;

use crate::error::{Error, Result};
use crate::kmeans::{self, train_kmeans};
use crate::model::{ChannelId, SequenceStore};
use crate::rng::derive_seed;

/// Per-channel PQ codebook: one centroid set per subvector position.
#[derive(Debug, Clone, PartialEq)]
pub struct PQCodebook {
    pub channel: ChannelId,
    n_subvectors: usize,
    sub_dim: usize,
    cardinality: usize,
    /// `[subvector][centroid][coord]`, flattened.
    centroids: Vec<f32>,
}

impl PQCodebook {
    pub fn from_parts(
        channel: ChannelId,
        n_subvectors: usize,
        sub_dim: usize,
        cardinality: usize,
        centroids: Vec<f32>,
    ) -> Result<Self> {
        if centroids.len() != n_subvectors * cardinality * sub_dim {
            return Err(Error::InvalidParameter(format!(
                "centroid buffer of {} values does not match {}x{}x{}",
                centroids.len(),
                n_subvectors,
                cardinality,
                sub_dim
            )));
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("codebook centroids".into()));
        }
        Ok(Self {
            channel,
            n_subvectors,
            sub_dim,
            cardinality,
            centroids,
        })
    }

    pub fn n_subvectors(&self) -> usize {
        self.n_subvectors
    }

    pub fn sub_dim(&self) -> usize {
        self.sub_dim
    }

    pub fn dim(&self) -> usize {
        self.n_subvectors * self.sub_dim
    }

    pub fn cardinality(&self) -> usize {
        self.cardinality
    }

    /// Centroid `c` of subvector `b`.
    pub fn centroid(&self, b: usize, c: usize) -> &[f32] {
        let base = (b * self.cardinality + c) * self.sub_dim;
        &self.centroids[base..base + self.sub_dim]
    }

    pub fn centroids_flat(&self) -> &[f32] {
        &self.centroids
    }
}

/// Codes of one channel vector: one centroid id per subvector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PQCode {
    pub codes: Vec<u16>,
}

/// Trains a PQ codebook for one channel of the store.
///
/// Each subvector position gets an independent k-means run (seeded from
/// `seed`, the channel, and the subvector index). If the store holds fewer
/// records than `cardinality`, the cardinality is clamped to the record count
/// with a warning rather than failing, so desk-scale runs still work.
pub fn train_pq(
    store: &SequenceStore,
    channel: ChannelId,
    n_subvectors: usize,
    cardinality: usize,
    seed: u64,
) -> Result<PQCodebook> {
    let dim = store.dim();
    if n_subvectors == 0 || dim % n_subvectors != 0 {
        return Err(Error::IndivisibleDim {
            dim,
            n_subvectors,
        });
    }
    if cardinality == 0 {
        return Err(Error::InvalidParameter("cardinality must be positive".into()));
    }
    if channel.0 >= store.num_channels() {
        return Err(Error::ChannelMismatch {
            expected: store.num_channels(),
            got: channel.0,
        });
    }
    let l = store.len();
    let k = if l < cardinality {
        warn!(
            "channel {}: clamping PQ cardinality {} to {} training points",
            channel.0, cardinality, l
        );
        l
    } else {
        cardinality
    };
    let sub_dim = dim / n_subvectors;

    let mut centroids = Vec::with_capacity(n_subvectors * k * sub_dim);
    for b in 0..n_subvectors {
        // Gather this subvector slice across the sequence.
        let mut points = Vec::with_capacity(l * sub_dim);
        for idx in 0..l {
            let ch = store.channel_vector(idx, channel.0);
            points.extend_from_slice(&ch[b * sub_dim..(b + 1) * sub_dim]);
        }
        let km = train_kmeans(
            &points,
            sub_dim,
            k,
            kmeans::DEFAULT_MAX_ITERS,
            derive_seed(seed, channel.0 as u64, b as u64),
        )?;
        centroids.extend_from_slice(km.centroids_flat());
    }
    PQCodebook::from_parts(channel, n_subvectors, sub_dim, k, centroids)
}

/// Encodes one vector: per-subvector nearest centroid, ties to the lowest id.
pub fn pq_encode(codebook: &PQCodebook, vector: &[f32]) -> Result<PQCode> {
    if vector.len() != codebook.dim() {
        return Err(Error::DimensionMismatch {
            expected: codebook.dim(),
            got: vector.len(),
        });
    }
    let sub_dim = codebook.sub_dim();
    let codes = (0..codebook.n_subvectors())
        .map(|b| {
            let slice = &vector[b * sub_dim..(b + 1) * sub_dim];
            let base = b * codebook.cardinality() * sub_dim;
            let block = &codebook.centroids[base..base + codebook.cardinality() * sub_dim];
            kmeans::nearest_centroid(slice, block, codebook.cardinality(), sub_dim).0 as u16
        })
        .collect();
    Ok(PQCode { codes })
}

/// Decodes a code back to the concatenation of its centroids.
pub fn pq_decode(codebook: &PQCodebook, code: &PQCode) -> Result<Vec<f32>> {
    if code.codes.len() != codebook.n_subvectors() {
        return Err(Error::InvalidParameter(format!(
            "code has {} subvectors, codebook {}",
            code.codes.len(),
            codebook.n_subvectors()
        )));
    }
    let mut out = Vec::with_capacity(codebook.dim());
    for (b, &c) in code.codes.iter().enumerate() {
        if c as usize >= codebook.cardinality() {
            return Err(Error::CodeOutOfRange {
                code: c as usize,
                cardinality: codebook.cardinality(),
            });
        }
        out.extend_from_slice(codebook.centroid(b, c as usize));
    }
    Ok(out)
}
