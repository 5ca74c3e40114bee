//! Multi-stage residual quantization over full-dimension vectors.
//!
//! Stage 1 is plain k-means on the channel vectors; every later stage is
//! k-means on the reconstruction residuals of the stages before it. Decoding
//! sums the selected centroid of every stage. This is the non-neural stand-in
//! for the encoder-decoder residual quantizer baseline; the multi-stage
//! structure is what the comparison needs.

use log::warn;

use crate::error::{Error, Result};
use crate::kmeans::{self, train_kmeans, KMeans};
use crate::model::{ChannelId, SequenceStore};
use crate::rng::derive_seed;

/// Codebooks of every stage, all over the full dimension d.
#[derive(Debug, Clone)]
pub struct ResidualCodebook {
    pub channel: ChannelId,
    dim: usize,
    stages: Vec<KMeans>,
}

/// Code of one vector: one centroid id per stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidualCode {
    pub codes: Vec<u16>,
}

impl ResidualCodebook {
    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cardinality(&self, stage: usize) -> usize {
        self.stages[stage].k()
    }

    pub fn centroid(&self, stage: usize, c: usize) -> &[f32] {
        self.stages[stage].centroid(c)
    }
}

/// Trains `stages` successive codebooks on one channel of the store.
pub fn train_residual(
    store: &SequenceStore,
    channel: ChannelId,
    stages: usize,
    cardinality: usize,
    seed: u64,
) -> Result<ResidualCodebook> {
    if stages == 0 {
        return Err(Error::InvalidParameter("need at least one stage".into()));
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
    let dim = store.dim();
    let k = if l < cardinality {
        warn!(
            "channel {}: clamping residual cardinality {} to {} training points",
            channel.0, cardinality, l
        );
        l
    } else {
        cardinality
    };

    // Running residuals start as the raw channel vectors.
    let mut residuals = Vec::with_capacity(l * dim);
    for idx in 0..l {
        residuals.extend_from_slice(store.channel_vector(idx, channel.0));
    }
    let mut trained = Vec::with_capacity(stages);
    for s in 0..stages {
        let km = train_kmeans(
            &residuals,
            dim,
            k,
            kmeans::DEFAULT_MAX_ITERS,
            derive_seed(seed, channel.0 as u64, s as u64),
        )?;
        for idx in 0..l {
            let slice = &mut residuals[idx * dim..(idx + 1) * dim];
            let c = km.assign(slice);
            for (r, &cv) in slice.iter_mut().zip(km.centroid(c)) {
                *r -= cv;
            }
        }
        trained.push(km);
    }
    Ok(ResidualCodebook {
        channel,
        dim,
        stages: trained,
    })
}

/// Greedy stage-by-stage encoding of one vector.
pub fn residual_encode(codebook: &ResidualCodebook, vector: &[f32]) -> Result<ResidualCode> {
    if vector.len() != codebook.dim {
        return Err(Error::DimensionMismatch {
            expected: codebook.dim,
            got: vector.len(),
        });
    }
    let mut residual = vector.to_vec();
    let mut codes = Vec::with_capacity(codebook.stages.len());
    for km in &codebook.stages {
        let c = km.assign(&residual);
        for (r, &cv) in residual.iter_mut().zip(km.centroid(c)) {
            *r -= cv;
        }
        codes.push(c as u16);
    }
    Ok(ResidualCode { codes })
}

/// Reconstruction: the sum of each stage's selected centroid.
pub fn residual_decode(codebook: &ResidualCodebook, code: &ResidualCode) -> Result<Vec<f32>> {
    if code.codes.len() != codebook.stages.len() {
        return Err(Error::InvalidParameter(format!(
            "code has {} stages, codebook {}",
            code.codes.len(),
            codebook.stages.len()
        )));
    }
    let mut out = vec![0.0f32; codebook.dim];
    for (km, &c) in codebook.stages.iter().zip(&code.codes) {
        if c as usize >= km.k() {
            return Err(Error::CodeOutOfRange {
                code: c as usize,
                cardinality: km.k(),
            });
        }
        for (o, &cv) in out.iter_mut().zip(km.centroid(c as usize)) {
            *o += cv;
        }
    }
    Ok(out)
}

/// RMS reconstruction error of one channel of a store, truncated to the first
/// `use_stages` stages.
pub fn reconstruction_rms(
    store: &SequenceStore,
    codebook: &ResidualCodebook,
    use_stages: usize,
) -> Result<f64> {
    let mut acc = 0.0;
    for idx in 0..store.len() {
        let v = store.channel_vector(idx, codebook.channel.0);
        let full = residual_encode(codebook, v)?;
        let truncated = ResidualCode {
            codes: full.codes[..use_stages].to_vec(),
        };
        let partial = ResidualCodebook {
            channel: codebook.channel,
            dim: codebook.dim,
            stages: codebook.stages[..use_stages].to_vec(),
        };
        let rebuilt = residual_decode(&partial, &truncated)?;
        acc += kmeans::squared_distance(v, &rebuilt);
    }
    Ok((acc / store.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MultiModalRecord;
    use crate::pq::tests::gaussian_store;

    #[test]
    fn single_stage_equals_full_dim_kmeans() {
        let store = gaussian_store(128, 1, 8, 40);
        let rq = train_residual(&store, ChannelId(0), 1, 16, 3).unwrap();
        let mut points = Vec::new();
        for idx in 0..store.len() {
            points.extend_from_slice(store.channel_vector(idx, 0));
        }
        let km = train_kmeans(&points, 8, 16, kmeans::DEFAULT_MAX_ITERS, derive_seed(3, 0, 0))
            .unwrap();
        assert_eq!(rq.stages[0].centroids_flat(), km.centroids_flat());
        // And its codes are plain nearest-centroid assignments.
        let v = store.channel_vector(17, 0);
        let code = residual_encode(&rq, v).unwrap();
        assert_eq!(code.codes[0] as usize, km.assign(v));
    }

    #[test]
    fn rms_non_increasing_in_stage_count() {
        let store = gaussian_store(256, 1, 8, 41);
        let rq = train_residual(&store, ChannelId(0), 4, 32, 5).unwrap();
        let mut prev = f64::INFINITY;
        for s in 1..=4 {
            let rms = reconstruction_rms(&store, &rq, s).unwrap();
            assert!(rms <= prev + 1e-12, "stage {s}: rms {rms} > prev {prev}");
            prev = rms;
        }
    }

    #[test]
    fn stage_four_beats_stage_one_on_gaussian_data() {
        let store = gaussian_store(256, 1, 8, 42);
        let rq = train_residual(&store, ChannelId(0), 4, 64, 7).unwrap();
        let one = reconstruction_rms(&store, &rq, 1).unwrap();
        let four = reconstruction_rms(&store, &rq, 4).unwrap();
        assert!(four < one, "stage4 {four} !< stage1 {one}");
    }

    #[test]
    fn representable_vector_sends_later_stages_to_near_zero_centroid() {
        // Training data is exactly 4 repeated vectors, so stage 1 covers them
        // with zero residual and stage 2 trains on all-zero residuals.
        let base = [
            vec![1.0f32, 0.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0, 0.0],
            vec![0.0, 0.0, 3.0, 0.0],
            vec![0.0, 0.0, 0.0, 4.0],
        ];
        let records: Vec<_> = (1..=32u32)
            .map(|p| {
                MultiModalRecord::new(p, None, p as u64, vec![base[(p as usize) % 4].clone()])
            })
            .collect();
        let store = SequenceStore::from_records(records).unwrap();
        let rq = train_residual(&store, ChannelId(0), 2, 4, 1).unwrap();
        let code = residual_encode(&rq, &base[2]).unwrap();
        // Stage 1 reproduces the vector exactly.
        let stage1 = rq.centroid(0, code.codes[0] as usize);
        assert_eq!(stage1, &base[2][..]);
        // Stage 2's chosen centroid is the one nearest zero, and it is ~zero.
        let chosen = rq.centroid(1, code.codes[1] as usize);
        let norm: f64 = chosen.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        assert!(norm < 1e-6, "stage-2 centroid norm {norm}");
        let zero_nearest = rq.stages[1].assign(&[0.0; 4]);
        assert_eq!(code.codes[1] as usize, zero_nearest);
    }

    #[test]
    fn decode_rejects_out_of_range() {
        let store = gaussian_store(64, 1, 8, 43);
        let rq = train_residual(&store, ChannelId(0), 2, 8, 1).unwrap();
        let bad = ResidualCode { codes: vec![0, 99] };
        assert!(residual_decode(&rq, &bad).is_err());
    }
}
