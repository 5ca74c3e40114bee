//! Exact weighted cross-modal scoring and top-K retrieval.
//!
//! The score of a (target, key) pair is the inner product of the two fused
//! vectors, `(Σ_i γ_i x_t^(i))ᵀ (Σ_j γ_j x_l^(j))`, which equals the double
//! sum `Σ_i Σ_j γ_i γ_j ⟨x_t^(i), x_l^(j)⟩`. The production kernel fuses each
//! record once (O(M·d) per side) and takes a single d-length dot product; the
//! double-sum form survives only as a test oracle. Scores accumulate in f64
//! even though stored vectors are f32, which keeps top-K boundaries stable.

use crate::error::{Error, Result};
use crate::model::{FusionWeights, Method, MultiModalRecord, SequenceStore, TopKResult};
use crate::par;
use crate::topk::{ScoredPosition, TopKCollector};

/// Work done by one exact retrieval call, for the benchmark harness.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExactCost {
    /// Fused-score evaluations (one per key record).
    pub score_evals: u64,
    /// Multiplications: M·d per fused side plus the d-length dot per pair.
    pub mul_ops: u64,
}

/// A record split into per-channel norms and unit vectors.
///
/// A zero channel keeps norm 0 and a zero "unit" vector, so padded queries
/// stay well-defined and contribute exactly nothing.
#[derive(Debug, Clone)]
pub struct DecomposedVector {
    norms: Vec<f64>,
    units: Vec<Vec<f64>>,
}

impl DecomposedVector {
    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn unit(&self, m: usize) -> &[f64] {
        &self.units[m]
    }

    pub fn num_channels(&self) -> usize {
        self.norms.len()
    }

    pub fn dim(&self) -> usize {
        self.units.first().map_or(0, Vec::len)
    }
}

/// Splits each channel of `record` into its Euclidean norm and unit vector.
pub fn decompose(record: &MultiModalRecord) -> DecomposedVector {
    let mut norms = Vec::with_capacity(record.num_channels());
    let mut units = Vec::with_capacity(record.num_channels());
    for ch in record.channels() {
        let norm = ch.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
        let unit = if norm > 0.0 {
            ch.iter().map(|&x| x as f64 / norm).collect()
        } else {
            vec![0.0; ch.len()]
        };
        norms.push(norm);
        units.push(unit);
    }
    DecomposedVector { norms, units }
}

/// Pairwise interaction weights `γ_i γ_j |x_t^(i)| |x_l^(j)|` between a target
/// and a key decomposition.
#[derive(Debug, Clone)]
pub struct CrossModalWeightMatrix {
    weights: Vec<f64>,
    m: usize,
}

impl CrossModalWeightMatrix {
    pub fn new(fw: &FusionWeights, target: &DecomposedVector, key: &DecomposedVector) -> Self {
        let m = fw.num_channels();
        let gamma = fw.gamma();
        let mut weights = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                weights[i * m + j] = gamma[i] * gamma[j] * target.norms[i] * key.norms[j];
            }
        }
        Self { weights, m }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.m + j]
    }
}

/// Fuses a flat `[M * d]` record into `out`: `out[k] = Σ_m γ_m x^(m)[k]`.
pub fn fuse_into(flat: &[f32], gamma: &[f64], dim: usize, out: &mut [f64]) {
    debug_assert_eq!(flat.len(), gamma.len() * dim);
    debug_assert_eq!(out.len(), dim);
    out.fill(0.0);
    for (m, &g) in gamma.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let ch = &flat[m * dim..(m + 1) * dim];
        for (o, &x) in out.iter_mut().zip(ch) {
            *o += g * x as f64;
        }
    }
}

/// Fused vector of a record as an owned buffer.
pub fn fuse_record(record: &MultiModalRecord, fw: &FusionWeights) -> Vec<f64> {
    let dim = record.channel(0).len();
    let mut out = vec![0.0; dim];
    fuse_into(&record.flat(), fw.gamma(), dim, &mut out);
    out
}

/// Dot product of a fused f64 target against a flat f32 key fused on the fly.
///
/// This is the hot kernel of exact retrieval: one O(M·d) fuse of the key plus
/// one d-length dot, all in f64.
pub fn fused_score_flat(
    target_fused: &[f64],
    key_flat: &[f32],
    gamma: &[f64],
    dim: usize,
    scratch: &mut [f64],
) -> f64 {
    fuse_into(key_flat, gamma, dim, scratch);
    let mut acc = 0.0;
    for (t, k) in target_fused.iter().zip(scratch.iter()) {
        acc += t * k;
    }
    acc
}

fn check_pair(target: &MultiModalRecord, key: &MultiModalRecord, fw: &FusionWeights) -> Result<()> {
    if target.num_channels() != fw.num_channels() || key.num_channels() != fw.num_channels() {
        return Err(Error::ChannelMismatch {
            expected: fw.num_channels(),
            got: target.num_channels().max(key.num_channels()),
        });
    }
    let dim = target.channel(0).len();
    for m in 0..target.num_channels() {
        if target.channel(m).len() != dim || key.channel(m).len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: key.channel(m).len(),
            });
        }
    }
    Ok(())
}

/// Exact weighted cross-modal score of one (target, key) pair.
pub fn exact_pair_score(
    target: &MultiModalRecord,
    key: &MultiModalRecord,
    fw: &FusionWeights,
) -> Result<f64> {
    check_pair(target, key, fw)?;
    let dim = target.channel(0).len();
    let target_fused = fuse_record(target, fw);
    let mut scratch = vec![0.0; dim];
    Ok(fused_score_flat(
        &target_fused,
        &key.flat(),
        fw.gamma(),
        dim,
        &mut scratch,
    ))
}

/// Score from pre-decomposed records: `Σ_i Σ_j γ_ij ⟨x̂_t^(i), x̂_l^(j)⟩`.
pub fn decomposed_score(
    target: &DecomposedVector,
    key: &DecomposedVector,
    fw: &FusionWeights,
) -> Result<f64> {
    if target.num_channels() != fw.num_channels() || key.num_channels() != fw.num_channels() {
        return Err(Error::ChannelMismatch {
            expected: fw.num_channels(),
            got: target.num_channels().max(key.num_channels()),
        });
    }
    if target.dim() != key.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            got: key.dim(),
        });
    }
    let weights = CrossModalWeightMatrix::new(fw, target, key);
    let m = fw.num_channels();
    let mut acc = 0.0;
    for i in 0..m {
        for j in 0..m {
            let w = weights.get(i, j);
            if w == 0.0 {
                continue;
            }
            let dot: f64 = target
                .unit(i)
                .iter()
                .zip(key.unit(j))
                .map(|(a, b)| a * b)
                .sum();
            acc += w * dot;
        }
    }
    Ok(acc)
}

/// Exact top-K retrieval: scores every record in the store against the target
/// and keeps the K best under the (score desc, position asc) order.
///
/// The scan is chunked across workers; per-pair scores are computed in a fixed
/// sequential order inside each pair, and chunk results merge in chunk order,
/// so the outcome is identical for any partitioning.
pub fn exact_topk(
    store: &SequenceStore,
    target: &MultiModalRecord,
    fw: &FusionWeights,
    k: usize,
) -> Result<TopKResult> {
    Ok(exact_topk_with_cost(store, target, fw, k)?.0)
}

/// [`exact_topk`] plus its operation counts.
pub fn exact_topk_with_cost(
    store: &SequenceStore,
    target: &MultiModalRecord,
    fw: &FusionWeights,
    k: usize,
) -> Result<(TopKResult, ExactCost)> {
    if k == 0 || k > store.len() {
        return Err(Error::KTooLarge {
            k,
            available: store.len(),
        });
    }
    if target.num_channels() != store.num_channels() {
        return Err(Error::ChannelMismatch {
            expected: store.num_channels(),
            got: target.num_channels(),
        });
    }
    if target.channel(0).len() != store.dim() {
        return Err(Error::DimensionMismatch {
            expected: store.dim(),
            got: target.channel(0).len(),
        });
    }
    let dim = store.dim();
    let m = store.num_channels();
    let gamma = fw.gamma();
    let target_fused = fuse_record(target, fw);

    let chunk = 1024;
    let partials = par::map_chunks(store.len(), chunk, |range| {
        let mut collector = TopKCollector::new(k);
        let mut scratch = vec![0.0; dim];
        for idx in range {
            let score =
                fused_score_flat(&target_fused, store.record_flat(idx), gamma, dim, &mut scratch);
            collector.push(ScoredPosition {
                position: idx as u32 + 1,
                score,
            });
        }
        collector
    });
    let mut merged = TopKCollector::new(k);
    for p in partials {
        merged.merge(p);
    }
    let l = store.len() as u64;
    let cost = ExactCost {
        score_evals: l,
        // M·d to fuse each key, d for the dot, plus the one-time target fuse.
        mul_ops: l * (m as u64 * dim as u64 + dim as u64) + m as u64 * dim as u64,
    };
    Ok((TopKResult::new(Method::Exact, merged.into_sorted()), cost))
}
