//! Cascading cross-channel retrieval and LSH Hamming ranking.
//!
//! The cascade probes every key channel's index with every target channel
//! (M² probes), unions the per-probe top-K_stage1 candidates, and reranks the
//! union with the exact fused score — the L → M²K → K filter. Per-channel
//! indexes are either flat (exact per-channel inner-product scan) or a seeded
//! small-world graph with greedy beam search.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::lsh::{hamming, LshHasher, LshSignature};
use crate::model::{FusionWeights, Method, MultiModalRecord, SequenceStore, TopKResult};
use crate::par;
use crate::rng::{stream_rng, uniform_open01};
use crate::scoring::fuse_record;
use crate::topk::{sort_topk, ScoredPosition, TopKCollector};

/// Work done by one cascade call, for the benchmark harness.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CascadeCost {
    /// Stage-1 index probes (M² per call).
    pub probes: u64,
    /// Stage-2 exact rerank evaluations (the candidate-set size).
    pub reranked: u64,
}

/// A retrieval result plus the flag for candidate sets smaller than K.
#[derive(Debug, Clone)]
pub struct CascadeOutcome {
    pub result: TopKResult,
    pub cost: CascadeCost,
    /// True when the candidate union held fewer than K positions.
    pub short: bool,
}

/// Build parameters for the small-world graph index.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GraphParams {
    pub max_neighbors: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            max_neighbors: 16,
            ef_construction: 200,
            ef_search: 128,
        }
    }
}

/// Per-channel index over the sequence entries of one channel.
#[derive(Debug)]
pub enum ChannelIndex {
    /// Exact per-channel scan; upper-bounds what any graph search can return.
    Flat { channel: usize },
    Graph(GraphIndex),
}

impl ChannelIndex {
    /// Top-k sequence positions by `⟨query, x_l^(channel)⟩`.
    pub fn search(
        &self,
        store: &SequenceStore,
        query: &[f32],
        k: usize,
    ) -> Result<Vec<ScoredPosition>> {
        match self {
            ChannelIndex::Flat { channel } => {
                if query.len() != store.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: store.dim(),
                        got: query.len(),
                    });
                }
                let k = k.min(store.len());
                let partials = par::map_chunks(store.len(), 2048, |range| {
                    let mut collector = TopKCollector::new(k);
                    for idx in range {
                        collector.push(ScoredPosition {
                            position: idx as u32 + 1,
                            score: dot_f32(query, store.channel_vector(idx, *channel)),
                        });
                    }
                    collector
                });
                let mut merged = TopKCollector::new(k);
                for p in partials {
                    merged.merge(p);
                }
                Ok(merged.into_sorted())
            }
            ChannelIndex::Graph(g) => g.search(store, query, k),
        }
    }
}

fn dot_f32(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        acc += x as f64 * y as f64;
    }
    acc
}

/// Builds flat indexes for every channel.
pub fn build_flat_indexes(store: &SequenceStore) -> Vec<ChannelIndex> {
    (0..store.num_channels())
        .map(|channel| ChannelIndex::Flat { channel })
        .collect()
}

/// Builds graph indexes for every channel.
pub fn build_graph_indexes(
    store: &SequenceStore,
    params: GraphParams,
    seed: u64,
) -> Result<Vec<ChannelIndex>> {
    (0..store.num_channels())
        .map(|channel| {
            GraphIndex::build(store, channel, params, crate::rng::derive_seed(seed, 71, channel as u64))
                .map(ChannelIndex::Graph)
        })
        .collect()
}

/// Layered navigable small-world graph over one channel's vectors, searched
/// greedily by inner product.
#[derive(Debug)]
pub struct GraphIndex {
    channel: usize,
    params: GraphParams,
    /// `layers[level][node]` is the neighbor list of `node` at that level;
    /// nodes absent from a level have an empty list.
    layers: Vec<Vec<Vec<u32>>>,
    node_levels: Vec<usize>,
    entry: u32,
}

impl GraphIndex {
    /// Inserts every sequence entry of `channel` in position order, with
    /// seeded level draws, so the graph is deterministic.
    pub fn build(
        store: &SequenceStore,
        channel: usize,
        params: GraphParams,
        seed: u64,
    ) -> Result<Self> {
        if store.is_empty() {
            return Err(Error::EmptyInput("graph index over empty store".into()));
        }
        if params.max_neighbors == 0 || params.ef_construction == 0 {
            return Err(Error::InvalidParameter(
                "graph parameters must be positive".into(),
            ));
        }
        let n = store.len();
        let level_mult = 1.0 / (params.max_neighbors as f64).ln();
        let mut rng = stream_rng(seed, 0);
        let node_levels: Vec<usize> = (0..n)
            .map(|_| (-uniform_open01(&mut rng).ln() * level_mult).floor() as usize)
            .collect();
        let max_level = node_levels.iter().copied().max().unwrap_or(0);
        let layers: Vec<Vec<Vec<u32>>> = (0..=max_level).map(|_| vec![Vec::new(); n]).collect();

        let mut index = Self {
            channel,
            params,
            layers,
            node_levels: node_levels.clone(),
            entry: 0,
        };
        // First node with the top level becomes the entry point.
        let mut entry = 0u32;
        let mut entry_level = node_levels[0];
        index.entry = entry;

        for node in 1..n {
            let node_level = node_levels[node];
            let query = store.channel_vector(node, channel);
            let mut eps = vec![entry];
            // Greedy descent through levels above the node's level.
            let mut level = entry_level;
            while level > node_level {
                eps = index.search_layer(store, query, &eps, 1, level, node);
                level -= 1;
            }
            // Connect on every level the node occupies.
            let top = node_level.min(entry_level);
            for lvl in (0..=top).rev() {
                let found =
                    index.search_layer(store, query, &eps, params.ef_construction, lvl, node);
                let m_max = if lvl == 0 {
                    params.max_neighbors * 2
                } else {
                    params.max_neighbors
                };
                let chosen: Vec<u32> = found.iter().take(m_max).copied().collect();
                for &nb in &chosen {
                    index.layers[lvl][node].push(nb);
                    index.layers[lvl][nb as usize].push(node as u32);
                    // Prune the neighbor's list back down if it overflowed.
                    if index.layers[lvl][nb as usize].len() > m_max {
                        let nb_vec = store.channel_vector(nb as usize, channel);
                        let mut scored: Vec<(f64, u32)> = index.layers[lvl][nb as usize]
                            .iter()
                            .map(|&x| {
                                (dot_f32(nb_vec, store.channel_vector(x as usize, channel)), x)
                            })
                            .collect();
                        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                        index.layers[lvl][nb as usize] =
                            scored.into_iter().take(m_max).map(|(_, x)| x).collect();
                    }
                }
                eps = found;
            }
            if node_level > entry_level {
                entry = node as u32;
                entry_level = node_level;
                index.entry = entry;
            }
        }
        Ok(index)
    }

    /// Beam search over one level: returns up to `ef` nodes ordered best-first
    /// by inner product with `query`. `exclude` skips the node being inserted.
    fn search_layer(
        &self,
        store: &SequenceStore,
        query: &[f32],
        entry_points: &[u32],
        ef: usize,
        level: usize,
        exclude: usize,
    ) -> Vec<u32> {
        let mut visited = vec![false; store.len()];
        let mut candidates: Vec<(f64, u32)> = Vec::new();
        let mut results: Vec<(f64, u32)> = Vec::new();
        for &ep in entry_points {
            if visited[ep as usize] || ep as usize == exclude {
                continue;
            }
            visited[ep as usize] = true;
            let s = dot_f32(query, store.channel_vector(ep as usize, self.channel));
            candidates.push((s, ep));
            results.push((s, ep));
        }
        let better = |a: &(f64, u32), b: &(f64, u32)| {
            a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
        };
        while let Some(pos) = candidates
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                a.0.total_cmp(&b.0).then(b.1.cmp(&a.1))
            })
            .map(|(i, _)| i)
        {
            let current = candidates.swap_remove(pos);
            let worst = results
                .iter()
                .min_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)))
                .copied();
            if results.len() >= ef {
                if let Some(w) = worst {
                    if better(&w, &current) {
                        break;
                    }
                }
            }
            for &nb in &self.layers[level][current.1 as usize] {
                let nbu = nb as usize;
                if visited[nbu] || nbu == exclude {
                    continue;
                }
                visited[nbu] = true;
                let s = dot_f32(query, store.channel_vector(nbu, self.channel));
                let entry = (s, nb);
                if results.len() < ef {
                    results.push(entry);
                    candidates.push(entry);
                } else {
                    let worst_idx = results
                        .iter()
                        .enumerate()
                        .min_by(|(_, a), (_, b)| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)))
                        .map(|(i, _)| i)
                        .expect("non-empty results");
                    if better(&entry, &results[worst_idx]) {
                        results[worst_idx] = entry;
                        candidates.push(entry);
                    }
                }
            }
        }
        results.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        results.into_iter().map(|(_, x)| x).collect()
    }

    /// Approximate top-k by inner product. With `ef_search >= L` the search
    /// degenerates to the exhaustive flat scan.
    pub fn search(
        &self,
        store: &SequenceStore,
        query: &[f32],
        k: usize,
    ) -> Result<Vec<ScoredPosition>> {
        if query.len() != store.dim() {
            return Err(Error::DimensionMismatch {
                expected: store.dim(),
                got: query.len(),
            });
        }
        let k = k.min(store.len());
        if self.params.ef_search >= store.len() {
            let flat = ChannelIndex::Flat {
                channel: self.channel,
            };
            return flat.search(store, query, k);
        }
        let mut eps = vec![self.entry];
        let top = self.node_levels[self.entry as usize];
        for level in (1..=top).rev() {
            eps = self.search_layer(store, query, &eps, 1, level, usize::MAX);
        }
        let ef = self.params.ef_search.max(k);
        let found = self.search_layer(store, query, &eps, ef, 0, usize::MAX);
        Ok(found
            .into_iter()
            .take(k)
            .map(|node| ScoredPosition {
                position: node + 1,
                score: dot_f32(query, store.channel_vector(node as usize, self.channel)),
            })
            .collect())
    }
}

/// Two-stage cascading retrieval.
///
/// Stage 1 probes every (target channel i, key channel j) pair: channel j's
/// index ranked by `⟨x_t^(i), x_l^(j)⟩`, keeping `k_stage1` positions per
/// probe. Stage 2 reranks the deduplicated union with the exact fused score.
/// If the union holds fewer than K positions the result is returned short and
/// flagged.
pub fn cascade_topk(
    indexes: &[ChannelIndex],
    store: &SequenceStore,
    target: &MultiModalRecord,
    fw: &FusionWeights,
    k: usize,
    k_stage1: usize,
) -> Result<CascadeOutcome> {
    let m = store.num_channels();
    if indexes.len() != m || target.num_channels() != m {
        return Err(Error::ChannelMismatch {
            expected: m,
            got: indexes.len().min(target.num_channels()),
        });
    }
    if k == 0 || k > store.len() {
        return Err(Error::KTooLarge {
            k,
            available: store.len(),
        });
    }
    if k_stage1 < k {
        return Err(Error::InvalidParameter(format!(
            "k_stage1 {k_stage1} must be at least k {k}"
        )));
    }

    // Stage 1: M^2 probes, unioned in deterministic (i, j) order.
    let probes: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .collect();
    let probe_results: Vec<Vec<ScoredPosition>> = probes
        .iter()
        .map(|&(i, j)| indexes[j].search(store, target.channel(i), k_stage1))
        .collect::<Result<Vec<_>>>()?;
    let mut candidates: BTreeSet<u32> = BTreeSet::new();
    for found in &probe_results {
        for e in found {
            candidates.insert(e.position);
        }
    }
    debug_assert!(candidates.len() <= m * m * k_stage1);

    // Stage 2: exact fused-score rerank of the union.
    let reranked = candidates.len() as u64;
    let target_fused = fuse_record(target, fw);
    let dim = store.dim();
    let mut scratch = vec![0.0f64; dim];
    let scored: Vec<ScoredPosition> = candidates
        .into_iter()
        .map(|pos| ScoredPosition {
            position: pos,
            score: crate::scoring::fused_score_flat(
                &target_fused,
                store.record_flat(pos as usize - 1),
                fw.gamma(),
                dim,
                &mut scratch,
            ),
        })
        .collect();
    let short = scored.len() < k;
    let entries = sort_topk(scored, k);
    let method = if indexes
        .iter()
        .any(|ix| matches!(ix, ChannelIndex::Graph(_)))
    {
        Method::CascadeGraph
    } else {
        Method::CascadeFlat
    };
    Ok(CascadeOutcome {
        result: TopKResult::new(method, entries),
        cost: CascadeCost {
            probes: (m * m) as u64,
            reranked,
        },
        short,
    })
}

/// Precomputed LSH signatures of every record's fused vector.
#[derive(Debug, Clone)]
pub struct LshIndex {
    signatures: Vec<LshSignature>,
}

impl LshIndex {
    /// Hashes `Σ_m γ_m x^(m)` of every record.
    pub fn build(hasher: &LshHasher, store: &SequenceStore, fw: &FusionWeights) -> Result<Self> {
        if hasher.dim() != store.dim() {
            return Err(Error::DimensionMismatch {
                expected: store.dim(),
                got: hasher.dim(),
            });
        }
        let gamma = fw.gamma().to_vec();
        let dim = store.dim();
        let signatures = par::map_indexed(store.len(), |idx| {
            let mut fused = vec![0.0f64; dim];
            crate::scoring::fuse_into(store.record_flat(idx), &gamma, dim, &mut fused);
            hasher.hash_f64(&fused).expect("validated dims")
        });
        Ok(Self { signatures })
    }

    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    pub fn signature(&self, idx: usize) -> &LshSignature {
        &self.signatures[idx]
    }
}

/// LSH ranking against a prebuilt index: ascending Hamming distance between
/// the hashed fused target and each hashed fused key, ties by ascending
/// position. Scores in the result are `-hamming` so that the shared
/// descending-score order applies.
pub fn lsh_topk_indexed(
    hasher: &LshHasher,
    index: &LshIndex,
    target: &MultiModalRecord,
    fw: &FusionWeights,
    k: usize,
) -> Result<TopKResult> {
    if k == 0 || k > index.len() {
        return Err(Error::KTooLarge {
            k,
            available: index.len(),
        });
    }
    let fused = fuse_record(target, fw);
    let target_sig = hasher.hash_f64(&fused)?;
    let partials = par::map_chunks(index.len(), 4096, |range| {
        let mut collector = TopKCollector::new(k);
        for idx in range {
            let d = hamming(&target_sig, index.signature(idx)).expect("same hasher");
            collector.push(ScoredPosition {
                position: idx as u32 + 1,
                score: -(d as f64),
            });
        }
        collector
    });
    let mut merged = TopKCollector::new(k);
    for p in partials {
        merged.merge(p);
    }
    Ok(TopKResult::new(Method::Lsh, merged.into_sorted()))
}

/// One-shot LSH ranking: hashes the store's fused vectors and ranks. Use
/// [`LshIndex`] directly when querying the same store repeatedly.
pub fn lsh_topk(
    hasher: &LshHasher,
    store: &SequenceStore,
    target: &MultiModalRecord,
    fw: &FusionWeights,
    k: usize,
) -> Result<TopKResult> {
    let index = LshIndex::build(hasher, store, fw)?;
    lsh_topk_indexed(hasher, &index, target, fw, k)
}
