//! Precomputed cross-modal centroid tables and table-lookup scoring.
//!
//! For every channel pair (i, j) and subvector position b, the table stores
//! the inner products between all centroids of channel i's codebook and all
//! centroids of channel j's codebook at that position. A pair score is then
//! `Σ_i Σ_j γ_i γ_j Σ_b table[i][j][b][c_b^(i)][c_b^(j)]` — pure lookups and
//! adds, no dot products — and it exactly equals the fused inner product of
//! the decoded (reconstructed) vectors.
//!
//! The table stores unweighted centroid dots; the gammas multiply at query
//! time, so one table serves every fusion-weight setting.

use crate::error::{Error, Result};
use crate::model::{FusionWeights, Method, MultiModalRecord, SequenceStore, TopKResult};
use crate::par;
use crate::pq::{pq_decode, pq_encode, PQCode, PQCodebook};
use crate::topk::{ScoredPosition, TopKCollector};

/// Whether both (i, j) and (j, i) blocks are materialized.
///
/// Full storage doubles memory for branchless lookups; half mode keeps only
/// `i <= j` blocks and transposes indices on access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableMode {
    Full,
    Half,
}

/// Work done by PQ scoring, for the benchmark harness.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PqCost {
    /// Table lookups: `M_total^2 * n_subvectors` per scored pair.
    pub table_lookups: u64,
}

/// PQ codes of one record: one [`PQCode`] per channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordCodes {
    pub per_channel: Vec<PQCode>,
}

impl RecordCodes {
    /// Channel-major flat view `[m * n_subvectors]`.
    pub fn flat(&self) -> Vec<u16> {
        let mut out = Vec::with_capacity(
            self.per_channel.iter().map(|c| c.codes.len()).sum(),
        );
        for code in &self.per_channel {
            out.extend_from_slice(&code.codes);
        }
        out
    }
}

/// The whole sequence in code space.
///
/// Codes are stored `[channel][subvector][position]` so the retrieval scan
/// streams one contiguous code lane per (channel, subvector) pass.
#[derive(Debug, Clone)]
pub struct EncodedSequence {
    codes: Vec<u16>,
    len: usize,
    num_channels: usize,
    n_subvectors: usize,
    /// Cardinality of the codebook each channel was encoded against; every
    /// stored code is strictly below its channel's entry.
    cardinalities: Vec<usize>,
}

impl EncodedSequence {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    pub fn n_subvectors(&self) -> usize {
        self.n_subvectors
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    /// Code lane of one (channel, subvector) pair across the sequence.
    pub fn lane(&self, channel: usize, subvector: usize) -> &[u16] {
        let base = (channel * self.n_subvectors + subvector) * self.len;
        &self.codes[base..base + self.len]
    }

    /// Codes of record `idx`, channel-major.
    pub fn record_codes(&self, idx: usize) -> RecordCodes {
        let per_channel = (0..self.num_channels)
            .map(|ch| PQCode {
                codes: (0..self.n_subvectors)
                    .map(|b| self.lane(ch, b)[idx])
                    .collect(),
            })
            .collect();
        RecordCodes { per_channel }
    }
}

/// Encodes every channel of one record.
pub fn encode_record(codebooks: &[PQCodebook], record: &MultiModalRecord) -> Result<RecordCodes> {
    if codebooks.len() != record.num_channels() {
        return Err(Error::ChannelMismatch {
            expected: codebooks.len(),
            got: record.num_channels(),
        });
    }
    let per_channel = codebooks
        .iter()
        .enumerate()
        .map(|(m, cb)| pq_encode(cb, record.channel(m)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RecordCodes { per_channel })
}

/// Decodes per-channel codes back to a record's channel vectors.
pub fn decode_record(codebooks: &[PQCodebook], codes: &RecordCodes) -> Result<Vec<Vec<f32>>> {
    codes
        .per_channel
        .iter()
        .zip(codebooks)
        .map(|(code, cb)| pq_decode(cb, code))
        .collect()
}

/// Encodes the whole store against per-channel codebooks.
pub fn encode_sequence(store: &SequenceStore, codebooks: &[PQCodebook]) -> Result<EncodedSequence> {
    if codebooks.len() != store.num_channels() {
        return Err(Error::ChannelMismatch {
            expected: store.num_channels(),
            got: codebooks.len(),
        });
    }
    for cb in codebooks {
        if cb.dim() != store.dim() {
            return Err(Error::DimensionMismatch {
                expected: store.dim(),
                got: cb.dim(),
            });
        }
    }
    let n_subvectors = codebooks[0].n_subvectors();
    if codebooks.iter().any(|cb| cb.n_subvectors() != n_subvectors) {
        return Err(Error::InvalidParameter(
            "codebooks disagree on subvector count".into(),
        ));
    }
    let m = store.num_channels();
    let l = store.len();
    let per_record: Vec<Vec<u16>> = par::map_indexed(l, |idx| {
        let mut row = Vec::with_capacity(m * n_subvectors);
        for (ch, cb) in codebooks.iter().enumerate() {
            let code = pq_encode(cb, store.channel_vector(idx, ch)).expect("validated dims");
            row.extend_from_slice(&code.codes);
        }
        row
    });
    // Transpose into per-(channel, subvector) lanes.
    let mut codes = vec![0u16; l * m * n_subvectors];
    for (idx, row) in per_record.iter().enumerate() {
        for ch in 0..m {
            for b in 0..n_subvectors {
                codes[(ch * n_subvectors + b) * l + idx] = row[ch * n_subvectors + b];
            }
        }
    }
    Ok(EncodedSequence {
        codes,
        len: l,
        num_channels: m,
        n_subvectors,
        cardinalities: codebooks.iter().map(|cb| cb.cardinality()).collect(),
    })
}

/// Precomputed centroid-pair inner products for all channel pairs.
#[derive(Debug, Clone)]
pub struct CrossModalDistanceTable {
    mode: TableMode,
    num_channels: usize,
    n_subvectors: usize,
    cardinalities: Vec<usize>,
    /// Block start of stored pair (i, j) in `entries`, `usize::MAX` for the
    /// mirrored half-mode blocks.
    block_offsets: Vec<usize>,
    entries: Vec<f32>,
}

impl CrossModalDistanceTable {
    /// Builds the table from one codebook per channel.
    ///
    /// All codebooks must agree on subvector count and subvector dimension.
    pub fn build(codebooks: &[PQCodebook], mode: TableMode) -> Result<Self> {
        if codebooks.is_empty() {
            return Err(Error::EmptyInput("no codebooks".into()));
        }
        let n_subvectors = codebooks[0].n_subvectors();
        let sub_dim = codebooks[0].sub_dim();
        for cb in codebooks {
            if cb.n_subvectors() != n_subvectors || cb.sub_dim() != sub_dim {
                return Err(Error::InvalidParameter(format!(
                    "codebook for channel {} has shape {}x{}, expected {}x{}",
                    cb.channel.0,
                    cb.n_subvectors(),
                    cb.sub_dim(),
                    n_subvectors,
                    sub_dim
                )));
            }
        }
        let m = codebooks.len();
        let cardinalities: Vec<usize> = codebooks.iter().map(|cb| cb.cardinality()).collect();

        let mut block_offsets = vec![usize::MAX; m * m];
        let mut entries = Vec::new();
        for i in 0..m {
            for j in 0..m {
                if matches!(mode, TableMode::Half) && i > j {
                    continue;
                }
                block_offsets[i * m + j] = entries.len();
                let ci = cardinalities[i];
                let cj = cardinalities[j];
                // One parallel task per (subvector, left-centroid) row.
                let rows: Vec<Vec<f32>> = par::map_indexed(n_subvectors * ci, |t| {
                    let b = t / ci;
                    let a = t % ci;
                    let left = codebooks[i].centroid(b, a);
                    (0..cj)
                        .map(|c| {
                            let right = codebooks[j].centroid(b, c);
                            left.iter()
                                .zip(right)
                                .map(|(&x, &y)| x as f64 * y as f64)
                                .sum::<f64>() as f32
                        })
                        .collect()
                });
                for row in rows {
                    entries.extend_from_slice(&row);
                }
            }
        }
        Ok(Self {
            mode,
            num_channels: m,
            n_subvectors,
            cardinalities,
            block_offsets,
            entries,
        })
    }

    pub fn mode(&self) -> TableMode {
        self.mode
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    pub fn n_subvectors(&self) -> usize {
        self.n_subvectors
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn entries_flat(&self) -> &[f32] {
        &self.entries
    }

    /// Rebuilds a table from its persisted parts.
    pub fn from_parts(
        mode: TableMode,
        num_channels: usize,
        n_subvectors: usize,
        cardinalities: Vec<usize>,
        entries: Vec<f32>,
    ) -> Result<Self> {
        if cardinalities.len() != num_channels {
            return Err(Error::InvalidParameter(
                "cardinality list does not match channel count".into(),
            ));
        }
        let mut block_offsets = vec![usize::MAX; num_channels * num_channels];
        let mut expected = 0usize;
        for i in 0..num_channels {
            for j in 0..num_channels {
                if matches!(mode, TableMode::Half) && i > j {
                    continue;
                }
                block_offsets[i * num_channels + j] = expected;
                expected += n_subvectors * cardinalities[i] * cardinalities[j];
            }
        }
        if entries.len() != expected {
            return Err(Error::Format(format!(
                "table has {} entries, expected {expected}",
                entries.len()
            )));
        }
        Ok(Self {
            mode,
            num_channels,
            n_subvectors,
            cardinalities,
            block_offsets,
            entries,
        })
    }

    /// `⟨centroid a of channel i, centroid c of channel j⟩` at subvector `b`.
    pub fn entry(&self, i: usize, j: usize, b: usize, a: usize, c: usize) -> f32 {
        let (i, j, a, c) = if matches!(self.mode, TableMode::Half) && i > j {
            (j, i, c, a)
        } else {
            (i, j, a, c)
        };
        let ci = self.cardinalities[i];
        let cj = self.cardinalities[j];
        let base = self.block_offsets[i * self.num_channels + j];
        self.entries[base + (b * ci + a) * cj + c]
    }

}

/// Table-lookup approximation of the exact pair score.
///
/// `target_gammas[i] * key_gammas[j]` weighs each channel pair; the gammas are
/// the plain fusion weights (codes carry vector magnitude inside the
/// centroids, so no norm scaling happens here). Performs exactly
/// `M^2 * n_subvectors` table lookups.
pub fn approx_pair_score(
    table: &CrossModalDistanceTable,
    target: &RecordCodes,
    target_gammas: &[f64],
    key: &RecordCodes,
    key_gammas: &[f64],
) -> Result<f64> {
    let m = table.num_channels();
    if target.per_channel.len() != m || key.per_channel.len() != m {
        return Err(Error::ChannelMismatch {
            expected: m,
            got: target.per_channel.len().max(key.per_channel.len()),
        });
    }
    if target_gammas.len() != m || key_gammas.len() != m {
        return Err(Error::ChannelMismatch {
            expected: m,
            got: target_gammas.len().max(key_gammas.len()),
        });
    }
    let n_bit = table.n_subvectors();
    for ch in 0..m {
        for code in [&target.per_channel[ch], &key.per_channel[ch]] {
            if code.codes.len() != n_bit {
                return Err(Error::InvalidParameter(format!(
                    "channel {ch} code has {} subvectors, table {n_bit}",
                    code.codes.len()
                )));
            }
            for &c in &code.codes {
                if c as usize >= table.cardinalities()[ch] {
                    return Err(Error::CodeOutOfRange {
                        code: c as usize,
                        cardinality: table.cardinalities()[ch],
                    });
                }
            }
        }
    }
    let mut acc = 0.0;
    for i in 0..m {
        for j in 0..m {
            let w = target_gammas[i] * key_gammas[j];
            let mut s = 0.0;
            for b in 0..n_bit {
                s += table.entry(
                    i,
                    j,
                    b,
                    target.per_channel[i].codes[b] as usize,
                    key.per_channel[j].codes[b] as usize,
                ) as f64;
            }
            acc += w * s;
        }
    }
    Ok(acc)
}

/// Cost of scoring one pair against `table`.
pub fn lookups_per_pair(table: &CrossModalDistanceTable) -> u64 {
    (table.num_channels() * table.num_channels() * table.n_subvectors()) as u64
}

/// Top-K retrieval in code space: scores every encoded record against the
/// target codes and keeps the K best.
///
/// The scan collapses the target side of the table once per query —
/// `lut[j][b][c] = γ_j Σ_i γ_i table[i][j][b][c_b^(i)][c]` — and then sums
/// `M · n_subvectors` collapsed entries per key. That is an algebraic
/// refactoring of the per-pair double sum: scores equal
/// [`approx_pair_score`] up to f64 summation order. The exposed counter
/// reports the pair formula's nominal cost, `M² · n_subvectors` lookups per
/// scored pair.
pub fn pq_topk(
    table: &CrossModalDistanceTable,
    encoded: &EncodedSequence,
    target: &RecordCodes,
    fw: &FusionWeights,
    k: usize,
) -> Result<TopKResult> {
    Ok(pq_topk_with_cost(table, encoded, target, fw, k)?.0)
}

/// [`pq_topk`] plus its lookup count (`L * M^2 * n_subvectors`).
pub fn pq_topk_with_cost(
    table: &CrossModalDistanceTable,
    encoded: &EncodedSequence,
    target: &RecordCodes,
    fw: &FusionWeights,
    k: usize,
) -> Result<(TopKResult, PqCost)> {
    if k == 0 || k > encoded.len() {
        return Err(Error::KTooLarge {
            k,
            available: encoded.len(),
        });
    }
    let m = table.num_channels();
    let n_bit = table.n_subvectors();
    if encoded.num_channels() != m || encoded.n_subvectors() != n_bit {
        return Err(Error::ChannelMismatch {
            expected: m,
            got: encoded.num_channels(),
        });
    }
    if target.per_channel.len() != m {
        return Err(Error::ChannelMismatch {
            expected: m,
            got: target.per_channel.len(),
        });
    }
    let gamma = fw.gamma();
    if gamma.len() != m {
        return Err(Error::ChannelMismatch {
            expected: m,
            got: gamma.len(),
        });
    }
    for (ch, code) in target.per_channel.iter().enumerate() {
        if code.codes.len() != n_bit {
            return Err(Error::InvalidParameter(format!(
                "target channel {ch} code has {} subvectors, table {n_bit}",
                code.codes.len()
            )));
        }
        for &c in &code.codes {
            if c as usize >= table.cardinalities()[ch] {
                return Err(Error::CodeOutOfRange {
                    code: c as usize,
                    cardinality: table.cardinalities()[ch],
                });
            }
        }
    }
    for (ch, (&enc_card, &table_card)) in encoded
        .cardinalities()
        .iter()
        .zip(table.cardinalities())
        .enumerate()
    {
        if enc_card > table_card {
            return Err(Error::InvalidParameter(format!(
                "channel {ch}: sequence encoded at cardinality {enc_card}, table holds {table_card}"
            )));
        }
    }

    // Collapse the target side: one weighted row per (key channel, subvector).
    let cards = table.cardinalities();
    let mut lane_offsets = Vec::with_capacity(m * n_bit);
    let mut total = 0usize;
    for j in 0..m {
        for _ in 0..n_bit {
            lane_offsets.push(total);
            total += cards[j];
        }
    }
    let mut lut = vec![0.0f64; total];
    for j in 0..m {
        for b in 0..n_bit {
            let base = lane_offsets[j * n_bit + b];
            for c in 0..cards[j] {
                let mut s = 0.0;
                for i in 0..m {
                    s += gamma[i]
                        * table.entry(i, j, b, target.per_channel[i].codes[b] as usize, c)
                            as f64;
                }
                lut[base + c] = gamma[j] * s;
            }
        }
    }

    // Chunks sized so one lut row, the code lane, and the accumulator stay
    // L1-resident through a pass.
    let chunk = 1024;
    let partials = par::map_chunks(encoded.len(), chunk, |range| {
        let mut acc = vec![0.0f64; range.len()];
        for j in 0..m {
            for b in 0..n_bit {
                let base = lane_offsets[j * n_bit + b];
                let row = &lut[base..base + cards[j]];
                let lane = &encoded.lane(j, b)[range.clone()];
                for (a, &c) in acc.iter_mut().zip(lane) {
                    // Safety: every stored code is below its channel's encode
                    // cardinality, which was checked against the table's
                    // above; row.len() == cards[j].
                    *a += unsafe { *row.get_unchecked(c as usize) };
                }
            }
        }
        let mut collector = TopKCollector::new(k);
        for (off, &score) in acc.iter().enumerate() {
            collector.push(ScoredPosition {
                position: (range.start + off) as u32 + 1,
                score,
            });
        }
        collector
    });
    let mut merged = TopKCollector::new(k);
    for p in partials {
        merged.merge(p);
    }
    let cost = PqCost {
        table_lookups: encoded.len() as u64 * lookups_per_pair(table),
    };
    Ok((TopKResult::new(Method::Pq, merged.into_sorted()), cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_gamma, ChannelId, MultiModalRecord};
    use crate::pq::tests::gaussian_store;
    use crate::pq::train_pq;
    use crate::scoring::exact_pair_score;

    fn train_all(
        store: &SequenceStore,
        n_subvectors: usize,
        cardinality: usize,
        seed: u64,
    ) -> Vec<PQCodebook> {
        (0..store.num_channels())
            .map(|ch| train_pq(store, ChannelId(ch), n_subvectors, cardinality, seed).unwrap())
            .collect()
    }

    fn record_from_channels(position: u32, channels: Vec<Vec<f32>>) -> MultiModalRecord {
        MultiModalRecord::new(position, None, position as u64, channels)
    }

    #[test]
    fn entry_count_follows_shape() {
        let store = gaussian_store(64, 4, 8, 50);
        let cbs = train_all(&store, 2, 8, 0);
        let table = CrossModalDistanceTable::build(&cbs, TableMode::Full).unwrap();
        assert_eq!(table.num_entries(), 4 * 4 * 2 * 8 * 8);
        let half = CrossModalDistanceTable::build(&cbs, TableMode::Half).unwrap();
        assert_eq!(half.num_entries(), 10 * 2 * 8 * 8);
    }

    #[test]
    fn entries_match_direct_centroid_dots() {
        let store = gaussian_store(64, 3, 8, 51);
        let cbs = train_all(&store, 2, 8, 1);
        let table = CrossModalDistanceTable::build(&cbs, TableMode::Full).unwrap();
        for (i, j, b, a, c) in [(0, 1, 0, 3, 5), (2, 0, 1, 7, 0), (1, 1, 1, 2, 2)] {
            let expect: f64 = cbs[i]
                .centroid(b, a)
                .iter()
                .zip(cbs[j].centroid(b, c))
                .map(|(&x, &y)| x as f64 * y as f64)
                .sum();
            let got = table.entry(i, j, b, a, c) as f64;
            assert!((got - expect).abs() < 1e-6, "({i},{j},{b},{a},{c})");
        }
    }

    #[test]
    fn symmetry_holds_in_both_modes() {
        let store = gaussian_store(64, 3, 8, 52);
        let cbs = train_all(&store, 2, 8, 2);
        for mode in [TableMode::Full, TableMode::Half] {
            let table = CrossModalDistanceTable::build(&cbs, mode).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    for b in 0..2 {
                        for a in 0..8 {
                            for c in 0..8 {
                                let x = table.entry(i, j, b, a, c);
                                let y = table.entry(j, i, b, c, a);
                                assert!(
                                    (x - y).abs() <= 1e-6,
                                    "asymmetry at ({i},{j},{b},{a},{c}): {x} vs {y}"
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn orthogonal_codebooks_have_zero_cross_entries() {
        // Channel 0 centroids live on axes 0..4, channel 1 on axes 4..8.
        let card = 4;
        let sub_dim = 8;
        let mut c0 = Vec::new();
        let mut c1 = Vec::new();
        for c in 0..card {
            let mut e0 = vec![0.0f32; sub_dim];
            e0[c] = 1.5;
            c0.extend_from_slice(&e0);
            let mut e1 = vec![0.0f32; sub_dim];
            e1[4 + c] = 2.0;
            c1.extend_from_slice(&e1);
        }
        let cb0 = PQCodebook::from_parts(ChannelId(0), 1, sub_dim, card, c0).unwrap();
        let cb1 = PQCodebook::from_parts(ChannelId(1), 1, sub_dim, card, c1).unwrap();
        let table = CrossModalDistanceTable::build(&[cb0, cb1], TableMode::Full).unwrap();
        for a in 0..card {
            for c in 0..card {
                assert_eq!(table.entry(0, 1, 0, a, c), 0.0);
                assert_eq!(table.entry(1, 0, 0, a, c), 0.0);
            }
        }
    }

    #[test]
    fn approx_score_is_exact_on_centroid_exact_records() {
        let store = gaussian_store(32, 4, 8, 53);
        let cbs = train_all(&store, 2, 8, 3);
        let table = CrossModalDistanceTable::build(&cbs, TableMode::Full).unwrap();
        let fw = derive_gamma(0.25, &[1.0 / 3.0; 3]).unwrap();
        // Records assembled from centroids have zero quantization error.
        let make = |pick: usize| {
            let channels: Vec<Vec<f32>> = cbs
                .iter()
                .map(|cb| {
                    let mut v = Vec::new();
                    for b in 0..cb.n_subvectors() {
                        v.extend_from_slice(cb.centroid(b, pick % cb.cardinality()));
                    }
                    v
                })
                .collect();
            record_from_channels(1, channels)
        };
        let t = make(3);
        let key = make(5);
        let tc = encode_record(&cbs, &t).unwrap();
        let kc = encode_record(&cbs, &key).unwrap();
        let approx = approx_pair_score(&table, &tc, fw.gamma(), &kc, fw.gamma()).unwrap();
        let exact = exact_pair_score(&t, &key, &fw).unwrap();
        assert!(
            (approx - exact).abs() <= 1e-5 * (1.0 + exact.abs()),
            "approx {approx} exact {exact}"
        );
    }

    #[test]
    fn approx_score_matches_decoded_exact_oracle() {
        let store = gaussian_store(128, 4, 16, 54);
        let cbs = train_all(&store, 4, 16, 4);
        let fw = derive_gamma(0.5, &[0.2, 0.3, 0.5]).unwrap();
        for mode in [TableMode::Full, TableMode::Half] {
            let table = CrossModalDistanceTable::build(&cbs, mode).unwrap();
            for idx in [0usize, 13, 77] {
                let t = store.record(idx);
                let key = store.record((idx + 31) % store.len());
                let tc = encode_record(&cbs, &t).unwrap();
                let kc = encode_record(&cbs, &key).unwrap();
                let approx =
                    approx_pair_score(&table, &tc, fw.gamma(), &kc, fw.gamma()).unwrap();
                let t_dec = record_from_channels(1, decode_record(&cbs, &tc).unwrap());
                let k_dec = record_from_channels(2, decode_record(&cbs, &kc).unwrap());
                let exact = exact_pair_score(&t_dec, &k_dec, &fw).unwrap();
                assert!(
                    (approx - exact).abs() <= 1e-5 * (1.0 + exact.abs()),
                    "mode {mode:?}: approx {approx} exact {exact}"
                );
            }
        }
    }

    #[test]
    fn lookup_count_is_m_squared_times_subvectors() {
        let store = gaussian_store(64, 4, 16, 55);
        let cbs = train_all(&store, 8, 8, 5);
        let table = CrossModalDistanceTable::build(&cbs, TableMode::Full).unwrap();
        assert_eq!(lookups_per_pair(&table), 4 * 4 * 8);
        let encoded = encode_sequence(&store, &cbs).unwrap();
        let fw = derive_gamma(0.25, &[1.0 / 3.0; 3]).unwrap();
        let target = encode_record(&cbs, &store.record(0)).unwrap();
        let (_, cost) = pq_topk_with_cost(&table, &encoded, &target, &fw, 5).unwrap();
        assert_eq!(cost.table_lookups, 64 * 4 * 4 * 8);
    }

    #[test]
    fn topk_matches_full_sort_of_approx_scores() {
        let store = gaussian_store(100, 4, 8, 56);
        let cbs = train_all(&store, 2, 16, 6);
        let table = CrossModalDistanceTable::build(&cbs, TableMode::Full).unwrap();
        let encoded = encode_sequence(&store, &cbs).unwrap();
        let fw = derive_gamma(0.25, &[1.0 / 3.0; 3]).unwrap();
        let target = encode_record(&cbs, &store.record(41)).unwrap();
        let result = pq_topk(&table, &encoded, &target, &fw, 10).unwrap();
        let mut scored: Vec<ScoredPosition> = (0..store.len())
            .map(|idx| {
                let kc = encode_record(&cbs, &store.record(idx)).unwrap();
                ScoredPosition {
                    position: idx as u32 + 1,
                    score: approx_pair_score(&table, &target, fw.gamma(), &kc, fw.gamma())
                        .unwrap(),
                }
            })
            .collect();
        scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.position.cmp(&b.position)));
        let oracle: Vec<u32> = scored.iter().take(10).map(|e| e.position).collect();
        assert_eq!(result.positions(10), oracle);
    }

    #[test]
    fn centroid_exact_sequence_ties_break_by_position() {
        // Every record identical to the target: all scores equal, so the
        // tie-break must return positions 1..=K.
        let store = gaussian_store(1, 4, 8, 57);
        let cbs = train_all(&store, 2, 1, 7);
        let template = store.record(0);
        let records: Vec<_> = (1..=12u32)
            .map(|p| {
                let mut r = template.clone();
                r.position = p;
                r
            })
            .collect();
        let dup_store = SequenceStore::from_records(records).unwrap();
        let encoded = encode_sequence(&dup_store, &cbs).unwrap();
        let table = CrossModalDistanceTable::build(&cbs, TableMode::Full).unwrap();
        let fw = derive_gamma(0.25, &[1.0 / 3.0; 3]).unwrap();
        let target = encode_record(&cbs, &template).unwrap();
        let result = pq_topk(&table, &encoded, &target, &fw, 5).unwrap();
        assert_eq!(result.positions(5), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn recall_reaches_one_as_cardinality_reaches_l() {
        // One centroid per observed subvector value: zero quantization error,
        // so PQ ranking equals exact ranking on the training data itself.
        let store = gaussian_store(40, 4, 8, 58);
        let cbs = train_all(&store, 2, 40, 8);
        let table = CrossModalDistanceTable::build(&cbs, TableMode::Full).unwrap();
        let encoded = encode_sequence(&store, &cbs).unwrap();
        let fw = derive_gamma(0.25, &[1.0 / 3.0; 3]).unwrap();
        let target_rec = crate::scoring::tests::random_record(999, 4, 8, 59);
        let target = encode_record(&cbs, &target_rec).unwrap();
        // Quantization of the out-of-sample target is irrelevant to ordering
        // here only if we score the SAME decoded target on both sides.
        let decoded_target =
            record_from_channels(999, decode_record(&cbs, &target).unwrap());
        let approx = pq_topk(&table, &encoded, &target, &fw, 10).unwrap();
        let exact = crate::scoring::exact_topk(&store, &decoded_target, &fw, 10).unwrap();
        assert_eq!(approx.positions(10), exact.positions(10));
    }
}
