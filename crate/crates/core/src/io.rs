//! Binary file formats. All integers and floats are little-endian.
//!
//! Dataset `MMSQ1`:
//! `magic "MMSQ1" | u32 L | u32 M_total | u32 d | f32 data[L][M][d] |
//!  u32 meta_len | meta JSON`. Data is position-major, channel-second. The
//! metadata block echoes the generator config (seed, per-channel mu/sigma,
//! gamma). Loaders synthesize ids: `item_id = position`, `query_id = position`
//! unless the channel-0 vector is all zeros (the padded-query sentinel).
//!
//! Codebook `MMPQ1`:
//! `magic "MMPQ1" | u32 channel | u32 n_subvectors | u32 sub_dim |
//!  u32 cardinality | f32 centroids[subvector][centroid][coord] | u32 crc32`
//! where the CRC-32 (IEEE) covers every preceding byte.
//!
//! Distance table `MMDT1`:
//! `magic "MMDT1" | u32 mode (0 full, 1 half) | u32 M_total | u32 n_subvectors
//!  | u32 cardinality[M] | f32 entries` with entries in `[i][j][b][a][c]`
//! block order (half mode stores only `i <= j`). Loading validates the
//! symmetry invariant on a 1% entry sample.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lut::{CrossModalDistanceTable, TableMode};
use crate::model::{ChannelId, SequenceStore};
use crate::pq::PQCodebook;
use crate::rng::{stream_rng, uniform_index};
use crate::synth::SynthConfig;

const DATASET_MAGIC: &[u8; 5] = b"MMSQ1";
const CODEBOOK_MAGIC: &[u8; 5] = b"MMPQ1";
const TABLE_MAGIC: &[u8; 5] = b"MMDT1";

/// JSON metadata block trailing a dataset file.
///
/// Written fully populated by the generator; tolerated partially missing on
/// read so externally produced embeddings can omit generator details.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mu: Vec<f64>,
    #[serde(default)]
    pub sigma: Vec<f64>,
    #[serde(default)]
    pub gamma: Vec<f64>,
}

impl DatasetMeta {
    pub fn from_config(config: &SynthConfig) -> Result<Self> {
        Ok(Self {
            seed: config.seed,
            mu: config.mu.clone(),
            sigma: config.sigma.clone(),
            gamma: config.gamma.expand(config.m_total)?,
        })
    }
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_magic(r: &mut impl Read, expected: &[u8; 5], what: &str) -> Result<()> {
    let mut buf = [0u8; 5];
    r.read_exact(&mut buf)?;
    if &buf != expected {
        return Err(Error::Format(format!(
            "bad {what} magic: {:?}",
            String::from_utf8_lossy(&buf)
        )));
    }
    Ok(())
}

fn write_f32s(w: &mut impl Write, data: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(data.len() * 4);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_f32s(r: &mut impl Read, count: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; count * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Writes a sequence store and its metadata block.
pub fn write_dataset(path: &Path, store: &SequenceStore, meta: &DatasetMeta) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DATASET_MAGIC)?;
    write_u32(&mut w, store.len() as u32)?;
    write_u32(&mut w, store.num_channels() as u32)?;
    write_u32(&mut w, store.dim() as u32)?;
    write_f32s(&mut w, store.raw_data())?;
    let json = serde_json::to_vec(meta)?;
    write_u32(&mut w, json.len() as u32)?;
    w.write_all(&json)?;
    w.flush()?;
    Ok(())
}

/// Loads a dataset file back into a store plus its metadata.
pub fn read_dataset(path: &Path) -> Result<(SequenceStore, DatasetMeta)> {
    let mut r = BufReader::new(File::open(path)?);
    read_magic(&mut r, DATASET_MAGIC, "dataset")?;
    let l = read_u32(&mut r)? as usize;
    let m = read_u32(&mut r)? as usize;
    let d = read_u32(&mut r)? as usize;
    if l == 0 || m == 0 || d == 0 {
        return Err(Error::Format(format!("degenerate dataset shape {l}x{m}x{d}")));
    }
    let data = read_f32s(&mut r, l * m * d)?;
    let meta_len = read_u32(&mut r)? as usize;
    let mut json = vec![0u8; meta_len];
    r.read_exact(&mut json)?;
    let meta: DatasetMeta = serde_json::from_slice(&json)?;

    let stride = m * d;
    let query_ids = (0..l)
        .map(|i| {
            let q = &data[i * stride..i * stride + d];
            if q.iter().all(|&v| v == 0.0) {
                None
            } else {
                Some(i as u64 + 1)
            }
        })
        .collect();
    let item_ids = (0..l).map(|i| i as u64 + 1).collect();
    let store = SequenceStore::from_parts(data, query_ids, item_ids, m, d)?;
    Ok((store, meta))
}

/// Writes one channel codebook with a CRC-32 footer.
pub fn write_codebook(path: &Path, codebook: &PQCodebook) -> Result<()> {
    let mut body = Vec::new();
    body.extend_from_slice(CODEBOOK_MAGIC);
    body.extend_from_slice(&(codebook.channel.0 as u32).to_le_bytes());
    body.extend_from_slice(&(codebook.n_subvectors() as u32).to_le_bytes());
    body.extend_from_slice(&(codebook.sub_dim() as u32).to_le_bytes());
    body.extend_from_slice(&(codebook.cardinality() as u32).to_le_bytes());
    for v in codebook.centroids_flat() {
        body.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&body);
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&body)?;
    w.write_all(&crc.to_le_bytes())?;
    w.flush()?;
    Ok(())
}

/// Reads a codebook file, verifying its CRC.
pub fn read_codebook(path: &Path) -> Result<PQCodebook> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 5 + 16 + 4 {
        return Err(Error::Format("codebook file too short".into()));
    }
    let (body, footer) = bytes.split_at(bytes.len() - 4);
    let stored_crc = u32::from_le_bytes([footer[0], footer[1], footer[2], footer[3]]);
    let actual_crc = crc32fast::hash(body);
    if stored_crc != actual_crc {
        return Err(Error::Format(format!(
            "codebook CRC mismatch: stored {stored_crc:#x}, computed {actual_crc:#x}"
        )));
    }
    let mut r = body;
    read_magic(&mut r, CODEBOOK_MAGIC, "codebook")?;
    let channel = read_u32(&mut r)? as usize;
    let n_subvectors = read_u32(&mut r)? as usize;
    let sub_dim = read_u32(&mut r)? as usize;
    let cardinality = read_u32(&mut r)? as usize;
    let expected = n_subvectors
        .checked_mul(cardinality)
        .and_then(|x| x.checked_mul(sub_dim))
        .ok_or_else(|| Error::Format("codebook shape overflow".into()))?;
    let centroids = read_f32s(&mut r, expected)?;
    PQCodebook::from_parts(ChannelId(channel), n_subvectors, sub_dim, cardinality, centroids)
}

/// Writes a distance table in its documented block layout.
pub fn write_table(path: &Path, table: &CrossModalDistanceTable) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(TABLE_MAGIC)?;
    let mode = match table.mode() {
        TableMode::Full => 0u32,
        TableMode::Half => 1u32,
    };
    write_u32(&mut w, mode)?;
    write_u32(&mut w, table.num_channels() as u32)?;
    write_u32(&mut w, table.n_subvectors() as u32)?;
    for &c in table.cardinalities() {
        write_u32(&mut w, c as u32)?;
    }
    write_f32s(&mut w, table.entries_flat())?;
    w.flush()?;
    Ok(())
}

/// Reads a distance table and spot-checks the symmetry invariant
/// `entry(i,j,b,a,c) == entry(j,i,b,c,a)` on a seeded 1% sample of entries
/// (at most 100k probes).
pub fn read_table(path: &Path) -> Result<CrossModalDistanceTable> {
    let mut r = BufReader::new(File::open(path)?);
    read_magic(&mut r, TABLE_MAGIC, "table")?;
    let mode = match read_u32(&mut r)? {
        0 => TableMode::Full,
        1 => TableMode::Half,
        other => return Err(Error::Format(format!("unknown table mode {other}"))),
    };
    let m = read_u32(&mut r)? as usize;
    let n_subvectors = read_u32(&mut r)? as usize;
    if m == 0 || n_subvectors == 0 {
        return Err(Error::Format("degenerate table header".into()));
    }
    let mut cardinalities = Vec::with_capacity(m);
    for _ in 0..m {
        cardinalities.push(read_u32(&mut r)? as usize);
    }
    let mut expected = 0usize;
    for i in 0..m {
        for j in 0..m {
            if matches!(mode, TableMode::Half) && i > j {
                continue;
            }
            expected += n_subvectors * cardinalities[i] * cardinalities[j];
        }
    }
    let entries = read_f32s(&mut r, expected)?;
    let table =
        CrossModalDistanceTable::from_parts(mode, m, n_subvectors, cardinalities, entries)?;

    let total = table.num_entries();
    let probes = (total / 100).clamp(16, 100_000);
    let mut rng = stream_rng(0xD157A11C, 0);
    for _ in 0..probes {
        let i = uniform_index(&mut rng, m);
        let j = uniform_index(&mut rng, m);
        let b = uniform_index(&mut rng, n_subvectors);
        let a = uniform_index(&mut rng, table.cardinalities()[i]);
        let c = uniform_index(&mut rng, table.cardinalities()[j]);
        let x = table.entry(i, j, b, a, c);
        let y = table.entry(j, i, b, c, a);
        if (x - y).abs() > 1e-6 {
            return Err(Error::Format(format!(
                "table symmetry violated at ({i},{j},{b},{a},{c}): {x} vs {y}"
            )));
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MultiModalRecord;
    use crate::pq::{tests::gaussian_store, train_pq};
    use crate::synth::GammaPreset;

    fn tmp(name: &str) -> tempfile::TempDir {
        tempfile::Builder::new().prefix(name).tempdir().unwrap()
    }

    #[test]
    fn dataset_roundtrip() {
        let dir = tmp("ds");
        let config = SynthConfig::different_norms(30, 8, GammaPreset::Equal, 11);
        let store = crate::synth::generate(&config).unwrap();
        let meta = DatasetMeta::from_config(&config).unwrap();
        let path = dir.path().join("seq.mmsq");
        write_dataset(&path, &store, &meta).unwrap();
        let (loaded, loaded_meta) = read_dataset(&path).unwrap();
        assert_eq!(loaded.raw_data(), store.raw_data());
        assert_eq!(loaded.len(), store.len());
        assert_eq!(loaded_meta, meta);
    }

    #[test]
    fn dataset_write_is_byte_deterministic() {
        let dir = tmp("ds-det");
        let config = SynthConfig::same_norms(20, 4, GammaPreset::Equal, 3);
        let store = crate::synth::generate(&config).unwrap();
        let meta = DatasetMeta::from_config(&config).unwrap();
        let p1 = dir.path().join("a.mmsq");
        let p2 = dir.path().join("b.mmsq");
        write_dataset(&p1, &store, &meta).unwrap();
        write_dataset(&p2, &store, &meta).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn zero_query_rows_load_as_padded() {
        let dir = tmp("ds-pad");
        let records = vec![
            MultiModalRecord::new(1, None, 1, vec![vec![0.0; 4], vec![1.0; 4]]),
            MultiModalRecord::new(2, Some(2), 2, vec![vec![0.5; 4], vec![1.0; 4]]),
        ];
        let store = SequenceStore::from_records(records).unwrap();
        let path = dir.path().join("pad.mmsq");
        write_dataset(&path, &store, &DatasetMeta::default()).unwrap();
        let (loaded, _) = read_dataset(&path).unwrap();
        assert_eq!(loaded.query_id(0), None);
        assert_eq!(loaded.query_id(1), Some(2));
    }

    #[test]
    fn codebook_roundtrip_and_crc() {
        let dir = tmp("cb");
        let store = gaussian_store(64, 2, 8, 12);
        let cb = train_pq(&store, ChannelId(1), 2, 16, 5).unwrap();
        let path = dir.path().join("ch1.mmpq");
        write_codebook(&path, &cb).unwrap();
        let loaded = read_codebook(&path).unwrap();
        assert_eq!(loaded, cb);

        // Flip one byte in the centroid region: the CRC must catch it.
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xFF;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_codebook(&path), Err(Error::Format(_))));
    }

    #[test]
    fn table_roundtrip_both_modes() {
        let store = gaussian_store(64, 3, 8, 13);
        let cbs: Vec<_> = (0..3)
            .map(|ch| train_pq(&store, ChannelId(ch), 2, 8, 1).unwrap())
            .collect();
        let dir = tmp("tbl");
        for (mode, name) in [(TableMode::Full, "full.mmdt"), (TableMode::Half, "half.mmdt")] {
            let table = CrossModalDistanceTable::build(&cbs, mode).unwrap();
            let path = dir.path().join(name);
            write_table(&path, &table).unwrap();
            let loaded = read_table(&path).unwrap();
            assert_eq!(loaded.entries_flat(), table.entries_flat());
            assert_eq!(loaded.cardinalities(), table.cardinalities());
        }
    }

    #[test]
    fn corrupted_table_fails_symmetry_check() {
        let store = gaussian_store(64, 2, 8, 14);
        let cbs: Vec<_> = (0..2)
            .map(|ch| train_pq(&store, ChannelId(ch), 2, 8, 1).unwrap())
            .collect();
        let table = CrossModalDistanceTable::build(&cbs, TableMode::Full).unwrap();
        let dir = tmp("tbl-bad");
        let path = dir.path().join("t.mmdt");
        write_table(&path, &table).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // Smash a stretch of entries in the (0,1) block so some sampled probe
        // sees the asymmetry.
        let header = 5 + 4 * (3 + 2);
        let block01 = header + 2 * 8 * 8 * 4;
        for k in 0..(8 * 8 * 4) {
            bytes[block01 + k] = bytes[block01 + k].wrapping_add(97);
        }
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_table(&path), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tmp("magic");
        let path = dir.path().join("x.bin");
        std::fs::write(&path, b"NOTAFORMAT").unwrap();
        assert!(read_dataset(&path).is_err());
        assert!(read_codebook(&path).is_err());
        assert!(read_table(&path).is_err());
    }
}
