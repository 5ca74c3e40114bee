//! Retrieval of the top-K most relevant multi-modal query-item pairs from a
//! lifelong behavior sequence.
//!
//! A behavior sequence holds `L` aligned records; each record carries a search
//! query vector plus item modality vectors (text, image, attributes), all of
//! dimension `d`. Given a target record, the exact relevance of each
//! historical record is the inner product of the γ-weighted channel fusions —
//! an O(L·M·d) scan. This crate implements that oracle and several
//! approximations of it, plus the machinery to measure how well each
//! approximation recovers the oracle's top-K:
//!
//! - [`scoring`]: the exact fused score, its norm/unit-vector decomposition,
//!   and exact top-K retrieval (the ground truth).
//! - [`kmeans`], [`pq`], [`rq`], [`lsh`]: trainable compressors — Lloyd
//!   k-means, per-channel product quantization, multi-stage residual
//!   quantization, and random-hyperplane sign hashing.
//! - [`lut`]: precomputed cross-modal centroid inner-product tables; scoring
//!   a pair becomes `M² · n_subvectors` table lookups.
//! - [`cascade`]: cascading per-channel retrieval (flat or small-world graph
//!   indexes, M² probes, exact rerank) and Hamming-distance LSH ranking.
//! - [`synth`]: seeded synthetic sequences with controlled per-channel norms.
//! - [`harness`]: experiment runner, Recall@K, operation counters, reports.
//! - [`io`]: binary dataset/codebook/table file formats.
//!
//! With the default `parallel` feature, scans, training, and trials fan out
//! over rayon; disabling it gives a sequential build with identical results.

pub mod cascade;
pub mod error;
pub mod harness;
pub mod io;
pub mod kmeans;
pub mod lsh;
pub mod lut;
pub mod model;
mod par;
pub mod pq;
pub mod rng;
pub mod rq;
pub mod scoring;
pub mod synth;
pub mod topk;

pub use error::{Error, Result};
pub use model::{
    derive_gamma, ChannelId, FusionWeights, Method, MultiModalRecord, SequenceStore, TopKResult,
};
pub use par::configure_threads;
pub use topk::ScoredPosition;
