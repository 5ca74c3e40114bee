//! Method-vs-oracle experiments: Recall@K, operation counters, reports.
//!
//! One experiment fixes a dataset, fusion weights, a method set, a K list,
//! and a trial count. Each trial draws a fresh target, computes the exact
//! top-K_max ground truth, runs every method, and records Recall@K per K.
//! Ground truth and prefix-rankable methods (exact, pq, lsh, rq) run once at
//! K_max per trial, with smaller K taken as prefixes; the cascade re-runs per
//! K because its stage-1 width follows K (the L → M²K → K filter).
//!
//! Wall-clock is measured around the query phase only; training and index
//! builds are reported separately. With `timing = false` every emitted time
//! is zero, which makes all output files byte-reproducible under a fixed
//! seed.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cascade::{
    build_flat_indexes, build_graph_indexes, cascade_topk, lsh_topk_indexed, GraphParams, LshIndex,
};
use crate::error::{Error, Result};
use crate::lsh::LshHasher;
use crate::lut::{
    encode_record, encode_sequence, lookups_per_pair, pq_topk_with_cost, CrossModalDistanceTable,
    EncodedSequence, TableMode,
};
use crate::model::{
    ChannelId, FusionWeights, Method, MultiModalRecord, SequenceStore, TopKResult,
};
use crate::pq::{train_pq, PQCodebook};
use crate::rng::{stream_rng, uniform_index};
use crate::rq::{residual_decode, residual_encode, train_residual};
use crate::scoring::exact_topk_with_cost;
use crate::synth::{self, GammaPreset, SynthConfig};

/// Fraction of the oracle's top-K recovered by a method's top-K.
pub fn recall_at_k(ground_truth: &TopKResult, candidate: &TopKResult, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("recall@0 is undefined".into()));
    }
    let gt: HashSet<u32> = ground_truth.positions(k).into_iter().collect();
    let hits = candidate
        .positions(k)
        .iter()
        .filter(|p| gt.contains(p))
        .count();
    Ok(hits as f64 / k as f64)
}

/// Where the sequence comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Synth(SynthConfig),
    File(PathBuf),
}

/// Compressor and index parameters shared by the approximate methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuantizerParams {
    pub n_subvectors: usize,
    pub cardinality: usize,
    pub rq_stages: usize,
    pub rq_cardinality: usize,
    pub lsh_bits: usize,
    /// Stage-1 candidates per cascade probe; 0 means "equal to the current K".
    pub k_stage1: usize,
    pub graph: GraphParams,
    /// Store both (i, j) and (j, i) table blocks, or halve the memory.
    pub half_table: bool,
}

impl Default for QuantizerParams {
    fn default() -> Self {
        Self {
            n_subvectors: 8,
            cardinality: 512,
            rq_stages: 4,
            rq_cardinality: 256,
            lsh_bits: 128,
            k_stage1: 0,
            graph: GraphParams::default(),
            half_table: false,
        }
    }
}

fn default_trials() -> usize {
    50
}

fn default_timing() -> bool {
    true
}

/// One experiment: dataset, methods, K grid, trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub dataset: DatasetSource,
    pub methods: Vec<Method>,
    pub ks: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Fusion weights; defaults to the dataset's own gamma metadata.
    #[serde(default)]
    pub gamma: Option<GammaPreset>,
    #[serde(default)]
    pub quantizer: QuantizerParams,
    #[serde(default)]
    pub seed: u64,
    /// When false, every emitted duration is zero (byte-reproducible output).
    #[serde(default = "default_timing")]
    pub timing: bool,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::InvalidParameter("experiment needs a name".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("no methods selected".into()));
        }
        let mut seen = HashSet::new();
        for m in &self.methods {
            if !seen.insert(*m) {
                return Err(Error::InvalidParameter(format!("duplicate method {m}")));
            }
        }
        if self.ks.is_empty() {
            return Err(Error::InvalidParameter("no K values".into()));
        }
        if self.ks.iter().any(|&k| k == 0) {
            return Err(Error::InvalidParameter("K must be positive".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("need at least one trial".into()));
        }
        if let DatasetSource::Synth(config) = &self.dataset {
            config.validate()?;
        }
        Ok(())
    }
}

/// Per-trial measurements of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// Recall@K per entry of the spec's K list, in K order.
    pub recalls: Vec<f64>,
    /// Primary operation counter per K (table lookups for pq, rerank count
    /// for cascade, scored records for the scan methods).
    pub lookups: Vec<u64>,
    /// Query-phase wall clock per K, microseconds. Scan methods run once at
    /// K_max, so the same value repeats; the cascade is timed per K.
    pub query_us: Vec<u64>,
}

/// Everything recorded about one method in one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    /// Training plus index/table build time, microseconds.
    pub build_us: u64,
    pub trials: Vec<TrialOutcome>,
    /// Stage-1 probes per trial (cascade only, zero otherwise).
    pub probes_per_trial: u64,
    /// A method failure aborts that method only; the rest of the experiment
    /// proceeds and the failure lands here.
    pub error: Option<String>,
}

impl MethodReport {
    fn failed(method: Method, error: String) -> Self {
        Self {
            method,
            build_us: 0,
            trials: Vec::new(),
            probes_per_trial: 0,
            error: Some(error),
        }
    }

    /// Mean recall at the `ki`-th K of the spec's list.
    pub fn mean_recall(&self, ki: usize) -> f64 {
        if self.trials.is_empty() {
            return 0.0;
        }
        self.trials.iter().map(|t| t.recalls[ki]).sum::<f64>() / self.trials.len() as f64
    }

    pub fn std_recall(&self, ki: usize) -> f64 {
        if self.trials.is_empty() {
            return 0.0;
        }
        let mean = self.mean_recall(ki);
        let var = self
            .trials
            .iter()
            .map(|t| (t.recalls[ki] - mean).powi(2))
            .sum::<f64>()
            / self.trials.len() as f64;
        var.sqrt()
    }
}

/// Results of one experiment across all methods, Ks, and trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub spec: ExperimentSpec,
    /// Sequence length actually used.
    pub l: usize,
    pub dim: usize,
    pub num_channels: usize,
    /// Resolved per-channel fusion weights.
    pub gamma: Vec<f64>,
    pub methods: Vec<MethodReport>,
    /// Known departures from the reference setup, echoed into reports.
    pub deviations: Vec<String>,
}

struct PqArtifacts {
    codebooks: Vec<PQCodebook>,
    table: CrossModalDistanceTable,
    encoded: EncodedSequence,
}

fn build_pq(spec: &ExperimentSpec, store: &SequenceStore) -> Result<PqArtifacts> {
    let q = &spec.quantizer;
    let codebooks: Vec<PQCodebook> = (0..store.num_channels())
        .map(|ch| {
            train_pq(
                store,
                ChannelId(ch),
                q.n_subvectors,
                q.cardinality,
                crate::rng::derive_seed(spec.seed, 1, ch as u64),
            )
        })
        .collect::<Result<_>>()?;
    let mode = if q.half_table {
        TableMode::Half
    } else {
        TableMode::Full
    };
    let table = CrossModalDistanceTable::build(&codebooks, mode)?;
    let encoded = encode_sequence(store, &codebooks)?;
    Ok(PqArtifacts {
        codebooks,
        table,
        encoded,
    })
}

/// Reconstructs the store from residual codes: the `rq` baseline scores the
/// exact target against decoded keys.
fn build_rq_store(spec: &ExperimentSpec, store: &SequenceStore) -> Result<SequenceStore> {
    let q = &spec.quantizer;
    let mut decoded = vec![0.0f32; store.raw_data().len()];
    let stride = store.num_channels() * store.dim();
    for ch in 0..store.num_channels() {
        let codebook = train_residual(
            store,
            ChannelId(ch),
            q.rq_stages,
            q.rq_cardinality,
            crate::rng::derive_seed(spec.seed, 2, ch as u64),
        )?;
        for idx in 0..store.len() {
            let code = residual_encode(&codebook, store.channel_vector(idx, ch))?;
            let rebuilt = residual_decode(&codebook, &code)?;
            let base = idx * stride + ch * store.dim();
            decoded[base..base + store.dim()].copy_from_slice(&rebuilt);
        }
    }
    let query_ids = (0..store.len()).map(|i| store.query_id(i)).collect();
    let item_ids = (0..store.len()).map(|i| store.item_id(i)).collect();
    SequenceStore::from_parts(
        decoded,
        query_ids,
        item_ids,
        store.num_channels(),
        store.dim(),
    )
}

fn resolve_gamma(spec: &ExperimentSpec, meta_gamma: Option<&[f64]>, m: usize) -> Result<FusionWeights> {
    if let Some(preset) = &spec.gamma {
        return preset.weights(m);
    }
    if let DatasetSource::Synth(config) = &spec.dataset {
        return config.fusion_weights();
    }
    if let Some(g) = meta_gamma {
        if !g.is_empty() {
            return FusionWeights::from_gamma(g);
        }
    }
    Err(Error::InvalidParameter(
        "no fusion weights: set gamma in the experiment or dataset metadata".into(),
    ))
}

fn load_dataset(spec: &ExperimentSpec) -> Result<(SequenceStore, Option<Vec<f64>>)> {
    match &spec.dataset {
        DatasetSource::Synth(config) => Ok((synth::generate(config)?, None)),
        DatasetSource::File(path) => {
            let (store, meta) = crate::io::read_dataset(path)?;
            Ok((store, Some(meta.gamma)))
        }
    }
}

fn trial_target(spec: &ExperimentSpec, store: &SequenceStore, trial: usize) -> Result<MultiModalRecord> {
    match &spec.dataset {
        DatasetSource::Synth(config) => synth::generate_target(config, trial),
        DatasetSource::File(_) => {
            // Seeded draw of an in-sequence record as the probe.
            let mut rng = stream_rng(spec.seed, (0xFFFEu64 << 48) | trial as u64);
            let idx = uniform_index(&mut rng, store.len());
            Ok(store.record(idx))
        }
    }
}

/// Runs one experiment: generates/loads data, trains what each method needs,
/// and measures Recall@K against the exact oracle over `trials` targets.
/// Deterministic given the spec (timing values aside).
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RecallReport> {
    spec.validate()?;
    let (store, meta_gamma) = load_dataset(spec)?;
    let fw = resolve_gamma(spec, meta_gamma.as_deref(), store.num_channels())?;
    let k_max = *spec.ks.iter().max().expect("non-empty ks");
    if k_max > store.len() {
        return Err(Error::KTooLarge {
            k: k_max,
            available: store.len(),
        });
    }
    let mut ks = spec.ks.clone();
    ks.sort_unstable();
    ks.dedup();

    // Per-trial targets and exact ground truth at K_max.
    let targets: Vec<MultiModalRecord> = (0..spec.trials)
        .map(|t| trial_target(spec, &store, t))
        .collect::<Result<_>>()?;
    let mut ground_truth = Vec::with_capacity(spec.trials);
    let mut exact_trials = Vec::with_capacity(spec.trials);
    for target in &targets {
        let started = Instant::now();
        let (result, cost) = exact_topk_with_cost(&store, target, &fw, k_max)?;
        let elapsed = started.elapsed().as_micros() as u64;
        exact_trials.push(TrialOutcome {
            recalls: vec![1.0; ks.len()],
            lookups: vec![cost.score_evals; ks.len()],
            query_us: vec![elapsed; ks.len()],
        });
        ground_truth.push(result);
    }

    let mut deviations = vec![
        "reference recall tables come from private datasets; synthetic analogs are qualitative"
            .to_string(),
    ];
    if spec.methods.contains(&Method::Rq) {
        deviations.push(
            "rq baseline uses non-neural residual k-means in place of the learned encoder-decoder quantizer"
                .to_string(),
        );
    }

    let mut methods = Vec::with_capacity(spec.methods.len());
    for &method in &spec.methods {
        let report = match method {
            Method::Exact => MethodReport {
                method,
                build_us: 0,
                trials: exact_trials.clone(),
                probes_per_trial: 0,
                error: None,
            },
            Method::Pq => run_pq(spec, &store, &fw, &targets, &ground_truth, &ks),
            Method::CascadeFlat | Method::CascadeGraph => {
                run_cascade(spec, method, &store, &fw, &targets, &ground_truth, &ks)
            }
            Method::Lsh => run_lsh(spec, &store, &fw, &targets, &ground_truth, &ks),
            Method::Rq => run_rq(spec, &store, &fw, &targets, &ground_truth, &ks),
        };
        methods.push(report);
    }

    Ok(RecallReport {
        spec: spec.clone(),
        l: store.len(),
        dim: store.dim(),
        num_channels: store.num_channels(),
        gamma: fw.gamma().to_vec(),
        methods,
        deviations,
    })
}

fn prefix_trials(
    ks: &[usize],
    ground_truth: &[TopKResult],
    mut run: impl FnMut(usize, &TopKResult) -> Result<(TopKResult, u64)>,
) -> Result<(Vec<TrialOutcome>, u64)> {
    let mut trials = Vec::with_capacity(ground_truth.len());
    let mut lookups_once = 0;
    for (t, gt) in ground_truth.iter().enumerate() {
        let started = Instant::now();
        let (result, lookups) = run(t, gt)?;
        let elapsed = started.elapsed().as_micros() as u64;
        lookups_once = lookups;
        let recalls = ks
            .iter()
            .map(|&k| recall_at_k(gt, &result, k))
            .collect::<Result<Vec<_>>>()?;
        trials.push(TrialOutcome {
            recalls,
            lookups: vec![lookups; ks.len()],
            query_us: vec![elapsed; ks.len()],
        });
    }
    Ok((trials, lookups_once))
}

fn run_pq(
    spec: &ExperimentSpec,
    store: &SequenceStore,
    fw: &FusionWeights,
    targets: &[MultiModalRecord],
    ground_truth: &[TopKResult],
    ks: &[usize],
) -> MethodReport {
    let build = Instant::now();
    let artifacts = match build_pq(spec, store) {
        Ok(a) => a,
        Err(e) => return MethodReport::failed(Method::Pq, e.to_string()),
    };
    let build_us = build.elapsed().as_micros() as u64;
    let k_max = *ks.last().expect("non-empty");
    let result = prefix_trials(ks, ground_truth, |t, _| {
        let codes = encode_record(&artifacts.codebooks, &targets[t])?;
        let (result, cost) =
            pq_topk_with_cost(&artifacts.table, &artifacts.encoded, &codes, fw, k_max)?;
        Ok((result, cost.table_lookups))
    });
    match result {
        Ok((trials, lookups)) => {
            debug_assert_eq!(
                lookups,
                store.len() as u64 * lookups_per_pair(&artifacts.table)
            );
            MethodReport {
                method: Method::Pq,
                build_us,
                trials,
                probes_per_trial: 0,
                error: None,
            }
        }
        Err(e) => MethodReport::failed(Method::Pq, e.to_string()),
    }
}

fn run_lsh(
    spec: &ExperimentSpec,
    store: &SequenceStore,
    fw: &FusionWeights,
    targets: &[MultiModalRecord],
    ground_truth: &[TopKResult],
    ks: &[usize],
) -> MethodReport {
    let build = Instant::now();
    let hasher = match LshHasher::new(
        spec.quantizer.lsh_bits,
        store.dim(),
        crate::rng::derive_seed(spec.seed, 3, 0),
    ) {
        Ok(h) => h,
        Err(e) => return MethodReport::failed(Method::Lsh, e.to_string()),
    };
    let index = match LshIndex::build(&hasher, store, fw) {
        Ok(i) => i,
        Err(e) => return MethodReport::failed(Method::Lsh, e.to_string()),
    };
    let build_us = build.elapsed().as_micros() as u64;
    let k_max = *ks.last().expect("non-empty");
    let result = prefix_trials(ks, ground_truth, |t, _| {
        let result = lsh_topk_indexed(&hasher, &index, &targets[t], fw, k_max)?;
        Ok((result, store.len() as u64))
    });
    match result {
        Ok((trials, _)) => MethodReport {
            method: Method::Lsh,
            build_us,
            trials,
            probes_per_trial: 0,
            error: None,
        },
        Err(e) => MethodReport::failed(Method::Lsh, e.to_string()),
    }
}

fn run_rq(
    spec: &ExperimentSpec,
    store: &SequenceStore,
    fw: &FusionWeights,
    targets: &[MultiModalRecord],
    ground_truth: &[TopKResult],
    ks: &[usize],
) -> MethodReport {
    let build = Instant::now();
    let decoded_store = match build_rq_store(spec, store) {
        Ok(s) => s,
        Err(e) => return MethodReport::failed(Method::Rq, e.to_string()),
    };
    let build_us = build.elapsed().as_micros() as u64;
    let k_max = *ks.last().expect("non-empty");
    let result = prefix_trials(ks, ground_truth, |t, _| {
        let (result, cost) = exact_topk_with_cost(&decoded_store, &targets[t], fw, k_max)?;
        Ok((
            TopKResult::new(Method::Rq, result.entries().to_vec()),
            cost.score_evals,
        ))
    });
    match result {
        Ok((trials, _)) => MethodReport {
            method: Method::Rq,
            build_us,
            trials,
            probes_per_trial: 0,
            error: None,
        },
        Err(e) => MethodReport::failed(Method::Rq, e.to_string()),
    }
}

fn run_cascade(
    spec: &ExperimentSpec,
    method: Method,
    store: &SequenceStore,
    fw: &FusionWeights,
    targets: &[MultiModalRecord],
    ground_truth: &[TopKResult],
    ks: &[usize],
) -> MethodReport {
    let build = Instant::now();
    let indexes = match method {
        Method::CascadeFlat => build_flat_indexes(store),
        Method::CascadeGraph => {
            match build_graph_indexes(
                store,
                spec.quantizer.graph,
                crate::rng::derive_seed(spec.seed, 4, 0),
            ) {
                Ok(ix) => ix,
                Err(e) => return MethodReport::failed(method, e.to_string()),
            }
        }
        _ => unreachable!("run_cascade only handles cascade methods"),
    };
    let build_us = build.elapsed().as_micros() as u64;

    let mut trials = Vec::with_capacity(targets.len());
    let mut probes = 0;
    for (target, gt) in targets.iter().zip(ground_truth) {
        let mut recalls = Vec::with_capacity(ks.len());
        let mut lookups = Vec::with_capacity(ks.len());
        let mut query_us = Vec::with_capacity(ks.len());
        for &k in ks {
            // Stage-1 width tracks K unless pinned in the spec.
            let k_stage1 = if spec.quantizer.k_stage1 == 0 {
                k
            } else {
                spec.quantizer.k_stage1.max(k)
            };
            let started = Instant::now();
            let outcome = match cascade_topk(&indexes, store, target, fw, k, k_stage1) {
                Ok(o) => o,
                Err(e) => return MethodReport::failed(method, e.to_string()),
            };
            query_us.push(started.elapsed().as_micros() as u64);
            probes = outcome.cost.probes;
            lookups.push(outcome.cost.reranked);
            match recall_at_k(gt, &outcome.result, k) {
                Ok(r) => recalls.push(r),
                Err(e) => return MethodReport::failed(method, e.to_string()),
            }
        }
        trials.push(TrialOutcome {
            recalls,
            lookups,
            query_us,
        });
    }
    MethodReport {
        method,
        build_us,
        trials,
        probes_per_trial: probes,
        error: None,
    }
}

fn fmt_f64(v: f64) -> String {
    // Shortest round-trip formatting: deterministic and exact.
    format!("{v}")
}

/// Writes the report files into `out_dir`:
/// `results.csv` (one row per method × K × trial), `aggregate.csv`,
/// `plot.csv` (K on the x-axis, one recall series per method), and
/// `manifest.json` with the full spec echo.
///
/// Re-emitting the same report produces byte-identical files.
pub fn emit_report(report: &RecallReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let timing = report.spec.timing;
    let mut ks = report.spec.ks.clone();
    ks.sort_unstable();
    ks.dedup();

    let mut written = Vec::new();

    // Trial rows.
    let mut results = String::from("method,K,trial,recall,lookups,query_us\n");
    for m in &report.methods {
        for (ki, &k) in ks.iter().enumerate() {
            for (t, trial) in m.trials.iter().enumerate() {
                let us = if timing { trial.query_us[ki] } else { 0 };
                results.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    m.method,
                    k,
                    t,
                    fmt_f64(trial.recalls[ki]),
                    trial.lookups[ki],
                    us
                ));
            }
        }
    }
    let results_path = out_dir.join("results.csv");
    std::fs::write(&results_path, results)?;
    written.push(results_path);

    // Aggregates.
    let mut aggregate =
        String::from("method,K,mean_recall,std_recall,mean_lookups,mean_query_us,build_us,error\n");
    for m in &report.methods {
        let build = if timing { m.build_us } else { 0 };
        for (ki, &k) in ks.iter().enumerate() {
            let (mean_lookups, mean_us) = if m.trials.is_empty() {
                (0.0, 0.0)
            } else {
                (
                    m.trials.iter().map(|t| t.lookups[ki] as f64).sum::<f64>()
                        / m.trials.len() as f64,
                    m.trials.iter().map(|t| t.query_us[ki] as f64).sum::<f64>()
                        / m.trials.len() as f64,
                )
            };
            let mean_us = if timing { mean_us } else { 0.0 };
            aggregate.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                m.method,
                k,
                fmt_f64(m.mean_recall(ki)),
                fmt_f64(m.std_recall(ki)),
                fmt_f64(mean_lookups),
                fmt_f64(mean_us),
                build,
                m.error.as_deref().unwrap_or("")
            ));
        }
    }
    let aggregate_path = out_dir.join("aggregate.csv");
    std::fs::write(&aggregate_path, aggregate)?;
    written.push(aggregate_path);

    // Plot data: one series per method.
    let mut plot = String::from("K");
    for m in &report.methods {
        plot.push(',');
        plot.push_str(m.method.name());
    }
    plot.push('\n');
    for (ki, &k) in ks.iter().enumerate() {
        plot.push_str(&k.to_string());
        for m in &report.methods {
            plot.push(',');
            plot.push_str(&fmt_f64(m.mean_recall(ki)));
        }
        plot.push('\n');
    }
    let plot_path = out_dir.join("plot.csv");
    std::fs::write(&plot_path, plot)?;
    written.push(plot_path);

    // Manifest: the full spec echo plus environment-independent facts.
    #[derive(Serialize)]
    struct Manifest<'a> {
        spec: &'a ExperimentSpec,
        l: usize,
        dim: usize,
        num_channels: usize,
        gamma: &'a [f64],
        deviations: &'a [String],
    }
    let manifest = serde_json::to_vec_pretty(&Manifest {
        spec: &report.spec,
        l: report.l,
        dim: report.dim,
        num_channels: report.num_channels,
        gamma: &report.gamma,
        deviations: &report.deviations,
    })?;
    let manifest_path = out_dir.join("manifest.json");
    std::fs::write(&manifest_path, manifest)?;
    written.push(manifest_path);

    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Method;
    use crate::synth::GammaPreset;
    use crate::topk::ScoredPosition;

    fn topk_of(method: Method, positions: &[u32]) -> TopKResult {
        let entries = positions
            .iter()
            .enumerate()
            .map(|(i, &p)| ScoredPosition {
                position: p,
                score: 1000.0 - i as f64,
            })
            .collect();
        TopKResult::new(method, entries)
    }

    #[test]
    fn recall_examples() {
        let gt = topk_of(Method::Exact, &(1..=10).collect::<Vec<_>>());
        assert_eq!(recall_at_k(&gt, &gt, 10).unwrap(), 1.0);
        let disjoint = topk_of(Method::Pq, &(91..=100).collect::<Vec<_>>());
        assert_eq!(recall_at_k(&gt, &disjoint, 10).unwrap(), 0.0);
        let half = topk_of(Method::Pq, &[1, 2, 3, 4, 5, 90, 91, 92, 93, 94]);
        assert_eq!(recall_at_k(&gt, &half, 10).unwrap(), 0.5);
        assert!(recall_at_k(&gt, &half, 0).is_err());
    }

    fn tiny_spec(methods: Vec<Method>) -> ExperimentSpec {
        ExperimentSpec {
            name: "tiny".into(),
            dataset: DatasetSource::Synth(SynthConfig::different_norms(
                120,
                16,
                GammaPreset::Equal,
                7,
            )),
            methods,
            ks: vec![4, 8, 16],
            trials: 3,
            gamma: None,
            quantizer: QuantizerParams {
                cardinality: 32,
                rq_cardinality: 16,
                rq_stages: 2,
                ..QuantizerParams::default()
            },
            seed: 11,
            timing: false,
        }
    }

    #[test]
    fn exact_only_reports_all_ones() {
        let report = run_experiment(&tiny_spec(vec![Method::Exact])).unwrap();
        assert_eq!(report.methods.len(), 1);
        for trial in &report.methods[0].trials {
            assert!(trial.recalls.iter().all(|&r| r == 1.0));
        }
    }

    #[test]
    fn counters_follow_the_formulas() {
        let spec = tiny_spec(vec![Method::Pq, Method::CascadeFlat]);
        let report = run_experiment(&spec).unwrap();
        let pq = &report.methods[0];
        assert!(pq.error.is_none(), "{:?}", pq.error);
        // L * M^2 * n_subvectors lookups per target.
        let expected = 120 * 16 * 8;
        for trial in &pq.trials {
            assert!(trial.lookups.iter().all(|&l| l == expected));
        }
        let cascade = &report.methods[1];
        assert_eq!(cascade.probes_per_trial, 16);
        for trial in &cascade.trials {
            // Rerank counts are bounded by M^2 * k_stage1 per K.
            for (ki, &k) in [4usize, 8, 16].iter().enumerate() {
                assert!(trial.lookups[ki] <= 16 * k as u64);
            }
        }
    }

    #[test]
    fn run_is_deterministic() {
        let spec = tiny_spec(vec![Method::Pq, Method::Lsh, Method::Rq]);
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        for (ma, mb) in a.methods.iter().zip(&b.methods) {
            for (ta, tb) in ma.trials.iter().zip(&mb.trials) {
                assert_eq!(ta.recalls, tb.recalls);
                assert_eq!(ta.lookups, tb.lookups);
            }
        }
    }

    #[test]
    fn emit_writes_expected_rows_and_is_reproducible() {
        let mut spec = tiny_spec(vec![Method::Exact, Method::Pq]);
        spec.trials = 5;
        spec.ks = vec![4, 8, 12, 16];
        let report = run_experiment(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let first = emit_report(&report, dir.path()).unwrap();
        let results = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
        // Header + 2 methods x 4 Ks x 5 trials.
        assert_eq!(results.lines().count(), 1 + 2 * 4 * 5);
        let aggregate = std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
        assert_eq!(aggregate.lines().count(), 1 + 2 * 4);
        let plot = std::fs::read_to_string(dir.path().join("plot.csv")).unwrap();
        assert_eq!(plot.lines().next().unwrap(), "K,exact,pq");
        assert_eq!(plot.lines().count(), 1 + 4);

        let before: Vec<Vec<u8>> = first
            .iter()
            .map(|p| std::fs::read(p).unwrap())
            .collect();
        let again = emit_report(&report, dir.path()).unwrap();
        for (path, prev) in again.iter().zip(before) {
            assert_eq!(std::fs::read(path).unwrap(), prev, "{path:?} changed");
        }
    }

    #[test]
    fn method_failure_is_isolated() {
        let mut spec = tiny_spec(vec![Method::Pq, Method::Exact]);
        // d=16 with 5 subvectors is indivisible: pq must fail, exact survive.
        spec.quantizer.n_subvectors = 5;
        let report = run_experiment(&spec).unwrap();
        assert!(report.methods[0].error.is_some());
        assert!(report.methods[1].error.is_none());
        assert_eq!(report.methods[1].trials.len(), 3);
    }

    #[test]
    fn spec_validation_rejects_nonsense() {
        let mut spec = tiny_spec(vec![Method::Exact]);
        spec.ks = vec![];
        assert!(spec.validate().is_err());
        let mut spec = tiny_spec(vec![Method::Exact, Method::Exact]);
        spec.trials = 1;
        assert!(spec.validate().is_err());
        let mut spec = tiny_spec(vec![Method::Exact]);
        spec.ks = vec![500];
        assert!(run_experiment(&spec).is_err());
    }
}
