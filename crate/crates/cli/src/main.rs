//! Batch front end for the retrieval benchmark: generate datasets, train
//! codebooks, run method-vs-oracle experiments, verify artifacts.
//!
//! Logs go to stderr; data goes to files; stdout carries one final summary
//! line per command.

mod config;
mod verify;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use config::{BenchConfig, GenConfig, TrainConfig, VerifyConfig};
use mmseeker::harness::{emit_report, run_experiment};
use mmseeker::io::{read_dataset, write_codebook, write_dataset, write_table, DatasetMeta};
use mmseeker::lut::{CrossModalDistanceTable, TableMode};
use mmseeker::pq::train_pq;
use mmseeker::synth;
use mmseeker::ChannelId;

#[derive(Parser)]
#[command(
    name = "mmseeker",
    version,
    about = "Multi-modal lifelong-sequence retrieval benchmark",
    after_help = "Worker threads default to machine parallelism; \
                  MMSEEKER_THREADS is used when --threads is absent."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Cap worker parallelism [default: machine parallelism, or
    /// MMSEEKER_THREADS]
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Override every seed in the config [default: seeds from config]
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the config's output directory [default: from config]
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset file from a config.
    Gen {
        /// TOML config with [dataset] and [output] sections
        #[arg(long)]
        config: PathBuf,
    },
    /// Train per-channel PQ codebooks (and optionally the distance table).
    Train {
        /// TOML config with a [train] section
        #[arg(long)]
        config: PathBuf,
    },
    /// Run benchmark experiments and emit report files.
    Bench {
        /// TOML config with one or more [[experiment]] blocks
        #[arg(long)]
        config: PathBuf,
    },
    /// Check trained artifacts for self-consistency.
    Verify {
        /// TOML config with a [verify] section
        #[arg(long)]
        config: PathBuf,
    },
}

fn init_logging(filter: Option<&str>) {
    let mut builder = env_logger::Builder::new();
    builder
        .filter_level(log::LevelFilter::Warn)
        .target(env_logger::Target::Stderr);
    if let Some(f) = filter {
        builder.parse_filters(f);
    }
    if let Ok(env) = std::env::var("RUST_LOG") {
        builder.parse_filters(&env);
    }
    let _ = builder.try_init();
}

fn configure_threads(cli_threads: Option<usize>) -> Result<()> {
    let threads = match cli_threads {
        Some(n) => Some(n),
        None => match std::env::var("MMSEEKER_THREADS") {
            Ok(v) => Some(
                v.parse::<usize>()
                    .with_context(|| format!("MMSEEKER_THREADS={v} is not a thread count"))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n == 0 {
            bail!("thread count must be positive");
        }
        mmseeker::configure_threads(n)?;
        info!("worker threads capped at {n}");
    }
    Ok(())
}

fn cmd_gen(config_path: &Path, seed: Option<u64>, out_dir: Option<&Path>) -> Result<String> {
    let mut config: GenConfig = config::load_toml(config_path)?;
    if let Some(s) = seed {
        config.dataset.seed = s;
    }
    let mut path = config.output.path.clone();
    if let Some(dir) = out_dir {
        let name = path
            .file_name()
            .context("output path has no file name")?
            .to_owned();
        path = dir.join(name);
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let store = synth::generate(&config.dataset)?;
    let meta = DatasetMeta::from_config(&config.dataset)?;
    write_dataset(&path, &store, &meta)?;
    Ok(format!(
        "gen: wrote {} (L={}, M={}, d={}, seed={})",
        path.display(),
        store.len(),
        store.num_channels(),
        store.dim(),
        config.dataset.seed
    ))
}

fn cmd_train(config_path: &Path, seed: Option<u64>, out_dir: Option<&Path>) -> Result<String> {
    let config: TrainConfig = config::load_toml(config_path)?;
    let mut section = config.train;
    if let Some(s) = seed {
        section.seed = s;
    }
    let dir = out_dir.unwrap_or(&section.out_dir).to_path_buf();
    std::fs::create_dir_all(&dir)?;
    let (store, _) = read_dataset(&section.dataset)?;
    let mut codebooks = Vec::with_capacity(store.num_channels());
    for ch in 0..store.num_channels() {
        let cb = train_pq(
            &store,
            ChannelId(ch),
            section.n_subvectors,
            section.cardinality,
            section.seed,
        )?;
        let path = dir.join(format!("channel{ch}.mmpq"));
        write_codebook(&path, &cb)?;
        info!("wrote codebook {}", path.display());
        codebooks.push(cb);
    }
    let mut extras = String::new();
    if section.table {
        let mode = if section.half_table {
            TableMode::Half
        } else {
            TableMode::Full
        };
        let table = CrossModalDistanceTable::build(&codebooks, mode)?;
        let path = dir.join("table.mmdt");
        write_table(&path, &table)?;
        extras = format!(", table with {} entries", table.num_entries());
    }
    Ok(format!(
        "train: wrote {} codebooks to {} (n_subvectors={}, cardinality={}{})",
        codebooks.len(),
        dir.display(),
        section.n_subvectors,
        codebooks.first().map_or(section.cardinality, |c| c.cardinality()),
        extras
    ))
}

fn cmd_bench(config_path: &Path, seed: Option<u64>, out_dir: Option<&Path>) -> Result<String> {
    let config: BenchConfig = config::load_toml(config_path)?;
    init_logging(config.log.as_deref());
    if config.experiments.is_empty() {
        bail!("config has no [[experiment]] blocks");
    }
    let base = out_dir
        .map(Path::to_path_buf)
        .or(config.out_dir.clone())
        .context("no output directory: set out_dir in the config or pass --out-dir")?;
    let multiple = config.experiments.len() > 1;
    for mut spec in config.experiments.clone() {
        if let Some(s) = seed {
            spec.seed = s;
        }
        let dir = if multiple {
            base.join(&spec.name)
        } else {
            base.clone()
        };
        info!("running experiment '{}'", spec.name);
        let report = run_experiment(&spec)?;
        let files = emit_report(&report, &dir)?;
        info!(
            "experiment '{}': {} files in {}",
            spec.name,
            files.len(),
            dir.display()
        );
        for m in &report.methods {
            if let Some(err) = &m.error {
                log::warn!("method {} failed: {err}", m.method);
            }
        }
    }
    Ok(format!(
        "bench: {} experiment(s) -> {}",
        config.experiments.len(),
        base.display()
    ))
}

fn cmd_verify(config_path: &Path, seed: Option<u64>) -> Result<String> {
    let config: VerifyConfig = config::load_toml(config_path)?;
    let mut section = config.verify;
    if let Some(s) = seed {
        section.seed = s;
    }
    let outcome = verify::run(&section)?;
    for v in &outcome.violations {
        eprintln!("violation: {v}");
    }
    if outcome.violations.is_empty() {
        Ok(format!("verify: PASS ({} checks)", outcome.checks))
    } else {
        bail!(
            "invariant violations: {} of {} checks failed",
            outcome.violations.len(),
            outcome.checks
        )
    }
}

fn main() {
    let cli = Cli::parse();
    init_logging(None);
    let result = configure_threads(cli.threads).and_then(|()| match &cli.command {
        Command::Gen { config } => cmd_gen(config, cli.seed, cli.out_dir.as_deref()),
        Command::Train { config } => cmd_train(config, cli.seed, cli.out_dir.as_deref()),
        Command::Bench { config } => cmd_bench(config, cli.seed, cli.out_dir.as_deref()),
        Command::Verify { config } => cmd_verify(config, cli.seed),
    });
    match result {
        Ok(summary) => println!("{summary}"),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}
