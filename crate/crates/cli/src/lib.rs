//! Command-line front end: graph preparation with an on-disk cache, training runs,
//! hyperparameter sweeps, attention statistics and embedding export.

pub mod commands;
pub mod config;
pub mod error;
pub mod prepare;
pub mod presets;
pub mod tables;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::CHECKPOINT_FILE;
use crate::config::{load_config, RunConfig};
use crate::error::{CliError, Result};
use crate::prepare::CacheStatus;

#[derive(Debug, Parser)]
#[command(name = "mlsg", version, about = "Multi-view graph neural network node classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Run configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Replication preset such as citeseer-20.
    #[arg(long, global = true)]
    pub preset: Option<String>,

    /// Base training seed; run r uses seed + r.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Weight of the feature-vs-topology l2,1 term.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,

    /// Weight of the semantic-vs-topology l2,1 term.
    #[arg(long, global = true)]
    pub beta: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and cache the measure subgraphs and the PPMI graph.
    Prepare,
    /// Train one model per configured seed.
    Train,
    /// Grid over alpha and beta.
    Sweep,
    /// Summarize measure and channel attention weights of a checkpoint.
    AttentionStats {
        /// Defaults to <out>/checkpoint.bin.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Write one channel's (or the aggregate) embeddings.
    ExportEmbeddings {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// fea, sem, ori or agg.
        #[arg(long, default_value = "agg")]
        which: String,
    },
}

/// Config file (with preset) first, then command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path, cli.preset.as_deref())?,
        None => config::parse_config("", std::path::Path::new("."), cli.preset.as_deref())?,
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(a) = cli.alpha {
        cfg.train.alpha = a;
    }
    if let Some(b) = cli.beta {
        cfg.train.beta = b;
    }
    cfg.validate().map_err(CliError::Usage)?;
    Ok(cfg)
}

fn describe(status: &CacheStatus) -> String {
    match status {
        CacheStatus::Computed => "computed".into(),
        CacheStatus::Reused => "reused".into(),
        CacheStatus::Regenerated(why) => format!("regenerated ({why})"),
    }
}

/// Runs one command; `cache_env` is the value of `MLSG_CACHE_DIR`.
pub fn run(cli: &Cli, cache_env: Option<PathBuf>) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be positive"));
        }
        // Fails only if a pool already exists in this process, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = resolve_config(cli)?;
    let cache = commands::cache_root(&cfg, cache_env);
    let checkpoint = |given: &Option<PathBuf>| given.clone().unwrap_or_else(|| cfg.out.join(CHECKPOINT_FILE));
    match &cli.command {
        Command::Prepare => {
            let p = commands::cmd_prepare(&cfg, &cache)?;
            println!("graphs {} in {}", describe(&p.status), p.dir.display());
        }
        Command::Train => {
            let report = commands::cmd_train(&cfg, &cache)?;
            for r in &report.rows {
                println!("{}\t{}\t{}\t{}", r.dataset, r.label_rate, r.seed, r.test_acc);
            }
            let best = &report.rows[report.best_by_test];
            let chosen = &report.rows[report.best_by_val];
            println!("best test_acc {} (seed {})", best.test_acc, best.seed);
            println!("validation-selected test_acc {} (seed {})", chosen.test_acc, chosen.seed);
        }
        Command::Sweep => {
            let grid = commands::cmd_sweep(&cfg, &cache)?;
            print!("{}", tables::format_sweep(&grid));
        }
        Command::AttentionStats { checkpoint: c } => {
            let report = commands::cmd_attention_stats(&cfg, &cache, &checkpoint(c))?;
            if let Some(m) = &report.measures {
                print!("{}", mlsg_core::attention::format_summaries(m));
            }
            print!("{}", mlsg_core::attention::format_summaries(&report.channels));
        }
        Command::ExportEmbeddings { checkpoint: c, which } => {
            let path = commands::cmd_export_embeddings(&cfg, &cache, &checkpoint(c), which)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
