use std::fs;
use std::path::{Path, PathBuf};

use mlsg_core::attention::{attention_statistics, format_summaries, AttentionSummary};
use mlsg_core::dataset::LabeledDataset;
use mlsg_core::gnn::ChannelTag;
use mlsg_core::training::{
    evaluate_accuracy, format_history, forward_full, load_checkpoint, save_checkpoint, train, ModelParams,
    TrainConfig, TrainingData,
};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::prepare::{ensure_prepared, load_data, Prepared};
use crate::tables::{format_embeddings, format_summary, format_sweep, SummaryRow, SweepGrid};

pub const SUMMARY_FILE: &str = "summary.tsv";
pub const SWEEP_FILE: &str = "sweep.tsv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const MEASURE_STATS_FILE: &str = "attention_measures.tsv";
pub const CHANNEL_STATS_FILE: &str = "attention_channels.tsv";

pub fn history_file(seed: u64) -> String {
    format!("history_seed{seed}.tsv")
}

pub fn checkpoint_file(seed: u64) -> String {
    format!("checkpoint_seed{seed}.bin")
}

pub fn embeddings_file(which: ChannelTag) -> String {
    format!("embeddings_{}.tsv", which.name())
}

/// Where graph caches live: `MLSG_CACHE_DIR` when set, otherwise `<out>/cache`.
pub fn cache_root(cfg: &RunConfig, env_override: Option<PathBuf>) -> PathBuf {
    env_override.unwrap_or_else(|| cfg.out.join("cache"))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::file(format!("writing {}", path.display()), e))
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::file(format!("creating {}", cfg.out.display()), e))?;
    Ok(&cfg.out)
}

struct Loaded {
    dataset: LabeledDataset,
    prepared: Prepared,
    data: TrainingData,
}

fn load(cfg: &RunConfig, cache_root: &Path) -> Result<Loaded> {
    let dataset = load_data(cfg)?;
    let prepared = ensure_prepared(cfg, &dataset, cache_root)?;
    let data = TrainingData::new(&dataset, prepared.inputs(&dataset.topology)?)?;
    Ok(Loaded {
        dataset,
        prepared,
        data,
    })
}

pub fn cmd_prepare(cfg: &RunConfig, cache_root: &Path) -> Result<Prepared> {
    let dataset = load_data(cfg)?;
    ensure_prepared(cfg, &dataset, cache_root)
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub params: ModelParams,
    pub val_acc: f64,
    pub test_acc: f64,
    pub history: Vec<mlsg_core::training::EpochRecord>,
}

/// Trains from a seeded initialization and scores the validation-selected model.
pub fn run_once(data: &TrainingData, train_cfg: &TrainConfig) -> Result<RunResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let initial = ModelParams::init(data.n(), data.d(), data.num_classes, train_cfg, &mut rng)?;
    let outcome = train(initial, data, train_cfg, &mut |_| Ok(()))?;
    let (val_acc, test_acc) = match outcome.best_record() {
        Some(r) => (r.val_acc, r.test_acc),
        None => {
            let pass = forward_full(&outcome.best, data, train_cfg, None)?;
            let acc = |nodes: &[usize]| evaluate_accuracy(&pass.probs, &data.labels, nodes);
            (acc(&data.splits.val), acc(&data.splits.test))
        }
    };
    Ok(RunResult {
        seed: train_cfg.seed,
        params: outcome.best,
        val_acc,
        test_acc,
        history: outcome.history,
    })
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub prepared: Prepared,
    pub rows: Vec<SummaryRow>,
    /// Index of the run with the highest test accuracy.
    pub best_by_test: usize,
    /// Index of the run with the highest validation accuracy; its model is `checkpoint.bin`.
    pub best_by_val: usize,
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub fn cmd_train(cfg: &RunConfig, cache_root: &Path) -> Result<TrainReport> {
    let loaded = load(cfg, cache_root)?;
    let out = out_dir(cfg)?;
    let mut runs = Vec::new();
    for seed in cfg.seeds() {
        let train_cfg = TrainConfig {
            seed,
            ..cfg.train.clone()
        };
        log::info!("training seed {seed}");
        let run = run_once(&loaded.data, &train_cfg)?;
        write(&out.join(history_file(seed)), format_history(&run.history))?;
        save_checkpoint(&out.join(checkpoint_file(seed)), &run.params, cfg.train.channels)?;
        runs.push(run);
    }
    let label_rate = loaded.dataset.splits.train.len() / loaded.dataset.num_classes.max(1);
    let rows: Vec<SummaryRow> = runs
        .iter()
        .map(|r| SummaryRow {
            dataset: cfg.data.name.clone(),
            label_rate,
            seed: r.seed,
            test_acc: r.test_acc,
        })
        .collect();
    write(&out.join(crate::commands::SUMMARY_FILE), format_summary(&rows))?;
    let best_by_test = argmax(runs.iter().map(|r| r.test_acc));
    let best_by_val = argmax(runs.iter().map(|r| r.val_acc));
    save_checkpoint(&out.join(CHECKPOINT_FILE), &runs[best_by_val].params, cfg.train.channels)?;
    Ok(TrainReport {
        prepared: loaded.prepared,
        rows,
        best_by_test,
        best_by_val,
    })
}

pub fn cmd_sweep(cfg: &RunConfig, cache_root: &Path) -> Result<SweepGrid> {
    if cfg.alphas.is_empty() || cfg.betas.is_empty() {
        return Err(CliError::usage("sweep grids must be nonempty"));
    }
    let loaded = load(cfg, cache_root)?;
    let out = out_dir(cfg)?;
    let mut acc = Array2::zeros((cfg.alphas.len(), cfg.betas.len()));
    for (i, &alpha) in cfg.alphas.iter().enumerate() {
        for (j, &beta) in cfg.betas.iter().enumerate() {
            let train_cfg = TrainConfig {
                alpha,
                beta,
                ..cfg.train.clone()
            };
            log::info!("sweep alpha={alpha} beta={beta}");
            acc[[i, j]] = run_once(&loaded.data, &train_cfg)?.test_acc;
        }
    }
    let grid = SweepGrid {
        alphas: cfg.alphas.clone(),
        betas: cfg.betas.clone(),
        acc,
    };
    write(&out.join(SWEEP_FILE), format_sweep(&grid))?;
    Ok(grid)
}

fn evaluate_checkpoint(cfg: &RunConfig, cache_root: &Path, checkpoint: &Path) -> Result<(Loaded, TrainConfig, mlsg_core::training::ForwardPass)> {
    let (params, channels) = load_checkpoint(checkpoint)?;
    let loaded = load(cfg, cache_root)?;
    let train_cfg = TrainConfig {
        channels,
        ..cfg.train.clone()
    };
    let pass = forward_full(&params, &loaded.data, &train_cfg, None)?;
    Ok((loaded, train_cfg, pass))
}

#[derive(Debug, Clone)]
pub struct AttentionReport {
    /// Measure weights; absent when the checkpoint has no feature channel.
    pub measures: Option<Vec<AttentionSummary>>,
    pub channels: Vec<AttentionSummary>,
}

pub fn cmd_attention_stats(cfg: &RunConfig, cache_root: &Path, checkpoint: &Path) -> Result<AttentionReport> {
    let (loaded, train_cfg, pass) = evaluate_checkpoint(cfg, cache_root, checkpoint)?;
    let out = out_dir(cfg)?;
    let measures = match pass.fusion_weights() {
        Some(w) => {
            let names: Vec<&str> = loaded.prepared.measures.iter().map(|m| m.name()).collect();
            let rows = attention_statistics(w, &names)?;
            write(&out.join(MEASURE_STATS_FILE), format_summaries(&rows))?;
            Some(rows)
        }
        None => None,
    };
    let c = train_cfg.channels;
    let names: Vec<&str> = [(c.fea, ChannelTag::Feature), (c.sem, ChannelTag::Semantic), (c.ori, ChannelTag::Topology)]
        .into_iter()
        .filter(|(on, _)| *on)
        .map(|(_, t)| t.name())
        .collect();
    let channels = attention_statistics(pass.channel_weights(), &names)?;
    write(&out.join(CHANNEL_STATS_FILE), format_summaries(&channels))?;
    Ok(AttentionReport { measures, channels })
}

pub fn parse_channel_tag(which: &str) -> Result<ChannelTag> {
    match which {
        "fea" => Ok(ChannelTag::Feature),
        "sem" => Ok(ChannelTag::Semantic),
        "ori" => Ok(ChannelTag::Topology),
        "agg" => Ok(ChannelTag::Aggregate),
        _ => Err(CliError::usage(format!("unknown embedding {which:?}; expected fea, sem, ori or agg"))),
    }
}

pub fn cmd_export_embeddings(cfg: &RunConfig, cache_root: &Path, checkpoint: &Path, which: &str) -> Result<PathBuf> {
    let tag = parse_channel_tag(which)?;
    let (loaded, _, pass) = evaluate_checkpoint(cfg, cache_root, checkpoint)?;
    let z = match tag {
        ChannelTag::Aggregate => pass.aggregate(),
        ChannelTag::Feature => pass.embeddings[0].as_ref().ok_or_else(|| inactive(which))?,
        ChannelTag::Semantic => pass.embeddings[1].as_ref().ok_or_else(|| inactive(which))?,
        ChannelTag::Topology => pass.embeddings[2].as_ref().ok_or_else(|| inactive(which))?,
    };
    let path = out_dir(cfg)?.join(embeddings_file(tag));
    write(&path, format_embeddings(z, &loaded.dataset.labels))?;
    Ok(path)
}

fn inactive(which: &str) -> CliError {
    CliError::usage(format!("channel {which} is not active in this checkpoint"))
}
