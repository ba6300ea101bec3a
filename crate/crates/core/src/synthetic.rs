//! Two-community benchmark: Gaussian feature blobs on a planted-partition graph.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{make_splits, LabeledDataset, Splits};
use crate::error::Result;
use crate::graph::{FeatureMatrix, SparseGraph};
use crate::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobConfig {
    pub n: usize,
    pub d: usize,
    /// Class means sit at `±offset` in every coordinate.
    pub offset: f64,
    pub sigma: f64,
    pub p_in: f64,
    pub p_out: f64,
    pub labels_per_class: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for BlobConfig {
    fn default() -> Self {
        Self {
            n: 200,
            d: 16,
            offset: 0.3,
            sigma: 1.0,
            p_in: 0.05,
            p_out: 0.005,
            labels_per_class: 20,
            val: 60,
            test: 100,
            seed: 2024,
        }
    }
}

/// Nodes `0..n/2` form class 0, the rest class 1.
pub fn two_blob_dataset(cfg: &BlobConfig) -> Result<LabeledDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.sigma).expect("sigma is positive");
    let half = cfg.n / 2;
    let class = |i: usize| usize::from(i >= half);
    let features = Array2::from_shape_fn((cfg.n, cfg.d), |(i, _)| {
        let mean = if class(i) == 0 { -cfg.offset } else { cfg.offset };
        mean + noise.sample(&mut rng)
    });
    let mut edges = Vec::new();
    for i in 0..cfg.n {
        for j in (i + 1)..cfg.n {
            let p = if class(i) == class(j) { cfg.p_in } else { cfg.p_out };
            if rng.gen_bool(p) {
                edges.push((i, j));
            }
        }
    }
    let labels = (0..cfg.n).map(|i| Some(class(i))).collect();
    let ds = LabeledDataset::new(
        FeatureMatrix::new(features)?,
        SparseGraph::from_undirected_edges(cfg.n, &edges)?,
        labels,
        2,
        Splits::default(),
    )?;
    make_splits(&ds, cfg.labels_per_class, cfg.val, cfg.test, cfg.seed)
}

/// Small model that fits the default fixture within 200 epochs.
pub fn fixture_train_config() -> TrainConfig {
    TrainConfig {
        lr: 0.01,
        alpha: 0.01,
        beta: 0.01,
        nhid1: 64,
        nhid2: 16,
        attention_hidden: 16,
        max_epochs: 200,
        patience: 100,
        ..TrainConfig::default()
    }
}
