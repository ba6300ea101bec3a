#![allow(dead_code)]

use mlsg_core::dataset::{make_splits, LabeledDataset, Splits};
use mlsg_core::graph::{FeatureMatrix, SparseGraph};
use mlsg_core::pipeline::{prepare_graphs, GraphPrepConfig};
use mlsg_core::semantic::WalkConfig;
use mlsg_core::training::{ModelParams, TrainConfig, TrainingData};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// n=8, d=5, two classes, a ring with one chord.
pub fn tiny_dataset(seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 8;
    let x = Array2::from_shape_fn((n, 5), |(i, _)| rng.gen_range(-1.0..1.0) + if i % 2 == 0 { 0.5 } else { -0.5 });
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    edges.push((0, 4));
    let ds = LabeledDataset::new(
        FeatureMatrix::new(x).unwrap(),
        SparseGraph::from_undirected_edges(n, &edges).unwrap(),
        (0..n).map(|i| Some(i % 2)).collect(),
        2,
        Splits::default(),
    )
    .unwrap();
    make_splits(&ds, 2, 2, 2, seed).unwrap()
}

pub fn prep(k: usize) -> GraphPrepConfig {
    GraphPrepConfig {
        k,
        measures: None,
        walk: WalkConfig {
            gamma: 20,
            ..WalkConfig::default()
        },
    }
}

pub fn training_data(ds: &LabeledDataset, k: usize) -> TrainingData {
    let graphs = prepare_graphs(ds, &prep(k)).unwrap();
    TrainingData::new(ds, graphs.inputs(&ds.topology).unwrap()).unwrap()
}

pub fn tiny_config() -> TrainConfig {
    TrainConfig {
        lr: 0.01,
        nhid1: 6,
        nhid2: 4,
        attention_hidden: 3,
        max_epochs: 30,
        patience: 30,
        alpha: 0.3,
        beta: 0.2,
        seed: 5,
        ..TrainConfig::default()
    }
}

pub fn init(data: &TrainingData, cfg: &TrainConfig, seed: u64) -> ModelParams {
    ModelParams::init(data.n(), data.d(), data.num_classes, cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}
