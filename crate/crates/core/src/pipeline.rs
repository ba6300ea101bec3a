//! Graph preparation from a labeled dataset: measure subgraphs and the PPMI graph.

use crate::dataset::LabeledDataset;
use crate::error::Result;
use crate::graph::SparseGraph;
use crate::measures::{build_measure_subgraphs, default_measures, MeasureKind};
use crate::semantic::{build_semantic_graph, FrequencyMatrix, PpmiGraph, WalkConfig};
use crate::training::GraphInputs;

#[derive(Debug, Clone, PartialEq)]
pub struct GraphPrepConfig {
    /// kNN cut for every measure subgraph.
    pub k: usize,
    /// Explicit measures; `None` means cosine, Gaussian (mean-distance bandwidth) and sparsity with `k` neighbours.
    pub measures: Option<Vec<MeasureKind>>,
    pub walk: WalkConfig,
}

impl Default for GraphPrepConfig {
    fn default() -> Self {
        Self {
            k: 7,
            measures: None,
            walk: WalkConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PreparedGraphs {
    pub measures: Vec<MeasureKind>,
    pub subgraphs: Vec<SparseGraph>,
    pub frequency: FrequencyMatrix,
    pub ppmi: PpmiGraph,
}

impl PreparedGraphs {
    pub fn inputs(&self, topology: &SparseGraph) -> Result<GraphInputs> {
        GraphInputs::new(&self.subgraphs, topology, self.ppmi.normalized.clone())
    }
}

pub fn resolve_measures(dataset: &LabeledDataset, cfg: &GraphPrepConfig) -> Result<Vec<MeasureKind>> {
    match &cfg.measures {
        Some(m) => Ok(m.clone()),
        None => default_measures(&dataset.features, cfg.k),
    }
}

pub fn prepare_graphs(dataset: &LabeledDataset, cfg: &GraphPrepConfig) -> Result<PreparedGraphs> {
    let measures = resolve_measures(dataset, cfg)?;
    let subgraphs = build_measure_subgraphs(&dataset.features, &measures, cfg.k)?
        .into_iter()
        .map(|s| s.adjacency)
        .collect();
    let (frequency, ppmi) = build_semantic_graph(&dataset.topology, &cfg.walk)?;
    Ok(PreparedGraphs {
        measures,
        subgraphs,
        frequency,
        ppmi,
    })
}
