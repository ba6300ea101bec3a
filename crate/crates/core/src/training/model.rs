use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;

use super::config::{ChannelSet, TrainConfig};
use crate::attention::{ChannelAttentionParams, GraphAttentionParams};
use crate::cache::{read_record, write_f64};
use crate::dataset::{LabeledDataset, Splits};
use crate::error::{Error, Result};
use crate::gnn::{glorot_uniform, GcnChannel};
use crate::graph::{normalize_with_self_loops, SparseGraph};
use crate::linalg::CsrMatrix;

/// Fixed propagation inputs for one dataset.
#[derive(Debug, Clone)]
pub struct GraphInputs {
    /// Binary measure subgraphs fused by attention each forward pass.
    pub subgraphs: Vec<CsrMatrix>,
    /// Renormalized topology with self-loops.
    pub topology: CsrMatrix,
    /// Normalized PPMI matrix.
    pub semantic: CsrMatrix,
}

impl GraphInputs {
    pub fn new(subgraphs: &[SparseGraph], topology: &SparseGraph, semantic: CsrMatrix) -> Result<Self> {
        let n = topology.n();
        if subgraphs.is_empty() {
            return Err(Error::Domain("at least one measure subgraph is required".into()));
        }
        if subgraphs.iter().any(|g| g.n() != n) || semantic.rows() != n || semantic.cols() != n {
            return Err(Error::Dimension("graph inputs disagree on node count".into()));
        }
        let (topology, _) = normalize_with_self_loops(&topology.to_csr())?;
        Ok(Self {
            subgraphs: subgraphs.iter().map(SparseGraph::to_csr).collect(),
            topology,
            semantic,
        })
    }

    pub fn n(&self) -> usize {
        self.topology.rows()
    }
}

/// Everything a forward pass reads besides the parameters.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub features: CsrMatrix,
    pub labels: Vec<Option<usize>>,
    pub num_classes: usize,
    pub splits: Splits,
    pub graphs: GraphInputs,
    pub(crate) train_labels: Vec<usize>,
}

impl TrainingData {
    pub fn new(dataset: &LabeledDataset, graphs: GraphInputs) -> Result<Self> {
        if graphs.n() != dataset.n() {
            return Err(Error::Dimension(format!(
                "graphs have {} nodes, dataset has {}",
                graphs.n(),
                dataset.n()
            )));
        }
        if dataset.splits.train.is_empty() {
            return Err(Error::Label("dataset has no training split".into()));
        }
        let train_labels = dataset
            .splits
            .train
            .iter()
            .map(|&i| dataset.labels[i].expect("split validation guarantees labels"))
            .collect();
        Ok(Self {
            features: dataset.features.sparse().clone(),
            labels: dataset.labels.clone(),
            num_classes: dataset.num_classes,
            splits: dataset.splits.clone(),
            graphs,
            train_labels,
        })
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn d(&self) -> usize {
        self.features.cols()
    }
}

/// Every trainable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub fea: GcnChannel,
    pub sem: GcnChannel,
    pub ori: GcnChannel,
    pub graph_attention: GraphAttentionParams,
    pub channel_attention: ChannelAttentionParams,
    pub cls_w: Array2<f64>,
    pub cls_b: Array1<f64>,
}

/// Parameter block names in iteration and checkpoint order.
pub const BLOCK_NAMES: [&str; 14] = [
    "fea.w1", "fea.w2", "sem.w1", "sem.w2", "ori.w1", "ori.w2", "att_fea.w", "att_fea.b", "att_fea.a",
    "att_agg.w", "att_agg.b", "att_agg.a", "cls.w", "cls.b",
];

/// Biases are exempt from weight decay.
pub(crate) fn is_weight_block(name: &str) -> bool {
    !name.ends_with(".b")
}

fn slice<'a, D: ndarray::Dimension>(a: &'a ndarray::Array<f64, D>) -> &'a [f64] {
    a.as_slice().expect("parameters are kept in standard layout")
}

fn slice_mut<'a, D: ndarray::Dimension>(a: &'a mut ndarray::Array<f64, D>) -> &'a mut [f64] {
    a.as_slice_mut().expect("parameters are kept in standard layout")
}

impl ModelParams {
    /// Glorot weights and zero biases, drawn in block order.
    pub fn init<R: Rng + ?Sized>(n: usize, d: usize, num_classes: usize, cfg: &TrainConfig, rng: &mut R) -> Result<Self> {
        let channel = |rng: &mut R| -> Result<GcnChannel> {
            let mut ch = GcnChannel::new(d, cfg.nhid1, cfg.nhid2, cfg.dropout, rng)?;
            ch.activate_output = cfg.activate_output;
            Ok(ch)
        };
        let fea = channel(rng)?;
        let sem = channel(rng)?;
        let ori = channel(rng)?;
        let graph_attention = GraphAttentionParams::new(cfg.attention_hidden, n, rng);
        let channel_attention = ChannelAttentionParams::new(cfg.attention_hidden, cfg.nhid2, rng);
        let cls_w = glorot_uniform(cfg.nhid2, num_classes, rng);
        Ok(Self {
            fea,
            sem,
            ori,
            graph_attention,
            channel_attention,
            cls_w,
            cls_b: Array1::zeros(num_classes),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.cls_b.len()
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, b) in out.blocks_mut() {
            b.fill(0.0);
        }
        out
    }

    pub fn blocks(&self) -> Vec<(&'static str, &[f64])> {
        let slices = [
            slice(&self.fea.w1),
            slice(&self.fea.w2),
            slice(&self.sem.w1),
            slice(&self.sem.w2),
            slice(&self.ori.w1),
            slice(&self.ori.w2),
            slice(&self.graph_attention.w),
            slice(&self.graph_attention.b),
            slice(&self.graph_attention.a),
            slice(&self.channel_attention.w),
            slice(&self.channel_attention.b),
            slice(&self.channel_attention.a),
            slice(&self.cls_w),
            slice(&self.cls_b),
        ];
        BLOCK_NAMES.into_iter().zip(slices).collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let slices = [
            slice_mut(&mut self.fea.w1),
            slice_mut(&mut self.fea.w2),
            slice_mut(&mut self.sem.w1),
            slice_mut(&mut self.sem.w2),
            slice_mut(&mut self.ori.w1),
            slice_mut(&mut self.ori.w2),
            slice_mut(&mut self.graph_attention.w),
            slice_mut(&mut self.graph_attention.b),
            slice_mut(&mut self.graph_attention.a),
            slice_mut(&mut self.channel_attention.w),
            slice_mut(&mut self.channel_attention.b),
            slice_mut(&mut self.channel_attention.a),
            slice_mut(&mut self.cls_w),
            slice_mut(&mut self.cls_b),
        ];
        BLOCK_NAMES.into_iter().zip(slices).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks().iter().map(|b| b.1.len()).sum()
    }

    /// `½ Σ‖θ‖²` over weight blocks.
    pub fn weight_norm_sq_half(&self) -> f64 {
        0.5 * self
            .blocks()
            .iter()
            .filter(|(name, _)| is_weight_block(name))
            .flat_map(|(_, b)| b.iter())
            .map(|v| v * v)
            .sum::<f64>()
    }

    /// Converts any block left in non-standard memory order by a product.
    pub(crate) fn standardize(&mut self) {
        fn fix<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) {
            if !a.is_standard_layout() {
                *a = a.as_standard_layout().into_owned();
            }
        }
        for ch in [&mut self.fea, &mut self.sem, &mut self.ori] {
            fix(&mut ch.w1);
            fix(&mut ch.w2);
        }
        fix(&mut self.graph_attention.w);
        fix(&mut self.graph_attention.b);
        fix(&mut self.graph_attention.a);
        fix(&mut self.channel_attention.w);
        fix(&mut self.channel_attention.b);
        fix(&mut self.channel_attention.a);
        fix(&mut self.cls_w);
        fix(&mut self.cls_b);
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|(_, b)| b.iter().all(|v| v.is_finite()))
    }
}

fn as_matrix(values: &[f64], rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_vec((rows, cols), values.to_vec()).expect("shape matches length")
}

fn block_shapes(p: &ModelParams) -> [(usize, usize); 14] {
    let d2 = |a: &Array2<f64>| a.dim();
    let d1 = |a: &Array1<f64>| (1, a.len());
    [
        d2(&p.fea.w1),
        d2(&p.fea.w2),
        d2(&p.sem.w1),
        d2(&p.sem.w2),
        d2(&p.ori.w1),
        d2(&p.ori.w2),
        d2(&p.graph_attention.w),
        d2(&p.graph_attention.b),
        d1(&p.graph_attention.a),
        d2(&p.channel_attention.w),
        d1(&p.channel_attention.b),
        d1(&p.channel_attention.a),
        d2(&p.cls_w),
        d1(&p.cls_b),
    ]
}

/// Writes every block as one record, in [`BLOCK_NAMES`] order, followed by a
/// settings record `[dropout, activate_output, fea, sem, ori]`.
pub fn save_checkpoint(path: &Path, params: &ModelParams, channels: ChannelSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for ((rows, cols), (_, values)) in block_shapes(params).into_iter().zip(params.blocks()) {
        write_f64(&mut w, &as_matrix(values, rows, cols))?;
    }
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let settings = Array2::from_shape_vec(
        (1, 5),
        vec![
            params.fea.dropout,
            flag(params.fea.activate_output),
            flag(channels.fea),
            flag(channels.sem),
            flag(channels.ori),
        ],
    )
    .expect("five settings");
    write_f64(&mut w, &settings)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, ChannelSet)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    while let Some(rec) = read_record(&mut r)? {
        records.push(rec.into_float()?);
    }
    if records.len() != BLOCK_NAMES.len() + 1 {
        return Err(Error::Format(format!(
            "checkpoint holds {} records, expected {}",
            records.len(),
            BLOCK_NAMES.len() + 1
        )));
    }
    let settings = records.pop().expect("length checked");
    if settings.dim() != (1, 5) {
        return Err(Error::Format("malformed checkpoint settings record".into()));
    }
    let (dropout, activate) = (settings[[0, 0]], settings[[0, 1]] != 0.0);
    let channels = ChannelSet {
        fea: settings[[0, 2]] != 0.0,
        sem: settings[[0, 3]] != 0.0,
        ori: settings[[0, 4]] != 0.0,
    };
    let mut it = records.into_iter();
    let mut next = || it.next().expect("length checked");
    let row = |m: Array2<f64>| -> Result<Array1<f64>> {
        if m.nrows() != 1 {
            return Err(Error::Format("vector block must have one row".into()));
        }
        Ok(m.row(0).to_owned())
    };
    let fea = GcnChannel::from_weights(next(), next(), dropout, activate)?;
    let sem = GcnChannel::from_weights(next(), next(), dropout, activate)?;
    let ori = GcnChannel::from_weights(next(), next(), dropout, activate)?;
    let graph_attention = GraphAttentionParams {
        w: next(),
        b: next(),
        a: row(next())?,
    };
    let channel_attention = ChannelAttentionParams {
        w: next(),
        b: row(next())?,
        a: row(next())?,
    };
    let cls_w = next();
    let cls_b = row(next())?;
    let params = ModelParams {
        fea,
        sem,
        ori,
        graph_attention,
        channel_attention,
        cls_w,
        cls_b,
    };
    validate_shapes(&params)?;
    Ok((params, channels))
}

fn validate_shapes(p: &ModelParams) -> Result<()> {
    let (h, n) = p.graph_attention.w.dim();
    let ok = p.fea.w1.dim() == p.sem.w1.dim()
        && p.fea.w1.dim() == p.ori.w1.dim()
        && p.fea.w2.dim() == p.sem.w2.dim()
        && p.fea.w2.dim() == p.ori.w2.dim()
        && p.graph_attention.b.dim() == (h, n)
        && p.graph_attention.a.len() == h
        && p.channel_attention.w.ncols() == p.fea.output_dim()
        && p.channel_attention.b.len() == p.channel_attention.w.nrows()
        && p.channel_attention.a.len() == p.channel_attention.w.nrows()
        && p.cls_w.nrows() == p.fea.output_dim()
        && p.cls_w.ncols() == p.cls_b.len();
    if ok {
        Ok(())
    } else {
        Err(Error::Format("checkpoint blocks do not chain".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> TrainConfig {
        TrainConfig {
            nhid1: 6,
            nhid2: 4,
            attention_hidden: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn init_shapes_and_bias_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = ModelParams::init(8, 5, 3, &small_config(), &mut rng).unwrap();
        assert_eq!(p.fea.w1.dim(), (5, 6));
        assert_eq!(p.ori.w2.dim(), (6, 4));
        assert_eq!(p.graph_attention.w.dim(), (3, 8));
        assert_eq!(p.cls_w.dim(), (4, 3));
        assert!(p.cls_b.iter().all(|v| *v == 0.0));
        assert_eq!(p.blocks().len(), BLOCK_NAMES.len());
        assert_eq!(
            p.parameter_count(),
            3 * (30 + 24) + 24 + 24 + 3 + 12 + 3 + 3 + 12 + 3
        );
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ModelParams::init(7, 4, 2, &small_config(), &mut rng).unwrap();
        let channels = ChannelSet {
            fea: true,
            sem: false,
            ori: true,
        };
        save_checkpoint(&path, &p, channels).unwrap();
        let (back, ch) = load_checkpoint(&path).unwrap();
        assert_eq!(back, p);
        assert_eq!(ch, channels);
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = ModelParams::init(7, 4, 2, &small_config(), &mut rng).unwrap();
        save_checkpoint(&path, &p, ChannelSet::ALL).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
