use std::hash::Hasher;

use ndarray::{Array2, Axis};
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::loss::{accumulate_l21, cross_entropy, l21_distance, LossTerms};
use super::model::{is_weight_block, ModelParams, TrainingData};
use crate::attention::{
    aggregate_embeddings, aggregate_embeddings_backward, fuse_measure_graphs, fuse_measure_graphs_backward,
    softmax_rows, AggregatedEmbedding, FusedGraph,
};
use crate::error::{Error, Result};
use crate::gnn::{GcnCache, GcnChannel};
use crate::graph::{normalize_with_self_loops, normalize_with_self_loops_backward};
use crate::linalg::CsrMatrix;

/// Outputs and intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Reported objective; l2,1 terms use ε = 0.
    pub loss: LossTerms,
    /// Objective with the smoothed l2,1 terms that the analytic gradient differentiates.
    pub smoothed_total: f64,
    pub logits: Array2<f64>,
    pub probs: Array2<f64>,
    /// Channel embeddings in fea, sem, ori order; `None` for inactive channels.
    pub embeddings: [Option<Array2<f64>>; 3],
    fused: Option<FusedGraph>,
    fea_propagation: Option<(CsrMatrix, Vec<f64>)>,
    caches: [Option<GcnCache>; 3],
    agg: AggregatedEmbedding,
    fingerprint: u64,
}

impl ForwardPass {
    pub fn aggregate(&self) -> &Array2<f64> {
        &self.agg.z
    }

    /// n×Q measure weights, when the feature channel is active.
    pub fn fusion_weights(&self) -> Option<&Array2<f64>> {
        self.fused.as_ref().map(|f| &f.weights)
    }

    /// n×K channel weights over the active channels.
    pub fn channel_weights(&self) -> &Array2<f64> {
        &self.agg.weights
    }

    pub fn fused_adjacency(&self) -> Option<&CsrMatrix> {
        self.fused.as_ref().map(|f| &f.adjacency)
    }

    /// Layer-1 pre-activations (and outputs when the top layer is rectified) of
    /// every active channel, for kink detection.
    pub fn relu_inputs(&self) -> Vec<&Array2<f64>> {
        let mut out = Vec::new();
        for cache in self.caches.iter().flatten() {
            out.push(cache.hidden_preactivation());
        }
        out
    }

    pub(crate) fn channel_outputs(&self) -> Vec<&Array2<f64>> {
        self.caches.iter().flatten().map(|c| c.output_preactivation()).collect()
    }
}

fn fingerprint(params: &ModelParams) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for (_, block) in params.blocks() {
        for v in block {
            h.write_u64(v.to_bits());
        }
    }
    h.finish()
}

fn channels_of(params: &ModelParams) -> [&GcnChannel; 3] {
    [&params.fea, &params.sem, &params.ori]
}

/// Fuse, normalize, run the active channels, aggregate, classify and score.
/// An RNG enables dropout (training mode).
pub fn forward_full(
    params: &ModelParams,
    data: &TrainingData,
    cfg: &TrainConfig,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<ForwardPass> {
    let active = [cfg.channels.fea, cfg.channels.sem, cfg.channels.ori];
    if active.iter().all(|a| !a) {
        return Err(Error::Domain("no active channel".into()));
    }
    let (fused, fea_propagation) = if cfg.channels.fea {
        let fused = fuse_measure_graphs(&data.graphs.subgraphs, &params.graph_attention)?;
        let prop = normalize_with_self_loops(&fused.adjacency)?;
        (Some(fused), Some(prop))
    } else {
        (None, None)
    };

    let mut caches: [Option<GcnCache>; 3] = [None, None, None];
    let mut embeddings: [Option<Array2<f64>>; 3] = [None, None, None];
    for (c, channel) in channels_of(params).into_iter().enumerate() {
        if !active[c] {
            continue;
        }
        let m = match c {
            0 => &fea_propagation.as_ref().expect("feature channel active").0,
            1 => &data.graphs.semantic,
            _ => &data.graphs.topology,
        };
        let (z, cache) = channel.forward(m, &data.features, rng.as_deref_mut())?;
        embeddings[c] = Some(z);
        caches[c] = Some(cache);
    }

    let inputs: Vec<&Array2<f64>> = embeddings.iter().flatten().collect();
    let agg = aggregate_embeddings(&inputs, &params.channel_attention)?;
    let mut logits = agg.z.dot(&params.cls_w);
    logits += &params.cls_b;
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("classifier logits".into()));
    }
    let probs = softmax_rows(&logits);

    let train_probs = probs.select(Axis(0), &data.splits.train);
    let l0 = cross_entropy(&train_probs, &data.train_labels)?;
    let (mut la, mut lb, mut la_s, mut lb_s) = (0.0, 0.0, 0.0, 0.0);
    if cfg.regularizers {
        if let (Some(f), Some(o)) = (&embeddings[0], &embeddings[2]) {
            la = l21_distance(f, o, 0.0)?;
            la_s = l21_distance(f, o, cfg.l21_epsilon)?;
        }
        if let (Some(s), Some(o)) = (&embeddings[1], &embeddings[2]) {
            lb = l21_distance(s, o, 0.0)?;
            lb_s = l21_distance(s, o, cfg.l21_epsilon)?;
        }
    }
    let (total, smoothed_total) = if cfg.regularizers {
        (l0 + cfg.alpha * la + cfg.beta * lb, l0 + cfg.alpha * la_s + cfg.beta * lb_s)
    } else {
        (l0, l0)
    };
    Ok(ForwardPass {
        loss: LossTerms { l0, la, lb, total },
        smoothed_total,
        logits,
        probs,
        embeddings,
        fused,
        fea_propagation,
        caches,
        agg,
        fingerprint: fingerprint(params),
    })
}

/// Gradient of the smoothed objective plus `ϖ·θ` on weight blocks.
pub fn backward_full(params: &ModelParams, data: &TrainingData, cfg: &TrainConfig, pass: &ForwardPass) -> Result<ModelParams> {
    if pass.fingerprint != fingerprint(params) {
        return Err(Error::State("forward cache does not belong to these parameters".into()));
    }
    let mut grads = params.zeros_like();

    let scale = 1.0 / data.splits.train.len() as f64;
    let mut dlogits = Array2::zeros(pass.logits.dim());
    for (&node, &y) in data.splits.train.iter().zip(&data.train_labels) {
        let mut row = dlogits.row_mut(node);
        row.assign(&pass.probs.row(node));
        row[y] -= 1.0;
        row *= scale;
    }
    grads.cls_w = pass.agg.z.t().dot(&dlogits);
    grads.cls_b = dlogits.sum_axis(Axis(0));
    let dagg = dlogits.dot(&params.cls_w.t());

    let inputs: Vec<&Array2<f64>> = pass.embeddings.iter().flatten().collect();
    let ca = aggregate_embeddings_backward(&inputs, &params.channel_attention, &pass.agg, &dagg)?;
    grads.channel_attention.w = ca.w;
    grads.channel_attention.b = ca.b;
    grads.channel_attention.a = ca.a;

    let mut dz: [Option<Array2<f64>>; 3] = [None, None, None];
    let mut it = ca.inputs.into_iter();
    for (c, e) in pass.embeddings.iter().enumerate() {
        if e.is_some() {
            dz[c] = it.next();
        }
    }
    if cfg.regularizers {
        if let [Some(f), _, Some(o)] = &pass.embeddings {
            let [df, _, dor] = &mut dz;
            accumulate_l21(f, o, cfg.l21_epsilon, cfg.alpha, df.as_mut().unwrap(), dor.as_mut().unwrap())?;
        }
        if let [_, Some(s), Some(o)] = &pass.embeddings {
            let [_, ds, dor] = &mut dz;
            accumulate_l21(s, o, cfg.l21_epsilon, cfg.beta, ds.as_mut().unwrap(), dor.as_mut().unwrap())?;
        }
    }

    for (c, channel) in channels_of(params).into_iter().enumerate() {
        let (Some(cache), Some(g)) = (&pass.caches[c], &dz[c]) else {
            continue;
        };
        let m = match c {
            0 => &pass.fea_propagation.as_ref().expect("feature channel active").0,
            1 => &data.graphs.semantic,
            _ => &data.graphs.topology,
        };
        let cg = channel.backward(m, cache, g, false, c == 0)?;
        let target = match c {
            0 => &mut grads.fea,
            1 => &mut grads.sem,
            _ => &mut grads.ori,
        };
        target.w1 = cg.w1;
        target.w2 = cg.w2;
        if c == 0 {
            let fused = pass.fused.as_ref().expect("feature channel active");
            let (norm, degrees) = pass.fea_propagation.as_ref().expect("feature channel active");
            let dm = cg.m.expect("requested");
            let da = normalize_with_self_loops_backward(&fused.adjacency, norm, degrees, &dm);
            let ga = fuse_measure_graphs_backward(&data.graphs.subgraphs, &params.graph_attention, fused, &da)?;
            grads.graph_attention.w = ga.w;
            grads.graph_attention.b = ga.b;
            grads.graph_attention.a = ga.a;
        }
    }

    grads.standardize();
    if cfg.weight_decay != 0.0 {
        for ((name, g), (_, p)) in grads.blocks_mut().into_iter().zip(params.blocks()) {
            if is_weight_block(name) {
                for (g, p) in g.iter_mut().zip(p) {
                    *g += cfg.weight_decay * p;
                }
            }
        }
    }
    Ok(grads)
}
