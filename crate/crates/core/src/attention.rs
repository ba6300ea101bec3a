//! Per-node attention over measure subgraphs and over channel embeddings.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};
use crate::gnn::glorot_uniform;
use crate::linalg::CsrMatrix;

/// Perception layer over adjacency rows: `W` and `b` are h×n, `a` has length h.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphAttentionParams {
    pub w: Array2<f64>,
    pub b: Array2<f64>,
    pub a: Array1<f64>,
}

impl GraphAttentionParams {
    pub fn new<R: Rng + ?Sized>(hidden: usize, n: usize, rng: &mut R) -> Self {
        Self {
            w: glorot_uniform(hidden, n, rng),
            b: Array2::zeros((hidden, n)),
            a: glorot_uniform(hidden, 1, rng).column(0).to_owned(),
        }
    }

    pub fn zeros(hidden: usize, n: usize) -> Self {
        Self {
            w: Array2::zeros((hidden, n)),
            b: Array2::zeros((hidden, n)),
            a: Array1::zeros(hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.a.len()
    }
}

/// Perception layer over embedding rows: `W` is h×m, `b` and `a` have length h.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelAttentionParams {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub a: Array1<f64>,
}

impl ChannelAttentionParams {
    pub fn new<R: Rng + ?Sized>(hidden: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            w: glorot_uniform(hidden, dim, rng),
            b: Array1::zeros(hidden),
            a: glorot_uniform(hidden, 1, rng).column(0).to_owned(),
        }
    }

    pub fn zeros(hidden: usize, dim: usize) -> Self {
        Self {
            w: Array2::zeros((hidden, dim)),
            b: Array1::zeros(hidden),
            a: Array1::zeros(hidden),
        }
    }
}

/// Row-wise softmax over the columns of `logits`, max-shifted.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row /= total;
    }
    out
}

/// Softmax backward for rows of `probs` given the gradient on the probabilities.
fn softmax_rows_backward(probs: &Array2<f64>, grad: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(probs.dim());
    for ((p, g), mut o) in probs.rows().into_iter().zip(grad.rows()).zip(out.rows_mut()) {
        let inner = p.dot(&g);
        Zip::from(&mut o).and(&p).and(&g).for_each(|o, &p, &g| *o = p * (g - inner));
    }
    out
}

/// Result of fusing measure subgraphs.
#[derive(Debug, Clone)]
pub struct FusedGraph {
    /// Symmetrized weighted combination on the union pattern.
    pub adjacency: CsrMatrix,
    /// n×Q; row i holds node i's measure weights.
    pub weights: Array2<f64>,
    raw: CsrMatrix,
    /// Per measure, n×h tanh activations.
    activations: Vec<Array2<f64>>,
}

fn check_subgraphs(subgraphs: &[CsrMatrix], n: usize) -> Result<()> {
    if subgraphs.is_empty() {
        return Err(Error::Domain("at least one subgraph is required".into()));
    }
    for (q, s) in subgraphs.iter().enumerate() {
        if s.rows() != n || s.cols() != n {
            return Err(Error::Dimension(format!(
                "subgraph {q} is {}x{}, expected {n}x{n}",
                s.rows(),
                s.cols()
            )));
        }
    }
    Ok(())
}

/// Fuses Q measure subgraphs into one symmetric graph with per-node attention.
pub fn fuse_measure_graphs(subgraphs: &[CsrMatrix], params: &GraphAttentionParams) -> Result<FusedGraph> {
    let n = params.w.ncols();
    check_subgraphs(subgraphs, n)?;
    if params.b.dim() != params.w.dim() {
        return Err(Error::Dimension("attention bias must match perception weights".into()));
    }
    let wt = params.w.t().to_owned();
    let bt = params.b.t();
    let mut activations = Vec::with_capacity(subgraphs.len());
    let mut logits = Array2::zeros((n, subgraphs.len()));
    for (q, s) in subgraphs.iter().enumerate() {
        let mut t = s.mul_dense(&wt)?;
        t += &bt;
        t.mapv_inplace(f64::tanh);
        logits.column_mut(q).assign(&t.dot(&params.a));
        activations.push(t);
    }
    let weights = softmax_rows(&logits);

    let raw = CsrMatrix::from_triplets(
        n,
        n,
        subgraphs
            .iter()
            .enumerate()
            .flat_map(|(q, s)| s.triplets().map(move |(i, j, v)| (i, j, q, v)))
            .map(|(i, j, q, v)| (i, j, weights[[i, q]] * v)),
    )?;
    let adjacency = symmetrize(&raw)?;
    Ok(FusedGraph {
        adjacency,
        weights,
        raw,
        activations,
    })
}

/// `(R + Rᵀ)/2` on the union pattern; bitwise symmetric.
fn symmetrize(raw: &CsrMatrix) -> Result<CsrMatrix> {
    let pattern = CsrMatrix::from_triplets(
        raw.rows(),
        raw.cols(),
        raw.triplets().flat_map(|(i, j, _)| [(i, j, 0.0), (j, i, 0.0)]),
    )?;
    let values = pattern
        .triplets()
        .map(|(i, j, _)| 0.5 * (raw.get(i, j) + raw.get(j, i)))
        .collect();
    Ok(pattern.with_values(values))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphAttentionGrads {
    pub w: Array2<f64>,
    pub b: Array2<f64>,
    pub a: Array1<f64>,
}

/// Parameter gradients given `grad` aligned with `fused.adjacency` values.
pub fn fuse_measure_graphs_backward(
    subgraphs: &[CsrMatrix],
    params: &GraphAttentionParams,
    fused: &FusedGraph,
    grad: &[f64],
) -> Result<GraphAttentionGrads> {
    let adj = &fused.adjacency;
    if grad.len() != adj.nnz() {
        return Err(Error::Dimension(format!(
            "fused-graph gradient has {} entries, pattern has {}",
            grad.len(),
            adj.nnz()
        )));
    }
    let n = adj.rows();
    let q_count = subgraphs.len();
    let grad_at = |i: usize, j: usize| adj.position(i, j).map_or(0.0, |p| grad[p]);

    // d/dw_{q,i} of Σ_j R_ij with R_ij = Σ_q w_qi A^q_ij, dR_ij = (g_ij + g_ji)/2.
    let mut dweights = Array2::zeros((n, q_count));
    for (q, s) in subgraphs.iter().enumerate() {
        for (i, j, v) in s.triplets() {
            dweights[[i, q]] += 0.5 * (grad_at(i, j) + grad_at(j, i)) * v;
        }
    }
    let dlogits = softmax_rows_backward(&fused.weights, &dweights);

    let h = params.hidden();
    let mut da = Array1::zeros(h);
    let mut db_t = Array2::<f64>::zeros((n, h));
    let mut dw_t = Array2::<f64>::zeros((n, h));
    for (q, (s, t)) in subgraphs.iter().zip(&fused.activations).enumerate() {
        let dl = dlogits.column(q);
        da += &t.t().dot(&dl);
        let mut dpre = Array2::zeros((n, h));
        Zip::from(dpre.rows_mut())
            .and(t.rows())
            .and(&dl)
            .for_each(|mut row, trow, &d| {
                Zip::from(&mut row)
                    .and(&trow)
                    .and(&params.a)
                    .for_each(|o, &tv, &av| *o = d * av * (1.0 - tv * tv));
            });
        db_t += &dpre;
        dw_t += &s.transpose_mul_dense(&dpre)?;
    }
    Ok(GraphAttentionGrads {
        w: dw_t.t().as_standard_layout().into_owned(),
        b: db_t.t().as_standard_layout().into_owned(),
        a: da,
    })
}

impl FusedGraph {
    /// The row-scaled combination before symmetrization.
    pub fn raw(&self) -> &CsrMatrix {
        &self.raw
    }
}

/// Output of channel aggregation.
#[derive(Debug, Clone)]
pub struct AggregatedEmbedding {
    pub z: Array2<f64>,
    /// n×K; row i holds node i's channel weights.
    pub weights: Array2<f64>,
    activations: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelAttentionGrads {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub a: Array1<f64>,
    /// One gradient per input channel, in input order.
    pub inputs: Vec<Array2<f64>>,
}

/// Attention-weighted sum of K channel embeddings of equal shape.
pub fn aggregate_embeddings(channels: &[&Array2<f64>], params: &ChannelAttentionParams) -> Result<AggregatedEmbedding> {
    let first = channels
        .first()
        .ok_or_else(|| Error::Domain("at least one channel is required".into()))?;
    let dim = first.dim();
    if channels.iter().any(|c| c.dim() != dim) {
        return Err(Error::Dimension("channel embeddings differ in shape".into()));
    }
    if params.w.ncols() != dim.1 {
        return Err(Error::Dimension(format!(
            "channel attention expects width {}, embeddings have {}",
            params.w.ncols(),
            dim.1
        )));
    }
    let wt = params.w.t();
    let mut logits = Array2::zeros((dim.0, channels.len()));
    let mut activations = Vec::with_capacity(channels.len());
    for (c, z) in channels.iter().enumerate() {
        let mut t = z.dot(&wt);
        t += &params.b;
        t.mapv_inplace(f64::tanh);
        logits.column_mut(c).assign(&t.dot(&params.a));
        activations.push(t);
    }
    let weights = softmax_rows(&logits);
    let mut z = Array2::zeros(dim);
    for (c, ch) in channels.iter().enumerate() {
        let w = weights.column(c).insert_axis(Axis(1));
        z += &(&w * *ch);
    }
    Ok(AggregatedEmbedding {
        z,
        weights,
        activations,
    })
}

pub fn aggregate_embeddings_backward(
    channels: &[&Array2<f64>],
    params: &ChannelAttentionParams,
    agg: &AggregatedEmbedding,
    grad: &Array2<f64>,
) -> Result<ChannelAttentionGrads> {
    if grad.dim() != agg.z.dim() {
        return Err(Error::Dimension("aggregate gradient shape mismatch".into()));
    }
    let k = channels.len();
    let mut dweights = Array2::zeros(agg.weights.dim());
    for (c, ch) in channels.iter().enumerate() {
        let col = (grad * *ch).sum_axis(Axis(1));
        dweights.column_mut(c).assign(&col);
    }
    let dlogits = softmax_rows_backward(&agg.weights, &dweights);

    let mut dw = Array2::zeros(params.w.dim());
    let mut db = Array1::zeros(params.b.len());
    let mut da = Array1::zeros(params.a.len());
    let mut inputs = Vec::with_capacity(k);
    for (c, (ch, t)) in channels.iter().zip(&agg.activations).enumerate() {
        let dl = dlogits.column(c);
        da += &t.t().dot(&dl);
        let mut dpre = t.mapv(|v| 1.0 - v * v);
        dpre *= &params.a;
        dpre *= &dl.insert_axis(Axis(1));
        dw += &dpre.t().dot(*ch);
        db += &dpre.sum_axis(Axis(0));
        let mut dz = dpre.dot(&params.w);
        dz += &(grad * &agg.weights.column(c).insert_axis(Axis(1)));
        inputs.push(dz);
    }
    Ok(ChannelAttentionGrads {
        w: dw,
        b: db,
        a: da,
        inputs,
    })
}

/// Five-number summary plus mean of one attention column.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionSummary {
    pub name: String,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Summaries of each column of an n×K row-simplex matrix.
pub fn attention_statistics(weights: &Array2<f64>, names: &[&str]) -> Result<Vec<AttentionSummary>> {
    if names.len() != weights.ncols() {
        return Err(Error::Dimension(format!(
            "{} names for {} attention columns",
            names.len(),
            weights.ncols()
        )));
    }
    if weights.nrows() == 0 {
        return Err(Error::Domain("attention matrix has no rows".into()));
    }
    for (i, row) in weights.rows().into_iter().enumerate() {
        let total = row.sum();
        if (total - 1.0).abs() > 1e-6 || row.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Integrity(format!("attention row {i} is off the simplex (sum {total})")));
        }
    }
    Ok(names
        .iter()
        .zip(weights.columns())
        .map(|(name, col)| {
            let mut sorted = col.to_vec();
            sorted.sort_by(f64::total_cmp);
            AttentionSummary {
                name: name.to_string(),
                min: sorted[0],
                q1: quantile(&sorted, 0.25),
                median: quantile(&sorted, 0.5),
                q3: quantile(&sorted, 0.75),
                max: sorted[sorted.len() - 1],
                mean: col.sum() / col.len() as f64,
            }
        })
        .collect())
}

pub const SUMMARY_HEADER: &str = "name\tmin\tq1\tmedian\tq3\tmax\tmean";

pub fn format_summaries(rows: &[AttentionSummary]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.name, r.min, r.q1, r.median, r.q3, r.max, r.mean
        )
        .expect("writing to a String");
    }
    out
}

pub fn parse_summaries(text: &str, path: &Path) -> Result<Vec<AttentionSummary>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == SUMMARY_HEADER => {}
        _ => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "missing attention summary header".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            let err = |m: String| Error::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                message: m,
            };
            let cols: Vec<&str> = l.split('\t').collect();
            if cols.len() != 7 {
                return Err(err(format!("expected 7 columns, found {}", cols.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("{s:?}: {e}")));
            Ok(AttentionSummary {
                name: cols[0].to_string(),
                min: num(cols[1])?,
                q1: num(cols[2])?,
                median: num(cols[3])?,
                q3: num(cols[4])?,
                max: num(cols[5])?,
                mean: num(cols[6])?,
            })
        })
        .collect()
}
