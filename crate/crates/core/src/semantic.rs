//! Random-walk co-occurrence statistics and the PPMI semantic graph.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{degrees, symmetric_normalize, SparseGraph};
use crate::linalg::CsrMatrix;

/// Walk sampling and PPMI settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkConfig {
    /// Walks started from each head node.
    pub gamma: usize,
    /// Steps per walk; each path holds `path_len + 1` nodes.
    pub path_len: usize,
    /// Maximum index distance of a co-occurring pair.
    pub window: usize,
    /// Nodes with `1 ≤ deg ≤ tail_threshold` are tail nodes.
    pub tail_threshold: usize,
    /// Optional upper bound on walks started from a tail node.
    pub tail_walk_cap: Option<usize>,
    /// PPMI shift constant; `ln(neg_shift)` is subtracted before clipping.
    pub neg_shift: f64,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            gamma: 100,
            path_len: 3,
            window: 3,
            tail_threshold: 5,
            tail_walk_cap: None,
            neg_shift: 1.0,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma == 0 {
            return Err(Error::Domain("gamma must be at least 1".into()));
        }
        if self.path_len < 2 {
            return Err(Error::Domain(format!("path_len must be at least 2, got {}", self.path_len)));
        }
        if self.window == 0 || self.window > self.path_len {
            return Err(Error::Domain(format!(
                "window must be in [1, {}], got {}",
                self.path_len, self.window
            )));
        }
        if !(self.neg_shift >= 1.0 && self.neg_shift.is_finite()) {
            return Err(Error::Domain(format!("neg_shift must be >= 1, got {}", self.neg_shift)));
        }
        if self.tail_walk_cap == Some(0) {
            return Err(Error::Domain("tail_walk_cap must be positive when set".into()));
        }
        Ok(())
    }

    /// Number of walks started from a node of the given degree.
    pub fn walks_for_degree(&self, degree: usize) -> usize {
        match degree {
            0 => 0,
            d if d > self.tail_threshold => self.gamma,
            d => {
                let count = self.gamma * d;
                self.tail_walk_cap.map_or(count, |cap| count.min(cap))
            }
        }
    }
}

/// Row-stochastic transition matrix. Isolated nodes get a self-loop row.
pub fn transition_matrix(graph: &SparseGraph) -> Result<CsrMatrix> {
    if !graph.is_symmetric() {
        return Err(Error::Domain("transition matrix requires a symmetric graph".into()));
    }
    let lists = graph.adjacency_lists();
    let mut triplets = Vec::with_capacity(graph.entries().len() + lists.len());
    for (i, row) in lists.iter().enumerate() {
        let total: f64 = row.iter().map(|&(_, w)| w).sum();
        if total > 0.0 {
            triplets.extend(row.iter().filter(|&&(_, w)| w > 0.0).map(|&(j, w)| (i, j, w / total)));
        } else {
            triplets.push((i, i, 1.0));
        }
    }
    CsrMatrix::from_triplets(graph.n(), graph.n(), triplets)
}

fn step(cumulative: &[(usize, f64)], rng: &mut ChaCha8Rng) -> usize {
    let total = cumulative.last().expect("non-isolated node").1;
    let u = rng.gen::<f64>() * total;
    let k = cumulative.partition_point(|&(_, c)| c <= u);
    cumulative[k.min(cumulative.len() - 1)].0
}

/// Samples degree-corrected random walks. Each start node draws from its own
/// ChaCha stream, so the output does not depend on the worker count.
pub fn sample_walks(graph: &SparseGraph, config: &WalkConfig) -> Result<Vec<Vec<usize>>> {
    config.validate()?;
    let transition = transition_matrix(graph)?;
    let degs = degrees(graph);
    let cumulative: Vec<Vec<(usize, f64)>> = (0..graph.n())
        .map(|i| {
            if degs[i] == 0 {
                return Vec::new();
            }
            let (cols, vals) = transition.row(i);
            let mut acc = 0.0;
            cols.iter()
                .zip(vals)
                .map(|(&j, &p)| {
                    acc += p;
                    (j, acc)
                })
                .collect()
        })
        .collect();
    let per_node: Vec<Vec<Vec<usize>>> = (0..graph.n())
        .into_par_iter()
        .map(|start| {
            let count = config.walks_for_degree(degs[start]);
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(start as u64);
            (0..count)
                .map(|_| {
                    let mut path = Vec::with_capacity(config.path_len + 1);
                    path.push(start);
                    let mut at = start;
                    for _ in 0..config.path_len {
                        at = step(&cumulative[at], &mut rng);
                        path.push(at);
                    }
                    path
                })
                .collect()
        })
        .collect();
    Ok(per_node.into_iter().flatten().collect())
}

/// Symmetric co-occurrence counts, stored as sorted `(row, col, count)` triplets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyMatrix {
    n: usize,
    entries: Vec<(usize, usize, u64)>,
}

impl FrequencyMatrix {
    /// Validates bounds, ordering, positivity and exact symmetry.
    pub fn from_entries(n: usize, mut entries: Vec<(usize, usize, u64)>) -> Result<Self> {
        entries.sort_unstable();
        for w in entries.windows(2) {
            if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
                return Err(Error::Format(format!("duplicate count at ({}, {})", w[0].0, w[0].1)));
            }
        }
        for &(i, j, c) in &entries {
            if i >= n || j >= n {
                return Err(Error::Bounds {
                    id: i.max(j),
                    n,
                    context: "frequency entry".into(),
                });
            }
            if c == 0 {
                return Err(Error::Format("zero count stored explicitly".into()));
            }
        }
        let m = Self { n, entries };
        if !m.is_symmetric() {
            return Err(Error::Format("frequency counts are not symmetric".into()));
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[(usize, usize, u64)] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.entries
            .binary_search_by(|e| (e.0, e.1).cmp(&(i, j)))
            .map_or(0, |k| self.entries[k].2)
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|e| e.2).sum()
    }

    pub fn is_symmetric(&self) -> bool {
        self.entries.iter().all(|&(i, j, c)| self.get(j, i) == c)
    }

    pub fn to_dense(&self) -> ndarray::Array2<u64> {
        let mut out = ndarray::Array2::zeros((self.n, self.n));
        for &(i, j, c) in &self.entries {
            out[[i, j]] = c;
        }
        out
    }
}

/// Sorted `(key, count)` runs from a sorted key list.
fn compress(mut keys: Vec<u64>) -> Vec<(u64, u64)> {
    keys.sort_unstable();
    let mut out: Vec<(u64, u64)> = Vec::new();
    for k in keys {
        match out.last_mut() {
            Some(last) if last.0 == k => last.1 += 1,
            _ => out.push((k, 1)),
        }
    }
    out
}

fn merge(a: Vec<(u64, u64)>, b: Vec<(u64, u64)>) -> Vec<(u64, u64)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut p, mut q) = (0, 0);
    while p < a.len() && q < b.len() {
        match a[p].0.cmp(&b[q].0) {
            std::cmp::Ordering::Less => {
                out.push(a[p]);
                p += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[q]);
                q += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push((a[p].0, a[p].1 + b[q].1));
                p += 1;
                q += 1;
            }
        }
    }
    out.extend_from_slice(&a[p..]);
    out.extend_from_slice(&b[q..]);
    out
}

/// Counts every ordered pair within `window` positions, in both directions.
/// Chunks are counted independently and merged by integer addition.
pub fn build_frequency(paths: &[Vec<usize>], window: usize, n: usize) -> Result<FrequencyMatrix> {
    if window == 0 {
        return Err(Error::Domain("window must be at least 1".into()));
    }
    if let Some(&id) = paths.iter().flatten().find(|&&v| v >= n) {
        return Err(Error::Bounds {
            id,
            n,
            context: "walk path".into(),
        });
    }
    let n64 = n as u64;
    let merged = paths
        .par_chunks(4096)
        .map(|chunk| {
            let mut keys = Vec::new();
            for path in chunk {
                for s in 0..path.len() {
                    for t in (s + 1)..path.len().min(s + window + 1) {
                        let (a, b) = (path[s] as u64, path[t] as u64);
                        keys.push(a * n64 + b);
                        keys.push(b * n64 + a);
                    }
                }
            }
            compress(keys)
        })
        .reduce(Vec::new, merge);
    let entries = merged
        .into_iter()
        .map(|(k, c)| ((k / n64) as usize, (k % n64) as usize, c))
        .collect();
    Ok(FrequencyMatrix { n, entries })
}

/// PPMI matrix with its normalized form and the intermediate probabilities.
#[derive(Debug, Clone)]
pub struct PpmiGraph {
    pub ppmi: CsrMatrix,
    pub degrees: Vec<f64>,
    pub normalized: CsrMatrix,
    pub probabilities: CsrMatrix,
    pub row_marginals: Vec<f64>,
    pub col_marginals: Vec<f64>,
}

impl PpmiGraph {
    pub fn n(&self) -> usize {
        self.ppmi.rows()
    }
}

pub fn compute_ppmi(freq: &FrequencyMatrix, neg_shift: f64) -> Result<PpmiGraph> {
    if !(neg_shift >= 1.0 && neg_shift.is_finite()) {
        return Err(Error::Domain(format!("neg_shift must be >= 1, got {neg_shift}")));
    }
    let total = freq.total();
    if total == 0 {
        return Err(Error::EmptyFrequency);
    }
    let n = freq.n();
    let total = total as f64;
    let probabilities = CsrMatrix::from_triplets(
        n,
        n,
        freq.entries().iter().map(|&(i, j, c)| (i, j, c as f64 / total)),
    )?;
    let row_marginals = probabilities.row_sums();
    // Accumulating in row-major order makes each column sum visit the same values
    // in the same order as the matching row sum, so symmetry is exact.
    let mut col_marginals = vec![0.0; n];
    for (_, j, p) in probabilities.triplets() {
        col_marginals[j] += p;
    }
    let shift = neg_shift.ln();
    let ppmi = CsrMatrix::from_triplets(
        n,
        n,
        probabilities.triplets().filter_map(|(i, j, p)| {
            let v = (p / (row_marginals[i] * col_marginals[j])).ln() - shift;
            (v > 0.0).then_some((i, j, v))
        }),
    )?;
    let degrees = ppmi.row_sums();
    let normalized = symmetric_normalize(&ppmi)?;
    Ok(PpmiGraph {
        ppmi,
        degrees,
        normalized,
        probabilities,
        row_marginals,
        col_marginals,
    })
}

/// Walks, counts and PPMI in one call.
pub fn build_semantic_graph(graph: &SparseGraph, config: &WalkConfig) -> Result<(FrequencyMatrix, PpmiGraph)> {
    let paths = sample_walks(graph, config)?;
    let freq = build_frequency(&paths, config.window, graph.n())?;
    let ppmi = compute_ppmi(&freq, config.neg_shift)?;
    Ok((freq, ppmi))
}
