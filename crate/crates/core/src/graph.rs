//! Feature matrices, sparse adjacency graphs and symmetric normalization.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

/// Dense node features (n × d) with a sparse copy used for products.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Array2<f64>,
    sparse: CsrMatrix,
}

impl FeatureMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (n, d) = values.dim();
        if n == 0 || d == 0 {
            return Err(Error::Dimension(format!(
                "feature matrix must be non-empty, got {n}x{d}"
            )));
        }
        if let Some(((i, j), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Numeric(format!("feature ({i}, {j})")));
        }
        let values = values.as_standard_layout().into_owned();
        let sparse = CsrMatrix::from_dense(values.view());
        Ok(Self { values, sparse })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn sparse(&self) -> &CsrMatrix {
        &self.sparse
    }
}

/// Nonnegative weighted adjacency over `n` nodes, stored as sorted unique entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
    symmetric: bool,
}

impl SparseGraph {
    /// Validates and stores entries. With `symmetric` set, every `(i, j, w)` must
    /// have a matching `(j, i, w)`.
    pub fn new(n: usize, mut entries: Vec<(usize, usize, f64)>, symmetric: bool) -> Result<Self> {
        for &(i, j, w) in &entries {
            for id in [i, j] {
                if id >= n {
                    return Err(Error::Bounds {
                        id,
                        n,
                        context: "graph entry".into(),
                    });
                }
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Domain(format!(
                    "edge ({i}, {j}) has weight {w}; weights must be finite and nonnegative"
                )));
            }
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        if entries.windows(2).any(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::Domain("duplicate graph entry".into()));
        }
        let graph = Self {
            n,
            entries,
            symmetric,
        };
        if symmetric && !graph.check_symmetric() {
            return Err(Error::Domain(
                "graph flagged symmetric has an unmatched entry".into(),
            ));
        }
        Ok(graph)
    }

    /// Binary undirected graph from an edge list: self-loops dropped, duplicates
    /// collapsed, both directions stored with weight 1.
    pub fn from_undirected_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut entries = Vec::with_capacity(edges.len() * 2);
        for &(i, j) in edges {
            for id in [i, j] {
                if id >= n {
                    return Err(Error::Bounds {
                        id,
                        n,
                        context: "edge list".into(),
                    });
                }
            }
            if i != j {
                entries.push((i, j, 1.0));
                entries.push((j, i, 1.0));
            }
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        entries.dedup_by(|a, b| (a.0, a.1) == (b.0, b.1));
        Ok(Self {
            n,
            entries,
            symmetric: true,
        })
    }

    /// Wraps a sparse matrix, recording whether it is exactly symmetric.
    pub fn from_csr(matrix: &CsrMatrix) -> Result<Self> {
        if matrix.rows() != matrix.cols() {
            return Err(Error::Dimension(format!(
                "adjacency must be square, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        let symmetric = matrix.is_symmetric(0.0);
        Self::new(matrix.rows(), matrix.triplets().collect(), symmetric)
    }

    pub fn empty(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
            symmetric: true,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Number of undirected edges (entries above the diagonal) for symmetric graphs.
    pub fn undirected_edge_count(&self) -> usize {
        self.entries.iter().filter(|(i, j, _)| i < j).count()
    }

    pub fn to_csr(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(self.n, self.n, self.entries.iter().copied())
            .expect("entries validated on construction")
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for &(i, j, w) in &self.entries {
            out[[i, j]] = w;
        }
        out
    }

    /// Neighbor lists (excluding self) with weights, in ascending id order.
    pub fn adjacency_lists(&self) -> Vec<Vec<(usize, f64)>> {
        let mut lists = vec![Vec::new(); self.n];
        for &(i, j, w) in &self.entries {
            if i != j && w > 0.0 {
                lists[i].push((j, w));
            }
        }
        lists
    }

    fn check_symmetric(&self) -> bool {
        self.entries.iter().all(|&(i, j, w)| {
            self.entries
                .binary_search_by(|e| (e.0, e.1).cmp(&(j, i)))
                .is_ok_and(|k| self.entries[k].2 == w)
        })
    }
}

/// Number of distinct neighbors of every node, ignoring weights and self-loops.
pub fn degrees(graph: &SparseGraph) -> Vec<usize> {
    let mut deg = vec![0usize; graph.n()];
    for &(i, j, w) in graph.entries() {
        if i != j && w > 0.0 {
            deg[i] += 1;
        }
    }
    deg
}

/// `D̃^{-1/2}(A + I)D̃^{-1/2}` together with the degree vector of `A + I`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedGraph {
    matrix: CsrMatrix,
    degrees: Vec<f64>,
}

impl NormalizedGraph {
    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CsrMatrix {
        self.matrix
    }

    /// Degrees of `A + I`.
    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        self.matrix.to_dense()
    }
}

pub fn normalize_adjacency(graph: &SparseGraph) -> Result<NormalizedGraph> {
    if let Some(&(i, j, w)) = graph.entries().iter().find(|e| !(e.2 >= 0.0)) {
        return Err(Error::Domain(format!("negative weight {w} at ({i}, {j})")));
    }
    if !graph.is_symmetric() {
        return Err(Error::Domain(
            "normalization requires a symmetric graph".into(),
        ));
    }
    let (matrix, degrees) = normalize_with_self_loops(&graph.to_csr())?;
    Ok(NormalizedGraph { matrix, degrees })
}

/// Renormalized adjacency `D̃^{-1/2}(A + I)D̃^{-1/2}` of a square nonnegative matrix.
///
/// The output pattern is the input pattern plus the full diagonal. Returns the
/// normalized matrix and the degree vector of `A + I`.
pub fn normalize_with_self_loops(a: &CsrMatrix) -> Result<(CsrMatrix, Vec<f64>)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Dimension(format!(
            "adjacency must be square, got {}x{}",
            n,
            a.cols()
        )));
    }
    if let Some(v) = a.values().iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Domain(format!("negative or non-finite weight {v}")));
    }
    let with_loops = CsrMatrix::from_triplets(n, n, a.triplets().chain((0..n).map(|i| (i, i, 1.0))))?;
    let degrees = with_loops.row_sums();
    let values = with_loops
        .triplets()
        .map(|(i, j, v)| v / (degrees[i] * degrees[j]).sqrt())
        .collect();
    Ok((with_loops.with_values(values), degrees))
}

/// Reverse pass of [`normalize_with_self_loops`].
///
/// `grad_out` is aligned with the normalized matrix's stored values; the result is
/// aligned with `a`'s stored values and treats every stored entry of `a` as an
/// independent variable.
pub fn normalize_with_self_loops_backward(
    a: &CsrMatrix,
    normalized: &CsrMatrix,
    degrees: &[f64],
    grad_out: &[f64],
) -> Vec<f64> {
    let n = a.rows();
    let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    // Gradient with respect to each inverse-sqrt degree, accumulated over the
    // row and column the factor scales.
    let mut grad_scale = vec![0.0; n];
    for ((i, j, _), &g) in normalized.triplets().zip(grad_out) {
        let b_ij = a.get(i, j) + if i == j { 1.0 } else { 0.0 };
        grad_scale[i] += g * b_ij * inv_sqrt[j];
        grad_scale[j] += g * b_ij * inv_sqrt[i];
    }
    let grad_degree: Vec<f64> = (0..n)
        .map(|i| -0.5 * grad_scale[i] * inv_sqrt[i] / degrees[i])
        .collect();
    a.triplets()
        .map(|(i, j, _)| {
            let pos = normalized
                .position(i, j)
                .expect("normalized pattern contains the input pattern");
            grad_out[pos] * inv_sqrt[i] * inv_sqrt[j] + grad_degree[i]
        })
        .collect()
}

/// `D^{-1/2} P D^{-1/2}` with `D` the row sums of `P`; zero-degree rows stay zero
/// and no self-loops are added.
pub fn symmetric_normalize(p: &CsrMatrix) -> Result<CsrMatrix> {
    if p.rows() != p.cols() {
        return Err(Error::Dimension(format!(
            "matrix must be square, got {}x{}",
            p.rows(),
            p.cols()
        )));
    }
    if let Some(v) = p.values().iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Domain(format!("negative or non-finite entry {v}")));
    }
    let degrees = p.row_sums();
    let values = p
        .triplets()
        .map(|(i, j, v)| {
            let scale = degrees[i] * degrees[j];
            if scale > 0.0 { v / scale.sqrt() } else { 0.0 }
        })
        .collect();
    Ok(p.with_values(values))
}
