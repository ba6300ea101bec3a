//! Feature-space similarity measures and kNN sparsification into binary subgraphs.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, SparseGraph};
use crate::linalg::CsrMatrix;

/// A similarity measure over feature rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasureKind {
    /// `x_iᵀx_j / (‖x_i‖‖x_j‖)`.
    Cosine,
    /// Heat kernel `exp(−‖x_i − x_j‖² / bandwidth)`.
    Gaussian { bandwidth: f64 },
    /// Parameter-free weights over the `neighbors` nearest rows: exactly that
    /// many positive entries per row, summing to one.
    Sparsity { neighbors: usize },
}

impl MeasureKind {
    pub fn name(&self) -> &'static str {
        match self {
            MeasureKind::Cosine => "cosine",
            MeasureKind::Gaussian { .. } => "gaussian",
            MeasureKind::Sparsity { .. } => "sparsity",
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match *self {
            MeasureKind::Cosine => Ok(()),
            MeasureKind::Gaussian { bandwidth } if !(bandwidth > 0.0 && bandwidth.is_finite()) => {
                Err(Error::Domain(format!("gaussian bandwidth must be positive, got {bandwidth}")))
            }
            MeasureKind::Sparsity { neighbors } if neighbors == 0 || neighbors >= n => Err(Error::Domain(format!(
                "sparsity neighbor count must be in [1, {n}), got {neighbors}"
            ))),
            _ => Ok(()),
        }
    }
}

/// One candidate feature graph: the dense similarity and its kNN adjacency.
#[derive(Debug, Clone)]
pub struct MeasureSubgraph {
    pub measure: MeasureKind,
    pub similarity: Array2<f64>,
    pub adjacency: SparseGraph,
    pub k: usize,
}

/// Sum over the merged support of two sorted sparse rows.
fn merge_rows(a: (&[usize], &[f64]), b: (&[usize], &[f64]), mut f: impl FnMut(f64, f64)) {
    let (ai, av) = a;
    let (bi, bv) = b;
    let (mut p, mut q) = (0, 0);
    while p < ai.len() || q < bi.len() {
        let ca = ai.get(p).copied().unwrap_or(usize::MAX);
        let cb = bi.get(q).copied().unwrap_or(usize::MAX);
        if ca == cb {
            f(av[p], bv[q]);
            p += 1;
            q += 1;
        } else if ca < cb {
            f(av[p], 0.0);
            p += 1;
        } else {
            f(0.0, bv[q]);
            q += 1;
        }
    }
}

/// Fills a symmetric n×n matrix from a function of `(i, j)` evaluated for `j > i`,
/// with the given diagonal value.
fn symmetric_fill(n: usize, diagonal: impl Fn(usize) -> f64 + Sync, f: impl Fn(usize, usize) -> f64 + Sync) -> Array2<f64> {
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| ((i + 1)..n).map(|j| f(i, j)).collect())
        .collect();
    let mut out = Array2::zeros((n, n));
    for (i, row) in upper.into_iter().enumerate() {
        out[[i, i]] = diagonal(i);
        for (off, v) in row.into_iter().enumerate() {
            let j = i + 1 + off;
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

/// Pairwise squared Euclidean distances, zero on the diagonal.
pub fn squared_distances(x: &FeatureMatrix) -> Array2<f64> {
    let rows: &CsrMatrix = x.sparse();
    symmetric_fill(x.n(), |_| 0.0, |i, j| {
        let mut acc = 0.0;
        merge_rows(rows.row(i), rows.row(j), |a, b| acc += (a - b) * (a - b));
        acc
    })
}

/// Mean squared distance over unordered pairs of distinct nodes.
pub fn mean_pairwise_sq_distance(x: &FeatureMatrix) -> f64 {
    let n = x.n();
    if n < 2 {
        return 0.0;
    }
    let dist = squared_distances(x);
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += dist[[i, j]];
        }
    }
    total / (n * (n - 1) / 2) as f64
}

/// The default measure list `[Cosine, Gaussian, Sparsity]`, with the Gaussian
/// bandwidth set to the mean pairwise squared distance and `k` sparsity neighbors.
pub fn default_measures(x: &FeatureMatrix, k: usize) -> Result<Vec<MeasureKind>> {
    let bandwidth = mean_pairwise_sq_distance(x);
    if !(bandwidth > 0.0) {
        return Err(Error::Domain("all feature rows are identical; gaussian bandwidth is zero".into()));
    }
    Ok(vec![
        MeasureKind::Cosine,
        MeasureKind::Gaussian { bandwidth },
        MeasureKind::Sparsity { neighbors: k },
    ])
}

fn cosine(x: &FeatureMatrix) -> Result<Array2<f64>> {
    let rows = x.sparse();
    let norms: Vec<f64> = (0..x.n())
        .map(|i| rows.row(i).1.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if let Some(node) = norms.iter().position(|&nrm| nrm == 0.0) {
        return Err(Error::DegenerateFeature { node });
    }
    Ok(symmetric_fill(x.n(), |_| 1.0, |i, j| {
        let mut dot = 0.0;
        merge_rows(rows.row(i), rows.row(j), |a, b| dot += a * b);
        (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
    }))
}

/// Nearest-first ordering of the other nodes: ascending distance, lower index on ties.
fn nearest_order(dist: &Array2<f64>, i: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dist.ncols()).filter(|&j| j != i).collect();
    order.sort_by(|&a, &b| dist[[i, a]].total_cmp(&dist[[i, b]]).then(a.cmp(&b)));
    order
}

fn sparsity_from_distances(dist: &Array2<f64>, k: usize) -> Array2<f64> {
    let n = dist.nrows();
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let order = nearest_order(dist, i);
            let chosen = &order[..k];
            let weights = order.get(k).and_then(|&next| {
                let cutoff = dist[[i, next]];
                let numer: Vec<f64> = chosen.iter().map(|&j| cutoff - dist[[i, j]]).collect();
                // The closed-form denominator k·e_(k+1) − Σ e_(h) equals the sum of numerators.
                let denom: f64 = numer.iter().sum();
                numer.iter().all(|&v| v > 0.0).then(|| numer.iter().map(|v| v / denom).collect::<Vec<_>>())
            });
            let weights = weights.unwrap_or_else(|| vec![1.0 / k as f64; k]);
            chosen.iter().copied().zip(weights).collect()
        })
        .collect();
    let mut out = Array2::zeros((n, n));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, w) in row {
            out[[i, j]] = w;
        }
    }
    out
}

fn similarity_with(x: &FeatureMatrix, measure: MeasureKind, dist: &mut Option<Array2<f64>>) -> Result<Array2<f64>> {
    measure.validate(x.n())?;
    match measure {
        MeasureKind::Cosine => cosine(x),
        MeasureKind::Gaussian { bandwidth } => {
            let d = dist.get_or_insert_with(|| squared_distances(x));
            Ok(d.mapv(|e| (-e / bandwidth).exp()))
        }
        MeasureKind::Sparsity { neighbors } => {
            let d = dist.get_or_insert_with(|| squared_distances(x));
            Ok(sparsity_from_distances(d, neighbors))
        }
    }
}

/// Dense n×n similarity matrix for one measure.
pub fn similarity_matrix(x: &FeatureMatrix, measure: MeasureKind) -> Result<Array2<f64>> {
    similarity_with(x, measure, &mut None)
}

/// Per-row top-`k` off-diagonal columns by similarity (lower column on ties).
pub fn knn_picks(similarity: &Array2<f64>, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = similarity.nrows();
    if similarity.ncols() != n {
        return Err(Error::Dimension(format!("similarity must be square, got {:?}", similarity.dim())));
    }
    if k == 0 || k >= n {
        return Err(Error::Domain(format!("k must be in [1, {n}), got {k}")));
    }
    if similarity.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("similarity matrix".into()));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut cols: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let by_rank = |a: &usize, b: &usize| similarity[[i, *b]].total_cmp(&similarity[[i, *a]]).then(a.cmp(b));
            if k < cols.len() {
                cols.select_nth_unstable_by(k - 1, by_rank);
                cols.truncate(k);
            }
            cols.sort_unstable_by(by_rank);
            cols
        })
        .collect())
}

/// Binary symmetric kNN graph: each row's top-`k` picks, OR-symmetrized, no diagonal.
pub fn knn_sparsify(similarity: &Array2<f64>, k: usize) -> Result<SparseGraph> {
    let n = similarity.nrows();
    let picks = knn_picks(similarity, k)?;
    let edges: Vec<(usize, usize)> = picks
        .iter()
        .enumerate()
        .flat_map(|(i, cols)| cols.iter().map(move |&j| (i, j)))
        .collect();
    SparseGraph::from_undirected_edges(n, &edges)
}

/// One kNN subgraph per measure, in input order. Pairwise distances are computed
/// once and shared between distance-based measures.
pub fn build_measure_subgraphs(x: &FeatureMatrix, measures: &[MeasureKind], k: usize) -> Result<Vec<MeasureSubgraph>> {
    if measures.is_empty() {
        return Err(Error::Domain("at least one measure is required".into()));
    }
    let mut dist = None;
    measures
        .iter()
        .map(|&measure| {
            let similarity = similarity_with(x, measure, &mut dist)?;
            let adjacency = knn_sparsify(&similarity, k)?;
            Ok(MeasureSubgraph {
                measure,
                similarity,
                adjacency,
                k,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::degrees;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn features(rows: Array2<f64>) -> FeatureMatrix {
        FeatureMatrix::new(rows).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let x = features(array![[1.0, 0.0], [1.0, 1.0], [0.0, 2.0], [1.0, 0.0]]);
        let s = similarity_matrix(&x, MeasureKind::Cosine).unwrap();
        assert_eq!(s[[0, 3]], 1.0);
        assert_eq!(s[[0, 2]], 0.0);
        assert_abs_diff_eq!(s[[0, 1]], 0.707_106_781_186_547_6, epsilon = 1e-12);
        assert_abs_diff_eq!(s[[0, 1]], 1.0 / (1.0f64 * 2.0f64.sqrt()), epsilon = 1e-15);
    }

    #[test]
    fn cosine_rejects_zero_rows() {
        let x = features(array![[1.0, 0.0], [0.0, 0.0]]);
        assert!(matches!(
            similarity_matrix(&x, MeasureKind::Cosine),
            Err(Error::DegenerateFeature { node: 1 })
        ));
    }

    #[test]
    fn gaussian_examples_and_domain() {
        let x = features(array![[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]]);
        let s = similarity_matrix(&x, MeasureKind::Gaussian { bandwidth: 2.0 }).unwrap();
        assert_eq!(s[[0, 1]], 1.0);
        assert_eq!(s[[2, 2]], 1.0);
        assert_abs_diff_eq!(s[[0, 2]], (-5.0f64 / 2.0).exp(), epsilon = 1e-15);
        assert!(matches!(
            similarity_matrix(&x, MeasureKind::Gaussian { bandwidth: 0.0 }),
            Err(Error::Domain(_))
        ));
    }

    /// Direct closed-form evaluation by enumerating sorted distances.
    fn sparsity_oracle(x: &Array2<f64>, i: usize, k: usize) -> Vec<(usize, f64)> {
        let n = x.nrows();
        let mut d: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| ((&x.row(i) - &x.row(j)).mapv(|v| v * v).sum(), j))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let cutoff = d[k].0;
        let denom = k as f64 * cutoff - d[..k].iter().map(|p| p.0).sum::<f64>();
        d[..k].iter().map(|&(e, j)| (j, (cutoff - e) / denom)).collect()
    }

    #[test]
    fn sparsity_matches_closed_form() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 3.0], [-1.0, 0.5], [2.0, -1.5]];
        let s = similarity_matrix(&features(x.clone()), MeasureKind::Sparsity { neighbors: 2 }).unwrap();
        for i in 0..6 {
            let oracle = sparsity_oracle(&x, i, 2);
            let positive = s.row(i).iter().filter(|v| **v > 0.0).count();
            assert_eq!(positive, 2);
            for (j, w) in oracle {
                assert_abs_diff_eq!(s[[i, j]], w, epsilon = 1e-12);
            }
            assert_abs_diff_eq!(s.row(i).sum(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn sparsity_ties_fall_back_to_uniform() {
        // node 0 is equidistant from all others
        let x = features(array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]);
        let s = similarity_matrix(&x, MeasureKind::Sparsity { neighbors: 2 }).unwrap();
        assert_eq!(s[[0, 1]], 0.5);
        assert_eq!(s[[0, 2]], 0.5);
        assert_eq!(s[[0, 3]], 0.0);
        assert!(similarity_matrix(&x, MeasureKind::Sparsity { neighbors: 4 }).is_err());
    }

    #[test]
    fn knn_complete_when_k_is_n_minus_one() {
        let s = array![[1.0, 0.2, 0.3], [0.2, 1.0, 0.1], [0.3, 0.1, 1.0]];
        let g = knn_sparsify(&s, 2).unwrap();
        assert_eq!(g.undirected_edge_count(), 3);
        assert!(g.entries().iter().all(|(i, j, w)| i != j && *w == 1.0));
        assert!(knn_sparsify(&s, 3).is_err());
    }

    #[test]
    fn knn_top1_enumeration() {
        let s = array![[9.0, 0.8, 0.1], [0.8, 9.0, 0.3], [0.7, 0.2, 9.0]];
        let g = knn_sparsify(&s, 1).unwrap();
        let edges: Vec<_> = g.entries().iter().filter(|e| e.0 < e.1).map(|e| (e.0, e.1)).collect();
        assert_eq!(edges, vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn knn_ties_pick_lower_column() {
        let mut s = Array2::<f64>::zeros((6, 6));
        s[[0, 2]] = 0.9;
        s[[0, 5]] = 0.9;
        let picks = knn_picks(&s, 1).unwrap();
        // Stable-sort oracle over (-similarity) keeps the lower index first.
        let mut oracle: Vec<usize> = (1..6).collect();
        oracle.sort_by(|a, b| s[[0, *b]].total_cmp(&s[[0, *a]]));
        assert_eq!(picks[0], vec![oracle[0]]);
        assert_eq!(picks[0], vec![2]);
    }

    #[test]
    fn hub_degree_is_not_bounded_by_twice_k() {
        // Node 0 is every other node's nearest neighbour.
        let n = 8;
        let s = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 1.0 } else if i == 0 || j == 0 { 0.9 } else { 0.1 * ((i + j) % 3) as f64 });
        let g = knn_sparsify(&s, 1).unwrap();
        assert_eq!(degrees(&g)[0], n - 1);
    }

    fn blob10() -> FeatureMatrix {
        features(Array2::from_shape_fn((10, 3), |(i, j)| {
            let centre = if i < 5 { 1.0 } else { -1.0 };
            centre + 0.1 * ((i * 7 + j * 3) % 5) as f64 + 0.05 * j as f64
        }))
    }

    #[test]
    fn default_subgraphs_on_blob() {
        let x = blob10();
        let measures = default_measures(&x, 3).unwrap();
        let subs = build_measure_subgraphs(&x, &measures, 3).unwrap();
        assert_eq!(subs.len(), 3);
        for (sub, m) in subs.iter().zip(&measures) {
            assert_eq!(sub.measure, *m);
            assert!(sub.adjacency.is_symmetric());
            for (i, j, w) in sub.adjacency.entries() {
                assert_ne!(i, j);
                assert_eq!(*w, 1.0);
            }
            assert!(degrees(&sub.adjacency).iter().all(|&d| (3..=6).contains(&d)));
        }
    }

    #[test]
    fn single_cosine_and_duplicate_measures() {
        let x = blob10();
        let subs = build_measure_subgraphs(&x, &[MeasureKind::Cosine], 2).unwrap();
        let direct = knn_sparsify(&similarity_matrix(&x, MeasureKind::Cosine).unwrap(), 2).unwrap();
        assert_eq!(subs[0].adjacency, direct);
        let g = MeasureKind::Gaussian { bandwidth: 1.5 };
        let dup = build_measure_subgraphs(&x, &[g, g], 2).unwrap();
        assert_eq!(dup[0].adjacency, dup[1].adjacency);
        assert!(build_measure_subgraphs(&x, &[], 2).is_err());
    }

    fn random_features() -> impl Strategy<Value = Array2<f64>> {
        (3usize..30, 1usize..6).prop_flat_map(|(n, d)| {
            proptest::collection::vec(-3.0f64..3.0, n * d)
                .prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn sparsity_rows_sum_to_one(x in random_features(), k_seed in 0usize..100) {
            let n = x.nrows();
            let k = 1 + k_seed % (n - 1);
            let s = similarity_matrix(&features(x), MeasureKind::Sparsity { neighbors: k }).unwrap();
            for row in s.rows() {
                prop_assert_eq!(row.iter().filter(|v| **v > 0.0).count(), k);
                prop_assert!((row.sum() - 1.0).abs() <= 1e-9);
            }
        }

        #[test]
        fn cosine_invariant_to_positive_row_scaling(x in random_features(), scales in proptest::collection::vec(0.01f64..100.0, 30)) {
            prop_assume!(x.rows().into_iter().all(|r| r.iter().any(|v| *v != 0.0)));
            let scaled = Array2::from_shape_fn(x.dim(), |(i, j)| x[[i, j]] * scales[i]);
            let a = similarity_matrix(&features(x), MeasureKind::Cosine).unwrap();
            let b = similarity_matrix(&features(scaled), MeasureKind::Cosine).unwrap();
            for (p, q) in a.iter().zip(b.iter()) {
                prop_assert!((p - q).abs() <= 1e-12);
            }
        }

        #[test]
        fn gaussian_in_unit_interval(x in random_features(), t in 0.1f64..10.0) {
            let s = similarity_matrix(&features(x), MeasureKind::Gaussian { bandwidth: t }).unwrap();
            for i in 0..s.nrows() {
                prop_assert_eq!(s[[i, i]], 1.0);
            }
            prop_assert!(s.iter().all(|v| *v > 0.0 && *v <= 1.0));
        }

        #[test]
        fn knn_degree_bounds(x in random_features(), k_seed in 0usize..100) {
            let n = x.nrows();
            let k = 1 + k_seed % (n - 1);
            let s = similarity_matrix(&features(x), MeasureKind::Gaussian { bandwidth: 1.0 }).unwrap();
            let g = knn_sparsify(&s, k).unwrap();
            let degs = degrees(&g);
            for &d in &degs {
                prop_assert!(d >= k && d < n);
            }
            // n·k directed picks give between n·k/2 and n·k undirected edges.
            let edges = g.undirected_edge_count();
            prop_assert!(2 * edges >= n * k && edges <= n * k);
            prop_assert_eq!(degs.iter().sum::<usize>(), 2 * edges);
        }
    }
}
