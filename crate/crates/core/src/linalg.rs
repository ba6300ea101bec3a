//! Compressed sparse row matrices and the handful of products the model needs.
//!
//! Every product here reduces each output row in a fixed index order, so results
//! are bit-identical regardless of how many rayon workers run them.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// A real-valued sparse matrix in CSR layout with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicate positions are summed.
    pub fn from_triplets<I>(rows: usize, cols: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            if r >= rows || c >= cols {
                return Err(Error::Dimension(format!(
                    "entry ({r}, {c}) outside a {rows}x{cols} matrix"
                )));
            }
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            indptr[r + 1] += 1;
            indices.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for i in 0..rows {
            indptr[i + 1] += indptr[i];
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    /// Keeps every nonzero entry of a dense matrix.
    pub fn from_dense(dense: ArrayView2<'_, f64>) -> Self {
        let (rows, cols) = dense.dim();
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in dense.rows() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access to stored values; the sparsity pattern stays fixed.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Returns a matrix with the same pattern and the given values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.nnz(), "value count must match pattern");
        Self {
            values,
            ..self.clone()
        }
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    /// Position of `(i, j)` in the value array, if stored.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.indptr[i];
        let (cols, _) = self.row(i);
        cols.binary_search(&j).ok().map(|k| start + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.values[p])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).1.iter().sum())
            .collect()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for (i, j, v) in self.triplets() {
            out[[i, j]] = v;
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.cols {
            counts[j + 1] += counts[j];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for (i, j, v) in self.triplets() {
            let slot = next[j];
            indices[slot] = i;
            values[slot] = v;
            next[j] += 1;
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            indptr,
            indices,
            values,
        }
    }

    /// Exact structural and numerical symmetry within `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        self.triplets()
            .all(|(i, j, v)| (self.get(j, i) - v).abs() <= tol)
    }

    /// `self · b` for a dense right-hand side.
    pub fn mul_dense(&self, b: &Array2<f64>) -> Result<Array2<f64>> {
        if b.nrows() != self.cols {
            return Err(Error::Dimension(format!(
                "sparse {}x{} times dense {}x{}",
                self.rows,
                self.cols,
                b.nrows(),
                b.ncols()
            )));
        }
        let width = b.ncols();
        let mut out = vec![0.0; self.rows * width];
        if width == 0 {
            return Ok(Array2::zeros((self.rows, 0)));
        }
        out.par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, dst)| {
                let (cols, vals) = self.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    let src = b.row(j);
                    for (d, s) in dst.iter_mut().zip(src.iter()) {
                        *d += v * s;
                    }
                }
            });
        Ok(Array2::from_shape_vec((self.rows, width), out).expect("shape computed above"))
    }

    /// `selfᵀ · b` without materialising the transpose.
    pub fn transpose_mul_dense(&self, b: &Array2<f64>) -> Result<Array2<f64>> {
        if b.nrows() != self.rows {
            return Err(Error::Dimension(format!(
                "transposed sparse {}x{} times dense {}x{}",
                self.cols,
                self.rows,
                b.nrows(),
                b.ncols()
            )));
        }
        let mut out = Array2::zeros((self.cols, b.ncols()));
        for (i, j, v) in self.triplets() {
            let src = b.row(i);
            let mut dst = out.row_mut(j);
            dst.scaled_add(v, &src);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let m = CsrMatrix::from_triplets(2, 3, vec![(1, 2, 1.0), (0, 1, 2.0), (1, 2, 0.5)]).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(1, 2), 1.5);
        assert_eq!(m.get(0, 1), 2.0);
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn out_of_range_triplet_is_rejected() {
        assert!(CsrMatrix::from_triplets(2, 2, vec![(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn products_match_dense() {
        let a = array![[1.0, 0.0, 2.0], [0.0, 0.0, 3.0]];
        let b = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let sparse = CsrMatrix::from_dense(a.view());
        assert_eq!(sparse.mul_dense(&b).unwrap(), a.dot(&b));
        let c = array![[1.0, -1.0], [2.0, 0.5]];
        assert_eq!(sparse.transpose_mul_dense(&c).unwrap(), a.t().dot(&c));
        assert_eq!(sparse.transpose().to_dense(), a.t().to_owned());
    }

    #[test]
    fn symmetry_check() {
        let s = CsrMatrix::from_dense(array![[0.0, 1.0], [1.0, 0.0]].view());
        assert!(s.is_symmetric(0.0));
        let a = CsrMatrix::from_dense(array![[0.0, 1.0], [0.0, 0.0]].view());
        assert!(!a.is_symmetric(0.0));
    }
}
