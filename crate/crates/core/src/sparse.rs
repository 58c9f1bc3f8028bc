//! Compressed sparse row matrices for graph propagation.

use crate::tensor::Matrix;

/// CSR matrix with `f64` values.
///
/// `row_ptr[i]..row_ptr[i + 1]` indexes the column ids and values of row `i`;
/// column ids inside a row are sorted ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicate coordinates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < n_rows && c < n_cols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(m: &Matrix) -> Self {
        let mut trip = Vec::new();
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                let v = m.get(i, j);
                if v != 0.0 {
                    trip.push((i, j, v));
                }
            }
        }
        Self::from_triplets(m.rows(), m.cols(), &trip)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column ids and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    /// Value at `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.row(i).1.iter().sum()).collect()
    }

    /// `self · dense`
    pub fn spmm(&self, dense: &Matrix) -> Matrix {
        assert_eq!(
            self.n_cols,
            dense.rows(),
            "spmm shape mismatch: {}x{} · {:?}",
            self.n_rows,
            self.n_cols,
            dense.shape()
        );
        let d = dense.cols();
        let mut out = Matrix::zeros(self.n_rows, d);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let out_row = out.row_mut(i);
            for (&j, &v) in cols.iter().zip(vals) {
                for (o, x) in out_row.iter_mut().zip(dense.row(j)) {
                    *o += v * x;
                }
            }
        }
        out
    }

    /// `selfᵀ · dense`, used by the backward pass.
    pub fn spmm_t(&self, dense: &Matrix) -> Matrix {
        assert_eq!(self.n_rows, dense.rows(), "spmm_t shape mismatch");
        let d = dense.cols();
        let mut out = Matrix::zeros(self.n_cols, d);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let src = dense.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                for (o, x) in out.row_mut(j).iter_mut().zip(src) {
                    *o += v * x;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_sort_columns() {
        let m = CsrMatrix::from_triplets(2, 3, &[(1, 2, 1.0), (0, 1, 2.0), (1, 0, 3.0), (1, 2, 0.5)]);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.row(1).0, &[0, 2]);
        assert_eq!(m.get(1, 2), 1.5);
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn spmm_and_transpose_match_dense() {
        let a = Matrix::from_rows(&[[1.0, 0.0, 2.0], [0.0, -1.0, 0.0]]);
        let sp = CsrMatrix::from_dense(&a);
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        assert!(sp.spmm(&x).max_abs_diff(&a.matmul(&x)) < 1e-15);
        let y = Matrix::from_rows(&[[1.0, -1.0], [0.5, 2.0]]);
        assert!(sp.spmm_t(&y).max_abs_diff(&a.matmul_tn(&y)) < 1e-15);
    }
}
