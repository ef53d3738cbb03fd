use ndarray::Array2;

/// Compressed sparse row matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` entries. Entries are sorted by
    /// column; zeros are dropped; duplicate columns are summed.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                assert!(c < n_cols, "column {c} out of range {n_cols}");
                if last == Some(c) {
                    *data.last_mut().unwrap() += v;
                    continue;
                }
                indices.push(c);
                data.push(v);
                last = Some(c);
            }
            // drop explicit zeros (including sums that cancelled)
            let start = *indptr.last().unwrap();
            let mut keep = start;
            for k in start..indices.len() {
                if data[k] != 0.0 {
                    indices[keep] = indices[k];
                    data[keep] = data[k];
                    keep += 1;
                }
            }
            indices.truncate(keep);
            data.truncate(keep);
            indptr.push(indices.len());
        }
        CsrMatrix {
            n_rows: indptr.len() - 1,
            n_cols,
            indptr,
            indices,
            data,
        }
    }

    pub fn from_dense(dense: &Array2<f64>) -> Self {
        let rows = dense
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(c, &v)| (c, v))
                    .collect()
            })
            .collect();
        Self::from_rows(dense.ncols(), rows)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows, self.n_cols));
        for i in 0..self.n_rows {
            for (c, v) in self.row(i) {
                out[[i, c]] = v;
            }
        }
        out
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.data[span].iter().copied())
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// `self * b` where `b` is `n_cols x k`.
    pub fn mul_dense(&self, b: &Array2<f64>) -> Array2<f64> {
        assert_eq!(b.nrows(), self.n_cols);
        let k = b.ncols();
        let mut out = Array2::zeros((self.n_rows, k));
        for i in 0..self.n_rows {
            let mut orow = out.row_mut(i);
            for (c, v) in self.row(i) {
                orow.scaled_add(v, &b.row(c));
            }
        }
        out
    }

    /// `self^T * a` where `a` is `n_rows x k`.
    pub fn t_mul_dense(&self, a: &Array2<f64>) -> Array2<f64> {
        assert_eq!(a.nrows(), self.n_rows);
        let k = a.ncols();
        let mut out = Array2::zeros((self.n_cols, k));
        for i in 0..self.n_rows {
            let arow = a.row(i);
            for (c, v) in self.row(i) {
                out.row_mut(c).scaled_add(v, &arow);
            }
        }
        out
    }

    /// Rows reordered so that output row `i` is input row `order[i]`.
    pub fn select_rows(&self, order: &[usize]) -> Self {
        let rows = order.iter().map(|&i| self.row(i).collect()).collect();
        Self::from_rows(self.n_cols, rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn products_match_dense() {
        let d = array![[1.0, 0.0, 2.0], [0.0, 0.0, 0.0], [3.0, 4.0, 0.0]];
        let s = CsrMatrix::from_dense(&d);
        assert_eq!(s.nnz(), 4);
        assert_eq!(s.to_dense(), d);
        let b = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        assert_eq!(s.mul_dense(&b), d.dot(&b));
        assert_eq!(s.t_mul_dense(&b), d.t().dot(&b));
        assert_eq!(s.frobenius_sq(), 30.0);
    }

    #[test]
    fn duplicate_entries_sum_and_zeros_drop() {
        let s = CsrMatrix::from_rows(2, vec![vec![(1, 1.0), (0, 0.0), (1, 2.0)]]);
        assert_eq!(s.nnz(), 1);
        assert_eq!(s.to_dense(), array![[0.0, 3.0]]);
    }
}
