//! Compressed sparse row matrices for graph propagation.

use ndarray::Array2;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists. Entries within a row are
    /// sorted by column; duplicate columns are summed.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        let n_rows = rows.len();
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                assert!(c < cols, "column {c} out of range");
                if indices.len() > *indptr.last().unwrap() && *indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            rows: n_rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                out[[i, j]] = v;
            }
        }
        out
    }

    /// `self · x`
    pub fn matmul(&self, x: &Array2<f64>) -> Array2<f64> {
        assert_eq!(self.cols, x.nrows());
        let mut out = Array2::zeros((self.rows, x.ncols()));
        for i in 0..self.rows {
            let mut dst = out.row_mut(i);
            for (j, v) in self.row(i) {
                dst.scaled_add(v, &x.row(j));
            }
        }
        out
    }

    /// `selfᵀ · x`
    pub fn t_matmul(&self, x: &Array2<f64>) -> Array2<f64> {
        assert_eq!(self.rows, x.nrows());
        let mut out = Array2::zeros((self.cols, x.ncols()));
        for i in 0..self.rows {
            let src = x.row(i);
            for (j, v) in self.row(i) {
                out.row_mut(j).scaled_add(v, &src);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn products_match_dense() {
        let m = CsrMatrix::from_rows(3, vec![vec![(2, 1.0), (0, 2.0)], vec![], vec![(1, -1.0), (1, 0.5)]]);
        assert_eq!(m.nnz(), 3);
        let dense = array![[2.0, 0.0, 1.0], [0.0, 0.0, 0.0], [0.0, -0.5, 0.0]];
        assert_eq!(m.to_dense(), dense);
        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        assert_eq!(m.matmul(&x), dense.dot(&x));
        assert_eq!(m.t_matmul(&x), dense.t().dot(&x));
    }
}
