//! Square CSR matrices used for the assembled operators.

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseOperator {
    /// Builds an `n x n` matrix from `(row, col, value)` triplets; duplicates are summed.
    ///
    /// # Panics
    /// If an index is out of range.
    pub fn from_triplets(n: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (r, c, v) in triplets {
            assert!(r < n && c < n, "entry ({r}, {c}) outside a {n}x{n} matrix");
            rows[r].push((c, v));
        }
        Self::from_rows(rows)
    }

    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let start = cols.len();
            for (c, v) in row {
                assert!(c < n, "column {c} outside a {n}x{n} matrix");
                if cols.len() > start && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        SparseOperator { n, row_ptr, cols, vals }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        SparseOperator {
            n: d.len(),
            row_ptr: (0..=d.len()).collect(),
            cols: (0..d.len()).collect(),
            vals: d.to_vec(),
        }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[range.clone()].iter().copied().zip(self.vals[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|e| e.0 == c).map(|e| e.1).unwrap_or(0.0)
    }

    /// `out = self * x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate().take(self.n) {
            let mut s = 0.0;
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[idx] * x[self.cols[idx]];
            }
            *o = s;
        }
    }

    /// `out = self^T * x`.
    pub fn apply_transpose(&self, x: &[f64], out: &mut [f64]) {
        out[..self.n].fill(0.0);
        for (r, &xr) in x.iter().enumerate().take(self.n) {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[self.cols[idx]] += self.vals[idx] * xr;
            }
        }
    }

    pub fn transpose(&self) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n];
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                rows[c].push((r, v));
            }
        }
        Self::from_rows(rows)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &SparseOperator) -> Self {
        assert_eq!(self.n, other.n);
        let rows = (0..self.n)
            .map(|r| {
                self.row(r)
                    .chain(other.row(r).map(|(c, v)| (c, alpha * v)))
                    .collect()
            })
            .collect();
        Self::from_rows(rows)
    }

    /// `diag(d) * self`.
    pub fn left_scaled(&self, d: &[f64]) -> Self {
        let mut out = self.clone();
        for r in 0..self.n {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.vals[idx] *= d[r];
            }
        }
        out
    }

    /// `self * other`.
    pub fn matmul(&self, other: &SparseOperator) -> Self {
        assert_eq!(self.n, other.n);
        let rows = (0..self.n)
            .map(|r| {
                let mut acc = Vec::new();
                for (k, a) in self.row(r) {
                    for (c, b) in other.row(k) {
                        acc.push((c, a * b));
                    }
                }
                acc
            })
            .collect();
        Self::from_rows(rows)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.row(r).map(|e| e.1).sum()).collect()
    }

    pub fn min_value(&self) -> f64 {
        self.vals.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest entrywise difference, comparing missing entries as zero.
    pub fn max_abs_diff(&self, other: &SparseOperator) -> f64 {
        let diff = self.add_scaled(-1.0, other);
        diff.vals.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }

    /// Symmetrized sparsity pattern, without the diagonal.
    pub(crate) fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); self.n];
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                if c != r && v != 0.0 {
                    adj[r].push(c);
                    adj[c].push(r);
                }
            }
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }
}
