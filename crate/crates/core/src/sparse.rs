//! Compressed sparse row matrices used throughout assembly and solves.

use std::io::Write;

use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a matrix from per-row entry lists. Entries are sorted by column and
    /// duplicates are summed.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let nrows = rows.len();
        let mut indptr = Vec::with_capacity(nrows + 1);
        indptr.push(0);
        let total: usize = rows.iter().map(Vec::len).sum();
        let mut indices = Vec::with_capacity(total);
        let mut values = Vec::with_capacity(total);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if c >= ncols {
                    return Err(invalid(format!(
                        "column {c} out of range in row {i} (ncols = {ncols})"
                    )));
                }
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            indptr.push(indices.len());
        }
        Ok(CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut rows = vec![Vec::new(); nrows];
        for &(r, c, v) in triplets {
            if r >= nrows {
                return Err(invalid(format!("row {r} out of range (nrows = {nrows})")));
            }
            rows[r].push((c, v));
        }
        Self::from_rows(ncols, rows)
    }

    pub fn from_dense(rows: &[Vec<f64>], ncols: usize) -> Self {
        let rows = rows
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(c, v)| (c, *v))
                    .collect()
            })
            .collect();
        Self::from_rows(ncols, rows).expect("dense rows are in range")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn row_iter(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (c, v) = self.row(i);
        c.iter().copied().zip(v.iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        (0..self.nrows)
            .map(|i| self.row_iter(i).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows)
            .map(|i| self.row(i).1.iter().sum())
            .collect()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let entries = rows.iter().map(|&r| self.row_iter(r).collect()).collect();
        Self::from_rows(self.ncols, entries).expect("columns unchanged")
    }

    /// Remaps columns through `map` (old column -> new column); unmapped columns are dropped.
    pub fn remap_columns(&self, map: &[Option<usize>], new_ncols: usize) -> Self {
        let entries = (0..self.nrows)
            .map(|i| {
                self.row_iter(i)
                    .filter_map(|(c, v)| map[c].map(|nc| (nc, v)))
                    .collect()
            })
            .collect();
        Self::from_rows(new_ncols, entries).expect("mapped columns are in range")
    }

    /// Splits the columns at `at` into a left block `[0, at)` and a right block `[at, ncols)`.
    pub fn split_columns(&self, at: usize) -> (Self, Self) {
        let left: Vec<Option<usize>> = (0..self.ncols).map(|c| (c < at).then_some(c)).collect();
        let right: Vec<Option<usize>> =
            (0..self.ncols).map(|c| (c >= at).then(|| c - at)).collect();
        (
            self.remap_columns(&left, at),
            self.remap_columns(&right, self.ncols - at),
        )
    }

    pub fn matmul(&self, other: &CsrMatrix) -> Self {
        assert_eq!(self.ncols, other.nrows, "matmul dimension mismatch");
        let mut acc = vec![0.0; other.ncols];
        let mut mark = vec![usize::MAX; other.ncols];
        let mut rows = Vec::with_capacity(self.nrows);
        for i in 0..self.nrows {
            let mut touched = Vec::new();
            for (k, a) in self.row_iter(i) {
                for (j, b) in other.row_iter(k) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = 0.0;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            rows.push(touched.into_iter().map(|j| (j, acc[j])).collect());
        }
        Self::from_rows(other.ncols, rows).expect("product columns in range")
    }

    pub fn add(&self, other: &CsrMatrix) -> Self {
        assert_eq!(
            (self.nrows, self.ncols),
            (other.nrows, other.ncols),
            "add dimension mismatch"
        );
        let rows = (0..self.nrows)
            .map(|i| self.row_iter(i).chain(other.row_iter(i)).collect())
            .collect();
        Self::from_rows(self.ncols, rows).expect("same shape")
    }

    pub fn transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.ncols];
        for i in 0..self.nrows {
            for (c, v) in self.row_iter(i) {
                rows[c].push((i, v));
            }
        }
        Self::from_rows(self.nrows, rows).expect("transpose in range")
    }

    /// Drops entries with |v| <= tol * (largest |v| in the row).
    pub fn prune_relative(&self, tol: f64) -> Self {
        let rows = (0..self.nrows)
            .map(|i| {
                let m = self.row(i).1.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                self.row_iter(i)
                    .filter(|(_, v)| v.abs() > tol * m)
                    .collect()
            })
            .collect();
        Self::from_rows(self.ncols, rows).expect("same shape")
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (c, v) in self.row_iter(i) {
                m[(i, c)] += v;
            }
        }
        m
    }

    pub fn to_faer(&self) -> SparseColMat<usize, f64> {
        let triplets: Vec<Triplet<usize, usize, f64>> = (0..self.nrows)
            .flat_map(|i| self.row_iter(i).map(move |(c, v)| Triplet::new(i, c, v)))
            .collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &triplets)
            .expect("canonical CSR has no duplicate entries")
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Writes the matrix in MatrixMarket coordinate format (1-based indices).
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            for (c, v) in self.row_iter(i) {
                writeln!(w, "{} {} {:.17e}", i + 1, c + 1, v)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (0, 2, 2.0), (1, 0, -1.0)]).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 2), 3.0);
        assert_eq!(m.matvec(&[1.0, 1.0, 1.0]), vec![3.0, -1.0]);
    }

    #[test]
    fn matmul_matches_dense() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 2.0, 0.0], vec![0.0, -1.0, 3.0]], 3);
        let b = CsrMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0]], 2);
        let c = a.matmul(&b);
        assert_eq!(c.to_dense()[(0, 0)], 1.0);
        assert_eq!(c.to_dense()[(0, 1)], 2.0);
        assert_eq!(c.to_dense()[(1, 0)], 6.0);
        assert_eq!(c.to_dense()[(1, 1)], 5.0);
    }

    #[test]
    fn split_and_transpose() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]], 3);
        let (l, r) = a.split_columns(1);
        assert_eq!(l.ncols(), 1);
        assert_eq!(r.get(1, 1), 6.0);
        assert_eq!(a.transpose().get(2, 0), 3.0);
    }

    #[test]
    fn matrix_market_header() {
        let a = CsrMatrix::identity(2);
        let mut buf = Vec::new();
        a.write_matrix_market(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 "));
    }
}
