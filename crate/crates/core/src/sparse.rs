//! Compressed-row complex sparse matrices, just enough for ladder operators
//! and their tensor products.

use std::collections::BTreeMap;

use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<Complex64>,
}

impl SparseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, indptr: vec![0; rows + 1], indices: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![Complex64::new(1.0, 0.0); n])
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        Self::from_triplets(diag.len(), diag.len(), diag.iter().enumerate().map(|(i, &v)| (i, i, v)))
    }

    /// Duplicate entries are summed; exact zeros are dropped.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, Complex64)>,
    ) -> Self {
        let mut per_row: Vec<BTreeMap<usize, Complex64>> = vec![BTreeMap::new(); rows];
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet ({r},{c}) out of bounds {rows}x{cols}");
            *per_row[r].entry(c).or_insert(ZERO) += v;
        }
        let mut m = Self::zeros(rows, cols);
        for (r, row) in per_row.into_iter().enumerate() {
            for (c, v) in row {
                if v != ZERO {
                    m.indices.push(c);
                    m.values.push(v);
                }
            }
            m.indptr[r + 1] = m.indices.len();
        }
        m
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

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.row(r).find(|&(cc, _)| cc == c).map(|(_, v)| v).unwrap_or(ZERO)
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.cols, self.rows, self.triplets().map(|(r, c, v)| (c, r, v.conj())))
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        if s == ZERO {
            return Self::zeros(self.rows, self.cols);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(other, Complex64::new(1.0, 0.0))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.combine(other, Complex64::new(-1.0, 0.0))
    }

    fn combine(&self, other: &Self, sign: Complex64) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        Self::from_triplets(
            self.rows,
            self.cols,
            self.triplets().chain(other.triplets().map(|(r, c, v)| (r, c, v * sign))),
        )
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        let mut acc = vec![ZERO; other.cols];
        let mut touched: Vec<usize> = Vec::new();
        let mut seen = vec![false; other.cols];
        for r in 0..self.rows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if !seen[c] {
                        seen[c] = true;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                if acc[c] != ZERO {
                    out.indices.push(c);
                    out.values.push(acc[c]);
                }
                acc[c] = ZERO;
                seen[c] = false;
            }
            touched.clear();
            out.indptr[r + 1] = out.indices.len();
        }
        out
    }

    /// `AB − BA`.
    pub fn commutator(&self, other: &Self) -> Self {
        self.matmul(other).sub(&other.matmul(self))
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut out = Self::zeros(rows, cols);
        for ra in 0..self.rows {
            for rb in 0..other.rows {
                for (ca, va) in self.row(ra) {
                    for (cb, vb) in other.row(rb) {
                        out.indices.push(ca * other.cols + cb);
                        out.values.push(va * vb);
                    }
                }
                out.indptr[ra * other.rows + rb + 1] = out.indices.len();
            }
        }
        out
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.cols, "vector length mismatch");
        (0..self.rows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.sub(other).max_abs()
    }

    /// Rows and columns restricted to `keep` (in that order).
    pub fn submatrix(&self, keep: &[usize]) -> Self {
        let mut position = vec![usize::MAX; self.cols.max(self.rows)];
        for (i, &k) in keep.iter().enumerate() {
            position[k] = i;
        }
        let triplets = keep.iter().enumerate().flat_map(|(i, &r)| {
            let position = &position;
            self.row(r).filter_map(move |(c, v)| (position[c] != usize::MAX).then(|| (i, position[c], v)))
        });
        Self::from_triplets(keep.len(), keep.len(), triplets.collect::<Vec<_>>())
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let mut out = vec![vec![ZERO; self.cols]; self.rows];
        for (r, c, v) in self.triplets() {
            out[r][c] = v;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sample() -> SparseMatrix {
        SparseMatrix::from_triplets(2, 3, [(0, 0, c(1.0, 0.0)), (0, 2, c(0.0, 2.0)), (1, 1, c(3.0, -1.0))])
    }

    #[test]
    fn duplicates_sum_and_zeros_drop() {
        let m = SparseMatrix::from_triplets(2, 2, [(0, 0, c(1.0, 0.0)), (0, 0, c(-1.0, 0.0)), (1, 0, c(2.0, 0.0)), (1, 0, c(1.0, 0.0))]);
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(1, 0), c(3.0, 0.0));
    }

    #[test]
    fn matmul_matches_dense() {
        let a = sample();
        let b = a.adjoint();
        let p = a.matmul(&b).to_dense();
        let (da, db) = (a.to_dense(), b.to_dense());
        for i in 0..2 {
            for j in 0..2 {
                let want: Complex64 = (0..3).map(|k| da[i][k] * db[k][j]).sum();
                assert_eq!(p[i][j], want);
            }
        }
    }

    #[test]
    fn kron_matches_index_formula() {
        let a = sample();
        let b = SparseMatrix::from_triplets(2, 2, [(0, 1, c(1.0, 1.0)), (1, 0, c(2.0, 0.0))]);
        let k = a.kron(&b);
        assert_eq!((k.rows(), k.cols()), (4, 6));
        for ra in 0..2 {
            for ca in 0..3 {
                for rb in 0..2 {
                    for cb in 0..2 {
                        assert_eq!(k.get(ra * 2 + rb, ca * 2 + cb), a.get(ra, ca) * b.get(rb, cb));
                    }
                }
            }
        }
    }

    #[test]
    fn apply_and_submatrix() {
        let a = sample();
        let y = a.apply(&[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]);
        assert_eq!(y, vec![c(1.0, 2.0), c(3.0, -1.0)]);
        let sq = a.adjoint().matmul(&a);
        let sub = sq.submatrix(&[2, 0]);
        assert_eq!(sub.get(0, 1), sq.get(2, 0));
        assert_eq!(sub.get(1, 1), sq.get(0, 0));
    }
}
