//! Small dense matrices and the lower-triangular block tables used by the
//! level recursion.

use std::fmt;
use std::ops::{Index, IndexMut};

/// Row-major square matrix. State counts here are tiny (a handful of
/// states), so no BLAS.
#[derive(Clone, PartialEq)]
pub struct Mat {
    n: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            m.data[i * n..(i + 1) * n].copy_from_slice(row);
        }
        m
    }

    pub fn from_slice(n: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), n * n);
        Self {
            n,
            data: data.to_vec(),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().sum()).collect()
    }

    /// Per-row total variation `sum_j |A_ij|`.
    pub fn row_abs_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum())
            .collect()
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|x| *x *= c);
    }

    pub fn add_assign(&mut self, other: &Mat) {
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        let n = self.n;
        let mut out = Mat::zeros(n);
        matmul_acc(&self.data, &other.data, &mut out.data, n);
        out
    }
}

/// `out += a * b` for `n x n` row-major blocks.
#[inline]
pub fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], n: usize) {
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b[k * n..(k + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = (0..self.n).map(|i| self.row(i)).collect();
        f.debug_list().entries(rows).finish()
    }
}

/// Lower-triangular table of `n x n` blocks indexed by `(level, w)` with
/// `0 <= w <= level <= max_level`, stored contiguously level after level.
#[derive(Clone)]
pub struct TriTable {
    n: usize,
    max_level: usize,
    data: Vec<f64>,
}

impl TriTable {
    pub fn zeros(n: usize, max_level: usize) -> Self {
        let blocks = (max_level + 1) * (max_level + 2) / 2;
        Self {
            n,
            max_level,
            data: vec![0.0; blocks * n * n],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn max_level(&self) -> usize {
        self.max_level
    }

    #[inline]
    fn offset(&self, level: usize, w: usize) -> usize {
        debug_assert!(w <= level && level <= self.max_level);
        (level * (level + 1) / 2 + w) * self.n * self.n
    }

    #[inline]
    pub fn block(&self, level: usize, w: usize) -> &[f64] {
        let o = self.offset(level, w);
        &self.data[o..o + self.n * self.n]
    }

    #[inline]
    pub fn block_mut(&mut self, level: usize, w: usize) -> &mut [f64] {
        let o = self.offset(level, w);
        let nn = self.n * self.n;
        &mut self.data[o..o + nn]
    }

    /// All blocks of one level as a contiguous slice.
    #[inline]
    pub fn level(&self, level: usize) -> &[f64] {
        let o = self.offset(level, 0);
        &self.data[o..o + (level + 1) * self.n * self.n]
    }

    #[inline]
    pub fn level_mut(&mut self, level: usize) -> &mut [f64] {
        let o = self.offset(level, 0);
        let len = (level + 1) * self.n * self.n;
        &mut self.data[o..o + len]
    }

    /// Splits out level `k - 1` (read-only) and level `k` (mutable).
    pub fn level_pair_mut(&mut self, k: usize) -> (&[f64], &mut [f64]) {
        assert!(k >= 1 && k <= self.max_level);
        let prev = self.offset(k - 1, 0);
        let cur = self.offset(k, 0);
        let nn = self.n * self.n;
        let (head, tail) = self.data.split_at_mut(cur);
        (&head[prev..cur], &mut tail[..(k + 1) * nn])
    }

    pub fn mat(&self, level: usize, w: usize) -> Mat {
        Mat::from_slice(self.n, self.block(level, w))
    }
}

impl fmt::Debug for TriTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TriTable")
            .field("n", &self.n)
            .field("max_level", &self.max_level)
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(a.matmul(&Mat::identity(2)), a);
        let b = a.matmul(&a);
        assert_eq!(b.as_slice(), &[7.0, 10.0, 15.0, 22.0]);
    }

    #[test]
    fn tri_table_layout() {
        let mut t = TriTable::zeros(2, 3);
        t.block_mut(2, 1)[3] = 5.0;
        assert_eq!(t.mat(2, 1)[(1, 1)], 5.0);
        assert_eq!(t.level(2).len(), 3 * 4);
        let (prev, cur) = t.level_pair_mut(3);
        assert_eq!(prev.len(), 3 * 4);
        assert_eq!(cur.len(), 4 * 4);
        assert_eq!(prev[4 + 3], 5.0);
    }
}
