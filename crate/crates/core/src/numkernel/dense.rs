use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::{dot, Real};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        Self::from_fn(n, m, |i, j| rows[i][j])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Overwrites the matrix with `(M + M^T) / 2`.
    pub fn symmetrize(&mut self) {
        assert_eq!(self.rows, self.cols);
        let half = T::lit(0.5);
        for i in 0..self.rows {
            for j in 0..i {
                let v = half * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Dense Cholesky factor `A = L L^T`, stored in the lower triangle.
#[derive(Clone, Debug)]
pub struct DenseCholesky<T> {
    l: DenseMatrix<T>,
}

impl<T: Real> DenseCholesky<T> {
    pub fn factor(a: &DenseMatrix<T>) -> Result<Self> {
        let n = a.rows();
        assert_eq!(n, a.cols());
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let d = a[(j, j)] - dot(&l.row(j)[..j], &l.row(j)[..j]);
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    column: j,
                    pivot: d.as_f64(),
                });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let s = a[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
                l[(i, j)] = s / djj;
            }
        }
        Ok(DenseCholesky { l })
    }

    pub fn factor_matrix(&self) -> &DenseMatrix<T> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Solves `L y = b` in place.
    pub fn forward(&self, b: &mut [T]) {
        let l = &self.l;
        for i in 0..l.rows() {
            let s = b[i] - dot(&l.row(i)[..i], &b[..i]);
            b[i] = s / l[(i, i)];
        }
    }

    /// Solves `L^T x = y` in place.
    pub fn backward(&self, y: &mut [T]) {
        let l = &self.l;
        for i in (0..l.rows()).rev() {
            let xi = y[i] / l[(i, i)];
            y[i] = xi;
            let row = l.row(i);
            for k in 0..i {
                y[k] -= row[k] * xi;
            }
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.forward(&mut x);
        self.backward(&mut x);
        x
    }

    /// Solves `L X = B` row-wise for a dense `B` (`n x m`).
    pub fn forward_rows(&self, b: &DenseMatrix<T>) -> DenseMatrix<T> {
        let n = self.dim();
        assert_eq!(b.rows(), n);
        let m = b.cols();
        let mut x = b.clone();
        for i in 0..n {
            let (done, rest) = x.data.split_at_mut(i * m);
            let xi = &mut rest[..m];
            let li = self.l.row(i);
            for k in 0..i {
                let lik = li[k];
                if lik != T::zero() {
                    let xk = &done[k * m..(k + 1) * m];
                    for (t, s) in xi.iter_mut().zip(xk) {
                        *t -= lik * *s;
                    }
                }
            }
            let inv = T::one() / li[i];
            xi.iter_mut().for_each(|t| *t *= inv);
        }
        x
    }
}

/// Symmetric-pivoted Cholesky with rank truncation.
///
/// Pivots are taken largest-diagonal-first (lowest index on ties); once the
/// largest remaining Schur diagonal falls below `rel_tol * max_i A_ii`, the
/// remaining indices are reported as dropped.
#[derive(Clone, Debug)]
pub struct PivotedCholesky<T> {
    /// Original indices of the accepted pivots, in pivot order.
    pub kept: Vec<usize>,
    /// Original indices that were truncated, ascending.
    pub dropped: Vec<usize>,
    // l[r][t]: row r in pivot order, column t.
    l: DenseMatrix<T>,
}

impl<T: Real> PivotedCholesky<T> {
    pub fn factor(a: &DenseMatrix<T>, rel_tol: T) -> Self {
        let n = a.rows();
        assert_eq!(n, a.cols());
        let mut d: Vec<T> = (0..n).map(|i| a[(i, i)]).collect();
        let dmax = d.iter().fold(T::zero(), |m, &v| m.max(v));
        let mut remaining: Vec<bool> = vec![true; n];
        // work[i][t]: entry of the factor for original row i at step t.
        let mut work = DenseMatrix::zeros(n, n);
        let mut kept = Vec::new();
        for k in 0..n {
            let mut best: Option<usize> = None;
            for i in 0..n {
                if remaining[i] && best.is_none_or(|b| d[i] > d[b]) {
                    best = Some(i);
                }
            }
            let Some(p) = best else { break };
            if !(d[p] > rel_tol * dmax) || dmax <= T::zero() {
                break;
            }
            let piv = d[p].sqrt();
            remaining[p] = false;
            let wp: Vec<T> = work.row(p)[..k].to_vec();
            work[(p, k)] = piv;
            for i in 0..n {
                if !remaining[i] {
                    continue;
                }
                let s = a[(i, p)] - dot(&work.row(i)[..k], &wp);
                let lik = s / piv;
                work[(i, k)] = lik;
                d[i] -= lik * lik;
            }
            kept.push(p);
        }
        let r = kept.len();
        let l = DenseMatrix::from_fn(r, r, |i, j| if j <= i { work[(kept[i], j)] } else { T::zero() });
        let dropped = (0..n).filter(|&i| remaining[i]).collect();
        PivotedCholesky { kept, dropped, l }
    }

    pub fn rank(&self) -> usize {
        self.kept.len()
    }

    /// Solves the kept subsystem `A[kept, kept] x = b[kept]` and returns a
    /// full-length vector with zeros at dropped indices.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let r = self.rank();
        let mut y: Vec<T> = self.kept.iter().map(|&i| b[i]).collect();
        for i in 0..r {
            let s = y[i] - dot(&self.l.row(i)[..i], &y[..i]);
            y[i] = s / self.l[(i, i)];
        }
        for i in (0..r).rev() {
            let xi = y[i] / self.l[(i, i)];
            y[i] = xi;
            let row = self.l.row(i);
            for k in 0..i {
                y[k] -= row[k] * xi;
            }
        }
        let mut x = vec![T::zero(); b.len()];
        for (k, &i) in self.kept.iter().enumerate() {
            x[i] = y[k];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves() {
        let a = DenseMatrix::<f64>::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let c = DenseCholesky::factor(&a).unwrap();
        let x = c.solve(&[3.0, 3.0]);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pivoted_cholesky_drops_dependent_column() {
        // Third column equals the sum of the first two.
        let v: [[f64; 3]; 3] = [[1.0, 0.0, 1.0], [0.0, 2.0, 2.0], [1.0, 1.0, 2.0]];
        let a = DenseMatrix::from_fn(3, 3, |i, j| (0..3).map(|k| v[k][i] * v[k][j]).sum());
        let p = PivotedCholesky::factor(&a, 1e-12);
        assert_eq!(p.rank(), 2);
        assert_eq!(p.dropped.len(), 1);
        let b = a.mul_vec(&[1.0, 1.0, 0.0]);
        let x = p.solve(&b);
        let r = a.mul_vec(&x);
        for i in 0..3 {
            assert!((r[i] - b[i]).abs() < 1e-12);
        }
    }
}
