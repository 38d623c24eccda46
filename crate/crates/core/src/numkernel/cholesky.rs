//! Up-looking sparse Cholesky factorization `P A P^T = L L^T`.

use super::ordering::Ordering;
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

const NONE: usize = usize::MAX;

#[derive(Clone, Debug)]
pub struct SparseCholesky<T> {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    // L in compressed columns; the diagonal is the first entry of each column.
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<T>,
}

impl<T: Real> SparseCholesky<T> {
    pub fn factor(a: &CsrMatrix<T>, ordering: Ordering<'_>) -> Result<Self> {
        assert_eq!(a.nrows(), a.ncols(), "Cholesky needs a square matrix");
        let n = a.nrows();
        let perm = ordering.permutation(a);
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        // Upper triangle of P A P^T by columns.
        let mut cp = vec![0usize; n + 1];
        for r in 0..n {
            let i = iperm[r];
            for &c in a.row(r).0 {
                let j = iperm[c];
                if i <= j {
                    cp[j + 1] += 1;
                }
            }
        }
        for j in 0..n {
            cp[j + 1] += cp[j];
        }
        let mut fill = cp.clone();
        let mut ci = vec![0usize; cp[n]];
        let mut cx = vec![T::zero(); cp[n]];
        for r in 0..n {
            let i = iperm[r];
            let (cols, vals) = a.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let j = iperm[c];
                if i <= j {
                    ci[fill[j]] = i;
                    cx[fill[j]] = v;
                    fill[j] += 1;
                }
            }
        }

        let parent = etree(n, &cp, &ci);

        // Symbolic pass: column counts of L.
        let mut stack = vec![0usize; n];
        let mut mark = vec![NONE; n];
        let mut counts = vec![1usize; n];
        for k in 0..n {
            let top = ereach(k, &cp, &ci, &parent, &mut stack, &mut mark);
            for &j in &stack[top..] {
                counts[j] += 1;
            }
        }
        let mut lp = vec![0usize; n + 1];
        for j in 0..n {
            lp[j + 1] = lp[j] + counts[j];
        }
        let nnz = lp[n];
        let mut li = vec![0usize; nnz];
        let mut lx = vec![T::zero(); nnz];
        let mut next: Vec<usize> = lp[..n].to_vec();

        // Numeric pass.
        mark.iter_mut().for_each(|m| *m = NONE);
        let mut x = vec![T::zero(); n];
        for k in 0..n {
            let top = ereach(k, &cp, &ci, &parent, &mut stack, &mut mark);
            for p in cp[k]..cp[k + 1] {
                x[ci[p]] += cx[p];
            }
            let mut d = x[k];
            x[k] = T::zero();
            for &j in &stack[top..] {
                let lkj = x[j] / lx[lp[j]];
                x[j] = T::zero();
                for p in lp[j] + 1..next[j] {
                    x[li[p]] -= lx[p] * lkj;
                }
                d -= lkj * lkj;
                let p = next[j];
                li[p] = k;
                lx[p] = lkj;
                next[j] += 1;
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    column: perm[k],
                    pivot: d.as_f64(),
                });
            }
            let p = next[k];
            li[p] = k;
            lx[p] = d.sqrt();
            next[k] += 1;
        }

        Ok(SparseCholesky {
            n,
            perm,
            lp,
            li,
            lx,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.lx.len()
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        assert_eq!(b.len(), self.n);
        let mut y: Vec<T> = self.perm.iter().map(|&o| b[o]).collect();
        let (lp, li, lx) = (&self.lp, &self.li, &self.lx);
        for j in 0..self.n {
            let yj = y[j] / lx[lp[j]];
            y[j] = yj;
            for p in lp[j] + 1..lp[j + 1] {
                y[li[p]] -= lx[p] * yj;
            }
        }
        for j in (0..self.n).rev() {
            let mut acc = y[j];
            for p in lp[j] + 1..lp[j + 1] {
                acc -= lx[p] * y[li[p]];
            }
            y[j] = acc / lx[lp[j]];
        }
        let mut x = vec![T::zero(); self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    /// `Y = L^{-1} P B` for `nrhs` right-hand sides stored row-major
    /// (`b[i * nrhs + r]`). Rows of the result are in pivot order, which is
    /// all that matters for Gram products `Y^T Y = B^T A^{-1} B`.
    pub fn forward_many(&self, b: &[T], nrhs: usize) -> Vec<T> {
        assert_eq!(b.len(), self.n * nrhs);
        let mut y = vec![T::zero(); b.len()];
        if nrhs == 0 {
            return y;
        }
        for (new, &old) in self.perm.iter().enumerate() {
            y[new * nrhs..(new + 1) * nrhs].copy_from_slice(&b[old * nrhs..(old + 1) * nrhs]);
        }
        let (lp, li, lx) = (&self.lp, &self.li, &self.lx);
        let mut row = vec![T::zero(); nrhs];
        for j in 0..self.n {
            let inv = T::one() / lx[lp[j]];
            let mut any = false;
            for (r, v) in row.iter_mut().zip(&mut y[j * nrhs..(j + 1) * nrhs]) {
                *v *= inv;
                *r = *v;
                any |= *r != T::zero();
            }
            if !any {
                continue;
            }
            for p in lp[j] + 1..lp[j + 1] {
                let l = lx[p];
                let i = li[p];
                for (t, r) in y[i * nrhs..(i + 1) * nrhs].iter_mut().zip(&row) {
                    *t -= l * *r;
                }
            }
        }
        y
    }

    /// Solves for `nrhs` right-hand sides stored row-major (`b[i * nrhs + r]`).
    pub fn solve_many(&self, b: &[T], nrhs: usize) -> Vec<T> {
        if nrhs == 0 {
            return Vec::new();
        }
        let mut y = self.forward_many(b, nrhs);
        let (lp, li, lx) = (&self.lp, &self.li, &self.lx);
        let mut row = vec![T::zero(); nrhs];
        for j in (0..self.n).rev() {
            row.copy_from_slice(&y[j * nrhs..(j + 1) * nrhs]);
            for p in lp[j] + 1..lp[j + 1] {
                let l = lx[p];
                let i = li[p];
                for (r, s) in row.iter_mut().zip(&y[i * nrhs..(i + 1) * nrhs]) {
                    *r -= l * *s;
                }
            }
            let inv = T::one() / lx[lp[j]];
            for (t, r) in y[j * nrhs..(j + 1) * nrhs].iter_mut().zip(&row) {
                *t = *r * inv;
            }
        }
        let mut x = vec![T::zero(); b.len()];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old * nrhs..(old + 1) * nrhs].copy_from_slice(&y[new * nrhs..(new + 1) * nrhs]);
        }
        x
    }
}

/// Elimination tree of the upper-triangular pattern `(cp, ci)`.
fn etree(n: usize, cp: &[usize], ci: &[usize]) -> Vec<usize> {
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for &start in &ci[cp[k]..cp[k + 1]] {
            let mut i = start;
            while i != NONE && i < k {
                let inext = ancestor[i];
                ancestor[i] = k;
                if inext == NONE {
                    parent[i] = k;
                }
                i = inext;
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of `L`, returned as `stack[top..]` in an
/// order valid for the up-looking update.
fn ereach(
    k: usize,
    cp: &[usize],
    ci: &[usize],
    parent: &[usize],
    stack: &mut [usize],
    mark: &mut [usize],
) -> usize {
    let n = parent.len();
    let mut top = n;
    mark[k] = k;
    for &start in &ci[cp[k]..cp[k + 1]] {
        let mut i = start;
        if i > k {
            continue;
        }
        let mut len = 0;
        while mark[i] != k {
            stack[len] = i;
            len += 1;
            mark[i] = k;
            i = parent[i];
        }
        while len > 0 {
            len -= 1;
            top -= 1;
            stack[top] = stack[len];
        }
    }
    top
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_spd_system() {
        let a = CsrMatrix::<f64>::from_dense(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let f = SparseCholesky::factor(&a, Ordering::Natural).unwrap();
        let x = f.solve(&[3.0, 3.0]);
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn indefinite_rejected() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(
            SparseCholesky::factor(&a, Ordering::Natural),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn many_rhs_matches_single() {
        let n = 30;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0 + i as f64 * 0.01));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
            if i + 7 < n {
                t.push((i, i + 7, -0.5));
                t.push((i + 7, i, -0.5));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t);
        let f = SparseCholesky::factor(&a, Ordering::ReverseCuthillMcKee).unwrap();
        let nrhs = 3;
        let b: Vec<f64> = (0..n * nrhs).map(|k| ((k * 37) % 11) as f64 - 5.0).collect();
        let x = f.solve_many(&b, nrhs);
        for r in 0..nrhs {
            let col: Vec<f64> = (0..n).map(|i| b[i * nrhs + r]).collect();
            let xs = f.solve(&col);
            for i in 0..n {
                assert!((xs[i] - x[i * nrhs + r]).abs() < 1e-13);
            }
        }
    }
}
