//! Smallest eigenpairs of dense symmetric(-definite) problems.
//!
//! The standard problem is reduced to tridiagonal form by Householder
//! reflections; the requested eigenvalues come from Sturm-sequence
//! bisection and the eigenvectors from inverse iteration with
//! reorthogonalization, back-transformed through the reflections.

use super::dense::{DenseCholesky, DenseMatrix};
use crate::error::Result;
use crate::scalar::{axpy, dot, norm2, Real};

/// Eigenvalues in ascending order with matching eigenvectors.
#[derive(Clone, Debug)]
pub struct EigenPairs<T> {
    pub values: Vec<T>,
    pub vectors: Vec<Vec<T>>,
}

impl<T: Real> EigenPairs<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

struct Tridiagonal<T> {
    diag: Vec<T>,
    off: Vec<T>,
    reflectors: Vec<(T, Vec<T>)>,
}

fn tridiagonalize<T: Real>(mut a: DenseMatrix<T>) -> Tridiagonal<T> {
    let n = a.rows();
    let mut reflectors = Vec::with_capacity(n.saturating_sub(2));
    let mut off = vec![T::zero(); n.saturating_sub(1)];
    let mut p = vec![T::zero(); n];
    for k in 0..n.saturating_sub(2) {
        let m = n - k - 1;
        let mut v: Vec<T> = (k + 1..n).map(|i| a[(i, k)]).collect();
        let sigma = norm2(&v);
        if sigma == T::zero() {
            off[k] = T::zero();
            reflectors.push((T::zero(), v));
            continue;
        }
        let alpha = if v[0] > T::zero() { -sigma } else { sigma };
        v[0] -= alpha;
        let vtv = dot(&v, &v);
        let beta = T::lit(2.0) / vtv;
        off[k] = alpha;
        // p = beta * A22 v
        for (ii, pi) in p[..m].iter_mut().enumerate() {
            let row = &a.row(k + 1 + ii)[k + 1..];
            *pi = beta * dot(row, &v);
        }
        let kfac = T::lit(0.5) * beta * dot(&p[..m], &v);
        for (pi, vi) in p[..m].iter_mut().zip(&v) {
            *pi -= kfac * *vi;
        }
        // A22 -= v w^T + w v^T
        for ii in 0..m {
            let (vi, wi) = (v[ii], p[ii]);
            let row = &mut a.row_mut(k + 1 + ii)[k + 1..];
            for ((r, vj), wj) in row.iter_mut().zip(&v).zip(&p[..m]) {
                *r -= vi * *wj + wi * *vj;
            }
        }
        reflectors.push((beta, v));
    }
    if n >= 2 {
        off[n - 2] = a[(n - 1, n - 2)];
    }
    let diag = (0..n).map(|i| a[(i, i)]).collect();
    Tridiagonal {
        diag,
        off,
        reflectors,
    }
}

impl<T: Real> Tridiagonal<T> {
    fn norm(&self) -> T {
        let n = self.diag.len();
        let mut m = T::zero();
        for i in 0..n {
            let mut s = self.diag[i].abs();
            if i > 0 {
                s += self.off[i - 1].abs();
            }
            if i + 1 < n {
                s += self.off[i].abs();
            }
            m = m.max(s);
        }
        m
    }

    /// Number of eigenvalues strictly below `x`.
    fn count_below(&self, x: T, pivmin: T) -> usize {
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < T::zero() {
            count += 1;
        }
        for i in 1..self.diag.len() {
            let e = self.off[i - 1];
            q = self.diag[i] - x - e * e / q;
            if q.abs() < pivmin {
                q = -pivmin;
            }
            if q < T::zero() {
                count += 1;
            }
        }
        count
    }

    /// The `k`-th smallest eigenvalue (0-based) by bisection.
    fn bisect(&self, k: usize, lo: T, hi: T, pivmin: T) -> T {
        let (mut lo, mut hi) = (lo, hi);
        let eps = T::epsilon();
        for _ in 0..200 {
            let mid = T::lit(0.5) * (lo + hi);
            if hi - lo <= T::lit(2.0) * eps * lo.abs().max(hi.abs()) + pivmin {
                break;
            }
            if self.count_below(mid, pivmin) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        T::lit(0.5) * (lo + hi)
    }

    /// Solves `(T - shift I) x = b` by Gaussian elimination with partial
    /// pivoting; tiny pivots are replaced by `tiny`.
    fn shifted_solve(&self, shift: T, b: &mut [T], tiny: T) {
        let n = self.diag.len();
        let mut u = vec![[T::zero(); 3]; n];
        let mut mult = vec![T::zero(); n];
        let mut swap = vec![false; n];
        let mut cur = [
            self.diag[0] - shift,
            if n > 1 { self.off[0] } else { T::zero() },
            T::zero(),
        ];
        for i in 0..n.saturating_sub(1) {
            let nxt = [
                self.off[i],
                self.diag[i + 1] - shift,
                if i + 2 < n { self.off[i + 1] } else { T::zero() },
            ];
            if cur[0].abs() >= nxt[0].abs() {
                if cur[0] == T::zero() {
                    cur[0] = tiny;
                }
                let l = nxt[0] / cur[0];
                u[i] = cur;
                mult[i] = l;
                cur = [nxt[1] - l * cur[1], nxt[2] - l * cur[2], T::zero()];
            } else {
                let l = cur[0] / nxt[0];
                u[i] = nxt;
                mult[i] = l;
                swap[i] = true;
                cur = [cur[1] - l * nxt[1], cur[2] - l * nxt[2], T::zero()];
            }
        }
        u[n - 1] = cur;
        for i in 0..n.saturating_sub(1) {
            if swap[i] {
                b.swap(i, i + 1);
            }
            let bi = b[i];
            b[i + 1] -= mult[i] * bi;
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            if i + 1 < n {
                s -= u[i][1] * b[i + 1];
            }
            if i + 2 < n {
                s -= u[i][2] * b[i + 2];
            }
            let mut piv = u[i][0];
            if piv.abs() < tiny {
                piv = if piv < T::zero() { -tiny } else { tiny };
            }
            b[i] = s / piv;
        }
    }

    fn back_transform(&self, z: &mut [T]) {
        for (k, (beta, v)) in self.reflectors.iter().enumerate().rev() {
            if *beta == T::zero() {
                continue;
            }
            let tail = &mut z[k + 1..];
            let s = *beta * dot(v, tail);
            axpy(-s, v, tail);
        }
    }
}

/// Deterministic pseudo-random start vector for inverse iteration.
fn start_vector<T: Real>(n: usize, salt: usize) -> Vec<T> {
    let mut state = 0x9E37_79B9_7F4A_7C15u64 ^ (salt as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    (0..n)
        .map(|_| {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            T::lit((z >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
        })
        .collect()
}

/// Applies the sign convention: the first entry with magnitude above
/// `1e-12` is positive.
pub(crate) fn fix_sign<T: Real>(v: &mut [T]) {
    let thresh = T::lit(1e-12);
    if let Some(first) = v.iter().find(|x| x.abs() > thresh) {
        if *first < T::zero() {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// The `count` smallest eigenpairs of a dense symmetric matrix, with
/// orthonormal eigenvectors.
pub fn symmetric_eig_smallest<T: Real>(a: &DenseMatrix<T>, count: usize) -> EigenPairs<T> {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let count = count.min(n);
    if n == 0 || count == 0 {
        return EigenPairs {
            values: Vec::new(),
            vectors: Vec::new(),
        };
    }
    let tri = tridiagonalize(a.clone());
    let tnorm = tri.norm().max(T::min_positive_value());
    let eps = T::epsilon();
    let pivmin = T::min_positive_value() * T::lit(1e3) * tnorm.max(T::one());
    let (lo, hi) = (-tnorm - eps * tnorm, tnorm + eps * tnorm);

    let mut values = Vec::with_capacity(count);
    for k in 0..count {
        values.push(tri.bisect(k, lo, hi, pivmin));
    }

    let tiny = eps * tnorm;
    let mut zs: Vec<Vec<T>> = Vec::with_capacity(count);
    for (k, &lambda) in values.iter().enumerate() {
        let mut z = start_vector::<T>(n, k);
        for _ in 0..4 {
            tri.shifted_solve(lambda, &mut z, tiny);
            for prev in &zs {
                let c = dot(prev, &z);
                axpy(-c, prev, &mut z);
            }
            let nz = norm2(&z);
            if nz == T::zero() || !nz.is_finite() {
                z = start_vector(n, k + 7919);
                continue;
            }
            z.iter_mut().for_each(|x| *x /= nz);
        }
        zs.push(z);
    }
    let vectors = zs
        .into_iter()
        .map(|mut z| {
            tri.back_transform(&mut z);
            let nz = norm2(&z);
            z.iter_mut().for_each(|x| *x /= nz);
            fix_sign(&mut z);
            z
        })
        .collect();
    EigenPairs { values, vectors }
}

/// The `count` smallest pairs of `A v = lambda B v` with `B` symmetric
/// positive definite; eigenvectors are `B`-orthonormal.
pub fn generalized_eig_sym<T: Real>(
    a: &DenseMatrix<T>,
    b: &DenseMatrix<T>,
    count: usize,
) -> Result<EigenPairs<T>> {
    let n = a.rows();
    assert_eq!((n, n), (a.cols(), b.rows()));
    assert_eq!(n, b.cols());
    let chol = DenseCholesky::factor(b)?;
    // C = L^{-1} A L^{-T}
    let w = chol.forward_rows(a);
    let mut c = chol.forward_rows(&w.transpose());
    c.symmetrize();
    let std = symmetric_eig_smallest(&c, count);
    let mut vectors = Vec::with_capacity(std.len());
    for z in std.vectors {
        let mut v = z;
        chol.backward(&mut v);
        // Restore exact B-normalization lost to rounding.
        let bv = b.mul_vec(&v);
        let nb = dot(&v, &bv).sqrt();
        v.iter_mut().for_each(|x| *x /= nb);
        fix_sign(&mut v);
        vectors.push(v);
    }
    Ok(EigenPairs {
        values: std.values,
        vectors,
    })
}
