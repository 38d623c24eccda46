//! Linear algebra kernels: sparse SPD solves, dense symmetric-definite
//! eigenproblems and the small dense factorizations used by the coarse
//! Galerkin systems.
//!
//! Every kernel is a pure sequential function of its inputs, so results
//! are bit-identical regardless of how callers schedule them.

mod cholesky;
mod dense;
mod eigen;
mod ordering;
mod sparse;

pub use cholesky::SparseCholesky;
pub use dense::{DenseCholesky, DenseMatrix, PivotedCholesky};
pub use eigen::{generalized_eig_sym, symmetric_eig_smallest, EigenPairs};
pub use ordering::{nested_dissection, reverse_cuthill_mckee, Ordering};
pub use sparse::{gather, scatter, CsrMatrix, Triplet};

use crate::error::{Error, Result};
use crate::scalar::{norm2, Real};

/// Systems above this size are solved iteratively by default.
pub const DEFAULT_DIRECT_LIMIT: usize = 250_000;

/// A factored SPD operator with residual-checked solves.
pub struct SpdSolver<'a, T> {
    matrix: &'a CsrMatrix<T>,
    factor: SparseCholesky<T>,
}

impl<'a, T: Real> SpdSolver<'a, T> {
    pub fn new(matrix: &'a CsrMatrix<T>, ordering: Ordering<'_>) -> Result<Self> {
        let factor = SparseCholesky::factor(matrix, ordering)?;
        Ok(SpdSolver { matrix, factor })
    }

    pub fn factor(&self) -> &SparseCholesky<T> {
        &self.factor
    }

    /// Solves `M x = b` to relative residual `tol`, with up to three steps
    /// of iterative refinement. A residual at the rounding level of the
    /// product `M x` (see [`rounding_floor`]) is accepted as well.
    pub fn solve(&self, b: &[T], tol: T) -> Result<Vec<T>> {
        let bnorm = norm2(b);
        let mut x = self.factor.solve(b);
        if bnorm == T::zero() {
            return Ok(x);
        }
        let mut rel = T::infinity();
        for _ in 0..4 {
            let mut r = self.matrix.mul_vec(&x);
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri = *bi - *ri;
            }
            let rn = norm2(&r);
            rel = rn / bnorm;
            if rel <= tol || rn <= rounding_floor(self.matrix, &x) {
                return Ok(x);
            }
            let dx = self.factor.solve(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += *di;
            }
        }
        Err(Error::Solver(format!(
            "relative residual {:e} above tolerance {:e}",
            rel.as_f64(),
            tol.as_f64()
        )))
    }
}

/// `64 eps |(|M| |x|)|_2`: the size of the rounding error committed when
/// forming `M x` in floating point. No computed solution can be expected to
/// have a smaller residual, however ill-conditioned `M` is.
pub fn rounding_floor<T: Real>(m: &CsrMatrix<T>, x: &[T]) -> T {
    let mut acc = T::zero();
    for i in 0..m.nrows() {
        let (cols, vals) = m.row(i);
        let mut s = T::zero();
        for (c, v) in cols.iter().zip(vals) {
            s += v.abs() * x[*c].abs();
        }
        acc += s * s;
    }
    T::lit(64.0) * T::epsilon() * acc.sqrt()
}

/// Solves the SPD system `M x = b` to relative residual `tol`.
///
/// Uses a reverse Cuthill-McKee ordered sparse Cholesky factorization up to
/// [`DEFAULT_DIRECT_LIMIT`] unknowns and Jacobi-preconditioned conjugate
/// gradients beyond.
pub fn solve_spd<T: Real>(m: &CsrMatrix<T>, b: &[T], tol: T) -> Result<Vec<T>> {
    solve_spd_with(m, b, tol, Ordering::ReverseCuthillMcKee, DEFAULT_DIRECT_LIMIT)
}

pub fn solve_spd_with<T: Real>(
    m: &CsrMatrix<T>,
    b: &[T],
    tol: T,
    ordering: Ordering<'_>,
    direct_limit: usize,
) -> Result<Vec<T>> {
    assert_eq!(m.nrows(), b.len());
    if m.nrows() <= direct_limit {
        SpdSolver::new(m, ordering)?.solve(b, tol)
    } else {
        conjugate_gradient(m, b, tol, 20 * m.nrows().max(100))
    }
}

/// Jacobi-preconditioned conjugate gradients.
pub fn conjugate_gradient<T: Real>(
    m: &CsrMatrix<T>,
    b: &[T],
    tol: T,
    max_iter: usize,
) -> Result<Vec<T>> {
    let n = b.len();
    let diag = m.diagonal();
    if let Some(k) = diag.iter().position(|d| !(*d > T::zero())) {
        return Err(Error::NotPositiveDefinite {
            column: k,
            pivot: diag[k].as_f64(),
        });
    }
    let bnorm = norm2(b);
    let mut x = vec![T::zero(); n];
    if bnorm == T::zero() {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<T> = r.iter().zip(&diag).map(|(ri, di)| *ri / *di).collect();
    let mut p = z.clone();
    let mut rz = crate::scalar::dot(&r, &z);
    let mut q = vec![T::zero(); n];
    for _ in 0..max_iter {
        m.mul_vec_into(&p, &mut q);
        let pq = crate::scalar::dot(&p, &q);
        if !(pq > T::zero()) {
            return Err(Error::Solver(format!(
                "conjugate gradient breakdown (p^T M p = {:e})",
                pq.as_f64()
            )));
        }
        let alpha = rz / pq;
        crate::scalar::axpy(alpha, &p, &mut x);
        crate::scalar::axpy(-alpha, &q, &mut r);
        if norm2(&r) / bnorm <= tol {
            return Ok(x);
        }
        for ((zi, ri), di) in z.iter_mut().zip(&r).zip(&diag) {
            *zi = *ri / *di;
        }
        let rz_new = crate::scalar::dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = *zi + beta * *pi;
        }
    }
    Err(Error::Solver(format!(
        "conjugate gradient did not converge in {max_iter} iterations"
    )))
}
