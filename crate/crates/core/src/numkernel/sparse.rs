use crate::scalar::Real;

/// Compressed sparse row matrix. Symmetric operators store both triangles.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

/// `(row, col, value)` contribution.
pub type Triplet<T> = (usize, usize, T);

impl<T: Real> CsrMatrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    /// Builds the matrix by summing duplicate entries.
    ///
    /// Duplicates are summed in the order they appear in `triplets`, so the
    /// result depends only on that order and not on how it was produced.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[Triplet<T>]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        // Stable bucket by row, then stable sort each row by column.
        let mut order = vec![0usize; triplets.len()];
        let mut next = counts.clone();
        for (k, &(r, _, _)) in triplets.iter().enumerate() {
            order[next[r]] = k;
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for r in 0..nrows {
            let slice = &mut order[counts[r]..counts[r + 1]];
            slice.sort_by_key(|&k| triplets[k].1);
            let mut last = usize::MAX;
            for &k in slice.iter() {
                let (_, c, v) = triplets[k];
                if c == last {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = c;
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_dense(rows: &[Vec<T>]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        let mut t = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != T::zero() {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, m, &t)
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

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            let mut acc = T::zero();
            for (c, v) in cols.iter().zip(vals) {
                acc += *v * x[*c];
            }
            *yi = acc;
        }
    }

    /// `x^T M x`
    pub fn quad_form(&self, x: &[T]) -> T {
        let mut acc = T::zero();
        for (i, xi) in x.iter().enumerate() {
            let (cols, vals) = self.row(i);
            let mut row = T::zero();
            for (c, v) in cols.iter().zip(vals) {
                row += *v * x[*c];
            }
            acc += *xi * row;
        }
        acc
    }

    /// `x^T M y`
    pub fn bilinear(&self, x: &[T], y: &[T]) -> T {
        let mut acc = T::zero();
        for (i, xi) in x.iter().enumerate() {
            let (cols, vals) = self.row(i);
            let mut row = T::zero();
            for (c, v) in cols.iter().zip(vals) {
                row += *v * y[*c];
            }
            acc += *xi * row;
        }
        acc
    }

    pub fn transpose(&self) -> Self {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                t.push((*c, i, *v));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    /// Bitwise symmetry of values and pattern.
    pub fn is_symmetric_exact(&self) -> bool {
        self.nrows == self.ncols && *self == self.transpose()
    }

    /// Largest `|M_ij - M_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                worst = worst.max((*v - self.get(*c, i)).abs());
            }
        }
        worst
    }

    /// Sum of two matrices with the same shape.
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        let mut col_idx = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        row_ptr.push(0);
        for i in 0..self.nrows {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                if q == cb.len() || (p < ca.len() && ca[p] < cb[q]) {
                    col_idx.push(ca[p]);
                    values.push(va[p]);
                    p += 1;
                } else if p == ca.len() || cb[q] < ca[p] {
                    col_idx.push(cb[q]);
                    values.push(vb[q]);
                    q += 1;
                } else {
                    col_idx.push(ca[p]);
                    values.push(va[p] + vb[q]);
                    p += 1;
                    q += 1;
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Rows and columns at the sorted index list `idx`.
    pub fn principal_submatrix(&self, idx: &[usize]) -> Self {
        const NONE: usize = usize::MAX;
        let mut local = vec![NONE; self.ncols];
        for (k, &g) in idx.iter().enumerate() {
            local[g] = k;
        }
        let mut row_ptr = Vec::with_capacity(idx.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for &g in idx {
            let (cols, vals) = self.row(g);
            for (c, v) in cols.iter().zip(vals) {
                let l = local[*c];
                if l != NONE {
                    col_idx.push(l);
                    values.push(*v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        // Column order within a row is preserved because `idx` is sorted.
        CsrMatrix {
            nrows: idx.len(),
            ncols: idx.len(),
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut out = vec![vec![T::zero(); self.ncols]; self.nrows];
        for (i, row) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                row[*c] = *v;
            }
        }
        out
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

/// Gathers `x[idx]`.
pub fn gather<T: Copy>(x: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| x[i]).collect()
}

/// Scatters `local` into a zero vector of length `n` at `idx`.
pub fn scatter<T: Real>(local: &[T], idx: &[usize], n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n];
    for (v, &i) in local.iter().zip(idx) {
        out[i] = *v;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, 2.0), (0, 0, 3.0), (0, 1, 5.0)]);
        assert_eq!(m.get(0, 0), 4.0);
        assert_eq!(m.get(1, 0), 2.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.mul_vec(&[1.0, 1.0]), vec![9.0, 2.0]);
    }

    #[test]
    fn submatrix_and_add() {
        let dense = vec![
            vec![4.0, 1.0, 0.0],
            vec![1.0, 5.0, 2.0],
            vec![0.0, 2.0, 6.0],
        ];
        let m = CsrMatrix::from_dense(&dense);
        let s = m.principal_submatrix(&[0, 2]);
        assert_eq!(s.to_dense(), vec![vec![4.0, 0.0], vec![0.0, 6.0]]);
        let twice = m.add(&m);
        assert_eq!(twice, m.scaled(2.0));
        assert!(m.is_symmetric_exact());
        assert_eq!(m.quad_form(&[1.0, 1.0, 1.0]), 21.0);
    }
}
