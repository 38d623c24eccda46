//! Auxiliary spectral space, CEM basis construction and the coarse
//! Galerkin solve.
//!
//! The relaxed CEM system on a region `R` is `(A_R + U U^T) x = b`, where
//! the columns of `U` are `S_k phi_j^(k)` for every block `k` in `R`. `A_R`
//! is factored once per region and the rank-`|R| L` term is handled with
//! the Woodbury identity, so the sparse factor never sees it.

use rayon::prelude::*;

use crate::assembly::AssembledForms;
use crate::error::{Error, Result, ResultExt};
use crate::grid::{GridModel, Region};
use crate::numkernel::{
    generalized_eig_sym, CsrMatrix, DenseCholesky, DenseMatrix, Ordering, PivotedCholesky, SparseCholesky,
};
use crate::scalar::{dot, norm2, Real};

/// Spectral data of every coarse block.
#[derive(Clone, Debug)]
pub struct AuxiliarySpace<T> {
    /// `L_i` per block.
    pub modes: Vec<usize>,
    /// `L_i + 1` smallest eigenvalues per block (only `L_i` when the block
    /// has no further eigenvalue).
    pub eigenvalues: Vec<Vec<T>>,
    /// `phi_j^(i)` in block-local dof order, `s_i`-orthonormal.
    pub vectors: Vec<Vec<Vec<T>>>,
    /// `S_i phi_j^(i)`, block-local.
    weighted: Vec<Vec<Vec<T>>>,
    /// `min_i lambda_{L_i+1}^(i)`; infinite when every block is exhausted.
    pub lambda: T,
    /// `max_i lambda_{L_i}^(i)`.
    pub lambda_max: T,
    block_offsets: Vec<usize>,
}

/// Solves `a_i phi = lambda s_i phi` on every block.
///
/// `modes` holds either one count used for all blocks or one per block. A
/// count equal to the block dimension is allowed and makes the auxiliary
/// space the whole block space.
pub fn build_auxiliary_space<T: Real>(
    forms: &AssembledForms<T>,
    grid: &GridModel<T>,
    modes: &[usize],
) -> Result<AuxiliarySpace<T>> {
    let nb = grid.n_elements();
    let modes: Vec<usize> = match modes.len() {
        1 => vec![modes[0]; nb],
        n if n == nb => modes.to_vec(),
        n => {
            return Err(Error::Config(format!(
                "expected 1 or {nb} auxiliary mode counts, got {n}"
            )))
        }
    };
    let per_block: Vec<Result<(Vec<T>, Vec<Vec<T>>, Vec<Vec<T>>)>> = (0..nb)
        .into_par_iter()
        .map(|i| {
            let l = modes[i];
            let dim = grid.dofs.block_len(i);
            if l == 0 || l > dim {
                return Err(Error::Config(format!(
                    "block {i}: {l} auxiliary modes requested, block has {dim} dofs"
                )));
            }
            let a = forms.block_stiffness(i);
            let s = forms.block_weighted_mass(i);
            let pairs = generalized_eig_sym(&a, &s, (l + 1).min(dim)).stage(|| format!("eigenproblem on block {i}"))?;
            let vectors: Vec<Vec<T>> = pairs.vectors[..l].to_vec();
            let weighted = vectors.iter().map(|v| s.mul_vec(v)).collect();
            Ok((pairs.values, vectors, weighted))
        })
        .collect();
    let mut eigenvalues = Vec::with_capacity(nb);
    let mut vectors = Vec::with_capacity(nb);
    let mut weighted = Vec::with_capacity(nb);
    for r in per_block {
        let (e, v, w) = r?;
        eigenvalues.push(e);
        vectors.push(v);
        weighted.push(w);
    }
    let mut lambda = T::infinity();
    let mut lambda_max = T::zero();
    for (i, e) in eigenvalues.iter().enumerate() {
        if let Some(&next) = e.get(modes[i]) {
            lambda = lambda.min(next);
        }
        lambda_max = lambda_max.max(e[modes[i] - 1]);
    }
    Ok(AuxiliarySpace {
        modes,
        eigenvalues,
        vectors,
        weighted,
        lambda,
        lambda_max,
        block_offsets: grid.dofs.block_offsets.clone(),
    })
}

impl<T: Real> AuxiliarySpace<T> {
    pub fn n_blocks(&self) -> usize {
        self.modes.len()
    }

    /// Total number of auxiliary functions.
    pub fn dim(&self) -> usize {
        self.modes.iter().sum()
    }

    /// `phi_j^(i)` extended by zero to all dofs.
    pub fn embedded(&self, i: usize, j: usize) -> Vec<T> {
        let mut v = vec![T::zero(); *self.block_offsets.last().unwrap()];
        v[self.block_offsets[i]..self.block_offsets[i + 1]].copy_from_slice(&self.vectors[i][j]);
        v
    }

    /// `S_i phi_j^(i)`, block-local.
    pub fn weighted(&self, i: usize, j: usize) -> &[T] {
        &self.weighted[i][j]
    }
}

/// Coefficients `s_i(v, phi_j^(i))` and `pi(v)` itself.
#[derive(Clone, Debug)]
pub struct Projection<T> {
    pub coefficients: Vec<Vec<T>>,
    pub values: Vec<T>,
}

pub fn project_pi<T: Real>(v: &[T], aux: &AuxiliarySpace<T>) -> Projection<T> {
    let off = &aux.block_offsets;
    assert_eq!(v.len(), *off.last().unwrap());
    let mut values = vec![T::zero(); v.len()];
    let mut coefficients = Vec::with_capacity(aux.n_blocks());
    for i in 0..aux.n_blocks() {
        let vb = &v[off[i]..off[i + 1]];
        let out = &mut values[off[i]..off[i + 1]];
        let c: Vec<T> = aux.weighted[i].iter().map(|w| dot(w, vb)).collect();
        for (cj, phi) in c.iter().zip(&aux.vectors[i]) {
            crate::scalar::axpy(*cj, phi, out);
        }
        coefficients.push(c);
    }
    Projection { coefficients, values }
}

/// `(A + U U^T)` restricted to a region, factored for repeated solves.
pub struct LocalSystem<T> {
    pub region: Region,
    /// Sorted global dofs of the region.
    pub dofs: Vec<usize>,
    a: CsrMatrix<T>,
    chol: SparseCholesky<T>,
    /// Columns of `U`: local offset of the block and `S_k phi_j^(k)`.
    columns: Vec<(usize, Vec<T>)>,
    /// `I + U^T A^{-1} U`.
    capacitance: DenseCholesky<T>,
}

impl<T: Real> LocalSystem<T> {
    pub fn new(
        region: Region,
        forms: &AssembledForms<T>,
        grid: &GridModel<T>,
        aux: &AuxiliarySpace<T>,
    ) -> Result<Self> {
        let dofs = grid.dofs.region_dofs(&region);
        if dofs.is_empty() {
            return Err(Error::EmptyRegion);
        }
        let a = forms.a.principal_submatrix(&dofs);
        let coords: Vec<[usize; 2]> = dofs.iter().map(|&d| grid.dofs.node_of(d)).collect();
        let chol = SparseCholesky::factor(&a, Ordering::NestedDissection(&coords))?;
        let mut columns = Vec::new();
        let mut offset = 0;
        for &b in &region.elements {
            for w in &aux.weighted[b] {
                columns.push((offset, w.clone()));
            }
            offset += grid.dofs.block_len(b);
        }
        let n = dofs.len();
        let r = columns.len();
        let mut u = vec![T::zero(); n * r];
        for (c, (off, w)) in columns.iter().enumerate() {
            for (k, wk) in w.iter().enumerate() {
                u[(off + k) * r + c] = *wk;
            }
        }
        let y = chol.forward_many(&u, r);
        drop(u);
        let mut cap = DenseMatrix::identity(r);
        for row in y.chunks_exact(r) {
            for p in 0..r {
                let yp = row[p];
                if yp == T::zero() {
                    continue;
                }
                for q in 0..=p {
                    cap[(p, q)] += yp * row[q];
                }
            }
        }
        for p in 0..r {
            for q in 0..p {
                cap[(q, p)] = cap[(p, q)];
            }
        }
        let capacitance = DenseCholesky::factor(&cap)?;
        Ok(LocalSystem {
            region,
            dofs,
            a,
            chol,
            columns,
            capacitance,
        })
    }

    pub fn dim(&self) -> usize {
        self.dofs.len()
    }

    /// Number of low-rank columns.
    pub fn rank(&self) -> usize {
        self.columns.len()
    }

    fn ut(&self, x: &[T]) -> Vec<T> {
        self.columns
            .iter()
            .map(|(off, w)| dot(w, &x[*off..*off + w.len()]))
            .collect()
    }

    fn add_u(&self, coef: &[T], scale: T, out: &mut [T]) {
        for ((off, w), c) in self.columns.iter().zip(coef) {
            crate::scalar::axpy(scale * *c, w, &mut out[*off..*off + w.len()]);
        }
    }

    /// `(A_R + U U^T) x`.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let mut y = self.a.mul_vec(x);
        let c = self.ut(x);
        self.add_u(&c, T::one(), &mut y);
        y
    }

    /// Rounding level of `(A_R + U U^T) x`, as in [`crate::numkernel::rounding_floor`].
    fn rounding_floor(&self, x: &[T]) -> T {
        let ax: Vec<T> = x.iter().map(|v| v.abs()).collect();
        let a = crate::numkernel::rounding_floor(&self.a, x);
        let c: Vec<T> = self
            .columns
            .iter()
            .map(|(off, w)| w.iter().zip(&ax[*off..]).map(|(p, q)| p.abs() * *q).sum())
            .collect();
        let mut low = vec![T::zero(); x.len()];
        for ((off, w), ck) in self.columns.iter().zip(&c) {
            for (o, p) in low[*off..*off + w.len()].iter_mut().zip(w) {
                *o += p.abs() * *ck;
            }
        }
        a + T::lit(64.0) * T::epsilon() * norm2(&low)
    }

    /// Column `c` of `U`, as a local vector.
    pub fn column(&self, c: usize) -> Vec<T> {
        let mut v = vec![T::zero(); self.dim()];
        self.add_u(
            &(0..self.rank()).map(|k| if k == c { T::one() } else { T::zero() }).collect::<Vec<_>>(),
            T::one(),
            &mut v,
        );
        v
    }

    /// Index of the column holding `S_k phi_j^(k)` for block `k`.
    pub fn column_of(&self, aux: &AuxiliarySpace<T>, block: usize, mode: usize) -> Option<usize> {
        let pos = self.region.elements.binary_search(&block).ok()?;
        let before: usize = self.region.elements[..pos].iter().map(|&b| aux.modes[b]).sum();
        Some(before + mode)
    }

    fn solve_once(&self, b: &[T]) -> Vec<T> {
        let z = self.chol.solve(b);
        let w = self.capacitance.solve(&self.ut(&z));
        let mut rhs = b.to_vec();
        self.add_u(&w, -T::one(), &mut rhs);
        self.chol.solve(&rhs)
    }

    /// Solves to relative residual `tol` with iterative refinement.
    pub fn solve(&self, b: &[T], tol: T) -> Result<Vec<T>> {
        let bn = norm2(b);
        let mut x = self.solve_once(b);
        if bn == T::zero() {
            return Ok(x);
        }
        let mut rel = T::infinity();
        for _ in 0..4 {
            let ax = self.apply(&x);
            let r: Vec<T> = b.iter().zip(&ax).map(|(bi, ai)| *bi - *ai).collect();
            let rn = norm2(&r);
            rel = rn / bn;
            if rel <= tol || rn <= self.rounding_floor(&x) {
                return Ok(x);
            }
            let dx = self.solve_once(&r);
            crate::scalar::axpy(T::one(), &dx, &mut x);
        }
        Err(Error::Solver(format!(
            "local CEM system: relative residual {:e} above {:e}",
            rel.as_f64(),
            tol.as_f64()
        )))
    }
}

/// Where a basis function came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisOrigin {
    Offline { block: usize, mode: usize, layers: usize },
    Online { node: usize, iteration: usize, layers: usize },
    Global { block: usize, mode: usize },
    /// Supplied directly by the caller.
    Given { index: usize },
}

/// A basis function stored over its support only.
#[derive(Clone, Debug)]
pub struct MultiscaleBasis<T> {
    pub origin: BasisOrigin,
    pub support: Region,
    /// Values at the support's dofs, in ascending dof order.
    pub values: Vec<T>,
}

impl<T: Real> MultiscaleBasis<T> {
    /// Keeps the entries of a full vector that lie in `support`.
    pub fn from_global(origin: BasisOrigin, support: Region, v: &[T], grid: &GridModel<T>) -> Self {
        let dofs = grid.dofs.region_dofs(&support);
        MultiscaleBasis {
            origin,
            values: crate::numkernel::gather(v, &dofs),
            support,
        }
    }

    pub fn to_global(&self, grid: &GridModel<T>) -> Vec<T> {
        let mut v = vec![T::zero(); grid.total_dofs()];
        self.add_to(T::one(), &mut v, grid);
        v
    }

    /// `out += c * self`.
    pub fn add_to(&self, c: T, out: &mut [T], grid: &GridModel<T>) {
        let mut k = 0;
        for &b in &self.support.elements {
            let r = grid.dofs.block_range(b);
            let n = r.len();
            crate::scalar::axpy(c, &self.values[k..k + n], &mut out[r]);
            k += n;
        }
    }
}

/// `psi_j^(i)` on `K_{i,m}` from an already factored local system.
fn cem_basis_from_system<T: Real>(
    sys: &LocalSystem<T>,
    aux: &AuxiliarySpace<T>,
    i: usize,
    j: usize,
    origin: BasisOrigin,
    tol: T,
) -> Result<MultiscaleBasis<T>> {
    let col = sys.column_of(aux, i, j).expect("block lies in its own patch");
    let b = sys.column(col);
    let x = sys.solve(&b, tol)?;
    Ok(MultiscaleBasis {
        origin,
        support: sys.region.clone(),
        values: x,
    })
}

/// Localized CEM basis `psi_{j,ms}^(i)` on `K_{i,m}`.
pub fn build_cem_basis<T: Real>(
    i: usize,
    j: usize,
    m: usize,
    forms: &AssembledForms<T>,
    grid: &GridModel<T>,
    aux: &AuxiliarySpace<T>,
    tol: T,
) -> Result<MultiscaleBasis<T>> {
    check_mode(aux, i, j)?;
    let region = grid.oversample_block(i, m)?;
    let sys = LocalSystem::new(region, forms, grid, aux).stage(|| format!("CEM system of block {i}"))?;
    cem_basis_from_system(&sys, aux, i, j, BasisOrigin::Offline { block: i, mode: j, layers: m }, tol)
}

/// Global CEM basis `psi_j^(i)`, posed on the whole domain.
pub fn build_global_basis<T: Real>(
    i: usize,
    j: usize,
    forms: &AssembledForms<T>,
    grid: &GridModel<T>,
    aux: &AuxiliarySpace<T>,
    tol: T,
) -> Result<MultiscaleBasis<T>> {
    check_mode(aux, i, j)?;
    let sys = LocalSystem::new(grid.domain_region(), forms, grid, aux).stage(|| "global CEM system".into())?;
    cem_basis_from_system(&sys, aux, i, j, BasisOrigin::Global { block: i, mode: j }, tol)
}

fn check_mode<T: Real>(aux: &AuxiliarySpace<T>, i: usize, j: usize) -> Result<()> {
    if i >= aux.n_blocks() {
        return Err(Error::IndexOutOfRange {
            what: "coarse element",
            index: i,
            limit: aux.n_blocks(),
        });
    }
    if j >= aux.modes[i] {
        return Err(Error::IndexOutOfRange {
            what: "auxiliary mode",
            index: j,
            limit: aux.modes[i],
        });
    }
    Ok(())
}

/// All offline bases, ordered by block then mode. One local factorization
/// per block serves all of its modes.
pub fn build_offline_bases<T: Real>(
    m: usize,
    forms: &AssembledForms<T>,
    grid: &GridModel<T>,
    aux: &AuxiliarySpace<T>,
    tol: T,
) -> Result<Vec<MultiscaleBasis<T>>> {
    let per_block: Vec<Result<Vec<MultiscaleBasis<T>>>> = (0..grid.n_elements())
        .into_par_iter()
        .map(|i| {
            let region = grid.oversample_block(i, m)?;
            let sys = LocalSystem::new(region, forms, grid, aux).stage(|| format!("CEM system of block {i}"))?;
            (0..aux.modes[i])
                .map(|j| {
                    cem_basis_from_system(&sys, aux, i, j, BasisOrigin::Offline { block: i, mode: j, layers: m }, tol)
                        .stage(|| format!("offline basis ({i}, {j})"))
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for r in per_block {
        out.extend(r?);
    }
    Ok(out)
}

/// Changes to a [`MultiscaleSpace`].
#[derive(Clone, Debug, PartialEq)]
pub enum SpaceEvent {
    Added { basis: usize, iteration: usize, origin: BasisOrigin },
    Dropped { basis: usize, iteration: usize, origin: BasisOrigin, reason: String },
}

/// Relative pivot below which a basis is dropped from the coarse system.
pub const PIVOT_DROP: f64 = 1e-12;

/// An ordered set of basis functions with the Galerkin matrix
/// `G = R^T A R` and load `R^T F` kept up to date as bases are added.
#[derive(Clone, Debug)]
pub struct MultiscaleSpace<T> {
    bases: Vec<MultiscaleBasis<T>>,
    active: Vec<bool>,
    gram: Vec<Vec<T>>,
    rhs: Vec<T>,
    /// Per coarse block, `(basis, offset into its values)`.
    block_index: Vec<Vec<(usize, usize)>>,
    pub log: Vec<SpaceEvent>,
}

/// Coarse solution on a [`MultiscaleSpace`].
#[derive(Clone, Debug)]
pub struct CoarseSolution<T> {
    /// Coefficient per stored basis (zero for inactive ones).
    pub coefficients: Vec<T>,
    /// `u = R c` at the fine dofs.
    pub u: Vec<T>,
    /// Bases dropped during this solve.
    pub dropped: Vec<usize>,
}

impl<T: Real> MultiscaleSpace<T> {
    pub fn new(grid: &GridModel<T>) -> Self {
        MultiscaleSpace {
            bases: Vec::new(),
            active: Vec::new(),
            gram: Vec::new(),
            rhs: Vec::new(),
            block_index: vec![Vec::new(); grid.n_elements()],
            log: Vec::new(),
        }
    }

    /// Number of active basis functions.
    pub fn dim(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn bases(&self) -> &[MultiscaleBasis<T>] {
        &self.bases
    }

    pub fn is_active(&self, k: usize) -> bool {
        self.active[k]
    }

    /// Appends bases and extends the Galerkin matrix. Returns how many were
    /// kept; zero-energy bases are dropped on arrival.
    pub fn extend(
        &mut self,
        new: Vec<MultiscaleBasis<T>>,
        forms: &AssembledForms<T>,
        grid: &GridModel<T>,
        iteration: usize,
    ) -> usize {
        let first = self.bases.len();
        for (k, b) in new.into_iter().enumerate() {
            let id = first + k;
            let mut off = 0;
            for &e in &b.support.elements {
                self.block_index[e].push((id, off));
                off += grid.dofs.block_len(e);
            }
            self.log.push(SpaceEvent::Added {
                basis: id,
                iteration,
                origin: b.origin,
            });
            self.bases.push(b);
            self.active.push(true);
        }
        let last = self.bases.len();
        let rows: Vec<(Vec<T>, T)> = (first..last)
            .into_par_iter()
            .map(|id| self.gram_row(id, forms, grid))
            .collect();
        let mut kept = 0;
        for (id, (row, f)) in (first..last).zip(rows) {
            for (k, v) in row.iter().enumerate().take(first) {
                self.gram[k].push(*v);
            }
            let mut full = row;
            full.resize(last, T::zero());
            self.gram.push(full);
            self.rhs.push(f);
            if !(self.gram[id][id] > T::zero()) {
                self.drop_basis(id, iteration, "zero energy norm".into());
            } else {
                kept += 1;
            }
        }
        // Columns of earlier new rows need entries for later new bases.
        for id in first..last {
            for k in id + 1..last {
                let v = self.gram[k][id];
                self.gram[id][k] = v;
            }
        }
        kept
    }

    /// Row `id` of `G` over bases `0..=id`, and `F^T psi_id`.
    fn gram_row(&self, id: usize, forms: &AssembledForms<T>, grid: &GridModel<T>) -> (Vec<T>, T) {
        let basis = &self.bases[id];
        let nb = grid.n_elements();
        let mut where_: Vec<usize> = vec![usize::MAX; nb];
        let mut off = 0;
        for &e in &basis.support.elements {
            where_[e] = off;
            off += grid.dofs.block_len(e);
        }
        let value_at = |d: usize| -> T {
            let b = grid.dofs.block_of(d);
            let o = where_[b];
            if o == usize::MAX {
                T::zero()
            } else {
                basis.values[o + d - grid.dofs.block_offsets[b]]
            }
        };
        let mut row = vec![T::zero(); id + 1];
        let mut ay = Vec::new();
        for e in grid.dilate_elements(&basis.support.elements) {
            let r = grid.dofs.block_range(e);
            ay.clear();
            for d in r.clone() {
                let (cols, vals) = forms.a.row(d);
                let mut s = T::zero();
                for (c, v) in cols.iter().zip(vals) {
                    s += *v * value_at(*c);
                }
                ay.push(s);
            }
            for &(k, o) in &self.block_index[e] {
                if k <= id {
                    row[k] += dot(&ay, &self.bases[k].values[o..o + ay.len()]);
                }
            }
        }
        let mut f = T::zero();
        let mut k = 0;
        for &e in &basis.support.elements {
            let r = grid.dofs.block_range(e);
            let n = r.len();
            f += dot(&forms.load[r], &basis.values[k..k + n]);
            k += n;
        }
        (row, f)
    }

    fn drop_basis(&mut self, id: usize, iteration: usize, reason: String) {
        self.active[id] = false;
        log::warn!("dropping basis {id} ({:?}): {reason}", self.bases[id].origin);
        self.log.push(SpaceEvent::Dropped {
            basis: id,
            iteration,
            origin: self.bases[id].origin,
            reason,
        });
    }

    /// `R c` over all stored bases.
    pub fn prolongate(&self, c: &[T], grid: &GridModel<T>) -> Vec<T> {
        let mut u = vec![T::zero(); grid.total_dofs()];
        for (b, ck) in self.bases.iter().zip(c) {
            if *ck != T::zero() {
                b.add_to(*ck, &mut u, grid);
            }
        }
        u
    }

    /// `R^T r` over the active bases, in storage order.
    pub fn restrict(&self, r: &[T], grid: &GridModel<T>) -> Vec<T> {
        self.bases
            .iter()
            .zip(&self.active)
            .filter(|(_, a)| **a)
            .map(|(b, _)| {
                let mut s = T::zero();
                let mut k = 0;
                for &e in &b.support.elements {
                    let rg = grid.dofs.block_range(e);
                    let n = rg.len();
                    s += dot(&r[rg], &b.values[k..k + n]);
                    k += n;
                }
                s
            })
            .collect()
    }

    /// Active part of the Galerkin matrix.
    pub fn galerkin_matrix(&self) -> DenseMatrix<T> {
        let idx: Vec<usize> = (0..self.bases.len()).filter(|&k| self.active[k]).collect();
        DenseMatrix::from_fn(idx.len(), idx.len(), |p, q| self.gram[idx[p]][idx[q]])
    }

    /// Solves `R^T A R c = R^T F` with Jacobi scaling and pivoted Cholesky.
    /// Bases whose scaled pivot falls below [`PIVOT_DROP`] are removed from
    /// the space and logged.
    pub fn solve(&mut self, grid: &GridModel<T>, iteration: usize) -> Result<CoarseSolution<T>> {
        let idx: Vec<usize> = (0..self.bases.len()).filter(|&k| self.active[k]).collect();
        if idx.is_empty() {
            return Err(Error::EmptySpace);
        }
        let scale: Vec<T> = idx.iter().map(|&k| T::one() / self.gram[k][k].sqrt()).collect();
        let g = DenseMatrix::from_fn(idx.len(), idx.len(), |p, q| {
            scale[p] * self.gram[idx[p]][idx[q]] * scale[q]
        });
        let piv = PivotedCholesky::factor(&g, T::lit(PIVOT_DROP));
        if piv.rank() == 0 {
            return Err(Error::EmptySpace);
        }
        let b: Vec<T> = idx.iter().zip(&scale).map(|(&k, s)| self.rhs[k] * *s).collect();
        let y = piv.solve(&b);
        let mut coefficients = vec![T::zero(); self.bases.len()];
        for (p, &k) in idx.iter().enumerate() {
            coefficients[k] = y[p] * scale[p];
        }
        let dropped: Vec<usize> = piv.dropped.iter().map(|&p| idx[p]).collect();
        for &k in &dropped {
            self.drop_basis(k, iteration, "near-dependent in the coarse Galerkin matrix".into());
        }
        let u = self.prolongate(&coefficients, grid);
        Ok(CoarseSolution {
            coefficients,
            u,
            dropped,
        })
    }
}

/// Galerkin solve on `space`; see [`MultiscaleSpace::solve`].
pub fn solve_coarse<T: Real>(
    space: &mut MultiscaleSpace<T>,
    grid: &GridModel<T>,
    iteration: usize,
) -> Result<CoarseSolution<T>> {
    space.solve(grid, iteration)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_forms, BuiltinSource};
    use crate::grid::{build_grid, GridConfig};
    use crate::medium::{compute_kappa_tilde, PartitionOfUnity, PermeabilityField};

    fn setup(n: usize, f: usize) -> (GridModel<f64>, AssembledForms<f64>) {
        let grid = build_grid(GridConfig::unit_square(n, f)).unwrap();
        let [nx, ny] = grid.fine_cells();
        let field = PermeabilityField::constant(nx, ny, 1.0);
        let kt = compute_kappa_tilde(&field, &PartitionOfUnity::new(&grid));
        let forms = assemble_forms(&grid, &field, &kt, &BuiltinSource::Constant(1.0), 4.0).unwrap();
        (grid, forms)
    }

    #[test]
    fn interior_block_has_constant_ground_state() {
        let (grid, forms) = setup(3, 4);
        let aux = build_auxiliary_space(&forms, &grid, &[2]).unwrap();
        assert!(aux.eigenvalues[4][0].abs() < 1e-10);
        let v = &aux.vectors[4][0];
        for x in v {
            assert!((x - v[0]).abs() < 1e-10);
        }
        assert!(aux.lambda > 0.0);
    }

    #[test]
    fn projection_is_idempotent_and_fixes_eigenvectors() {
        let (grid, forms) = setup(3, 3);
        let aux = build_auxiliary_space(&forms, &grid, &[2]).unwrap();
        let phi = aux.embedded(2, 1);
        let p = project_pi(&phi, &aux);
        for (a, b) in p.values.iter().zip(&phi) {
            assert!((a - b).abs() < 1e-12);
        }
        let v: Vec<f64> = (0..grid.total_dofs()).map(|k| (k as f64 * 0.37).sin()).collect();
        let p1 = project_pi(&v, &aux).values;
        let p2 = project_pi(&p1, &aux).values;
        for (a, b) in p1.iter().zip(&p2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn woodbury_matches_explicit_system() {
        let (grid, forms) = setup(3, 3);
        let aux = build_auxiliary_space(&forms, &grid, &[2]).unwrap();
        let region = grid.oversample_block(4, 1).unwrap();
        let sys = LocalSystem::new(region, &forms, &grid, &aux).unwrap();
        let b: Vec<f64> = (0..sys.dim()).map(|k| ((k * 7 % 11) as f64) - 5.0).collect();
        let x = sys.solve(&b, 1e-12).unwrap();
        let r: Vec<f64> = sys.apply(&x).iter().zip(&b).map(|(a, b)| a - b).collect();
        assert!(norm2(&r) <= 1e-10 * norm2(&b));
    }

    #[test]
    fn zero_basis_is_dropped_on_arrival() {
        let (grid, forms) = setup(2, 2);
        let mut space = MultiscaleSpace::new(&grid);
        let zero = MultiscaleBasis::from_global(
            BasisOrigin::Given { index: 0 },
            grid.domain_region(),
            &vec![0.0; grid.total_dofs()],
            &grid,
        );
        assert_eq!(space.extend(vec![zero], &forms, &grid, 0), 0);
        assert!(matches!(space.solve(&grid, 0), Err(Error::EmptySpace)));
    }
}
