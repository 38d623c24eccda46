//! Interior penalty DG operators on the coarse-block-discontinuous
//! bilinear space.
//!
//! Volume integrals use 2x2 Gauss per fine cell and coarse-edge integrals
//! 2-point Gauss per fine edge, both exact for piecewise-constant
//! coefficients. Per-block triplet lists are produced independently and
//! merged in block order, so the operators do not depend on scheduling.

pub mod element;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{EdgeOrientation, GridModel, Region};
use crate::medium::{PermeabilityField, WeightField};
use crate::numkernel::{CsrMatrix, DenseMatrix, Triplet};
use crate::scalar::Real;

/// A right-hand side `f(x, y)`.
pub trait SourceFn<T>: Sync {
    fn eval(&self, p: [T; 2]) -> T;

    /// Point where `f` is singular, if any.
    fn singular_point(&self) -> Option<[T; 2]> {
        None
    }
}

/// Adapter turning a closure into a [`SourceFn`].
pub struct FnSource<F>(pub F);

impl<T, F: Fn([T; 2]) -> T + Sync> SourceFn<T> for FnSource<F> {
    fn eval(&self, p: [T; 2]) -> T {
        (self.0)(p)
    }
}

/// Built-in sources on the unit square.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BuiltinSource {
    Constant(f64),
    /// `2 pi^2 sin(pi x) sin(pi y)`, whose solution for `kappa = 1` is
    /// `sin(pi x) sin(pi y)`.
    Sin2d,
    /// `((x - 0.5)^2 + (y - 0.5)^2)^(-1/4)`.
    RadialQuarter,
}

impl<T: Real> SourceFn<T> for BuiltinSource {
    fn eval(&self, [x, y]: [T; 2]) -> T {
        match self {
            BuiltinSource::Constant(c) => T::lit(*c),
            BuiltinSource::Sin2d => {
                let pi = T::PI();
                T::lit(2.0) * pi * pi * (pi * x).sin() * (pi * y).sin()
            }
            BuiltinSource::RadialQuarter => {
                let h = T::lit(0.5);
                ((x - h) * (x - h) + (y - h) * (y - h)).powf(T::lit(-0.25))
            }
        }
    }

    fn singular_point(&self) -> Option<[T; 2]> {
        match self {
            BuiltinSource::RadialQuarter => Some([T::lit(0.5), T::lit(0.5)]),
            _ => None,
        }
    }
}

impl std::str::FromStr for BuiltinSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(BuiltinSource::Constant(1.0)),
            "sin2d" => Ok(BuiltinSource::Sin2d),
            "radial_quarter" => Ok(BuiltinSource::RadialQuarter),
            other => Err(Error::Config(format!("unknown source `{other}`"))),
        }
    }
}

impl std::fmt::Display for BuiltinSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BuiltinSource::Constant(_) => f.write_str("constant"),
            BuiltinSource::Sin2d => f.write_str("sin2d"),
            BuiltinSource::RadialQuarter => f.write_str("radial_quarter"),
        }
    }
}

/// Global and per-block operators of the discretization.
#[derive(Clone, Debug)]
pub struct AssembledForms<T> {
    /// `a_DG`: volume + consistency + symmetry + penalty terms.
    pub a: CsrMatrix<T>,
    /// `sum_K int_K kappa grad v . grad w`, block diagonal.
    pub volume: CsrMatrix<T>,
    /// `(gamma / h) sum_E int_E kbar [v][w]`.
    pub penalty: CsrMatrix<T>,
    /// `s(v, w) = sum_i int_{K_i} kappa_tilde v w`, block diagonal.
    pub s: CsrMatrix<T>,
    /// Unweighted `L2` mass.
    pub mass: CsrMatrix<T>,
    /// `int f v`.
    pub load: Vec<T>,
    pub gamma: T,
    /// `kbar` per coarse edge.
    pub kbar: Vec<T>,
    block_offsets: Vec<usize>,
}

impl<T: Real> AssembledForms<T> {
    pub fn dim(&self) -> usize {
        self.load.len()
    }

    fn block_dense(&self, m: &CsrMatrix<T>, block: usize) -> DenseMatrix<T> {
        let r = self.block_offsets[block]..self.block_offsets[block + 1];
        let n = r.len();
        let mut out = DenseMatrix::zeros(n, n);
        for (li, g) in r.clone().enumerate() {
            let (cols, vals) = m.row(g);
            for (c, v) in cols.iter().zip(vals) {
                if r.contains(c) {
                    out[(li, c - r.start)] = *v;
                }
            }
        }
        out
    }

    /// `a_i`: stiffness restricted to block `i`.
    pub fn block_stiffness(&self, block: usize) -> DenseMatrix<T> {
        self.block_dense(&self.volume, block)
    }

    /// `s_i`: weighted mass restricted to block `i`.
    pub fn block_weighted_mass(&self, block: usize) -> DenseMatrix<T> {
        self.block_dense(&self.s, block)
    }
}

/// Per-cell visitor over `(block, [dof or NONE; 4], global cell)`.
fn for_cells_in_block<T: Real>(
    grid: &GridModel<T>,
    block: usize,
    mut f: impl FnMut([Option<usize>; 4], [usize; 2]),
) {
    let [fx, fy] = grid.fine_per_coarse();
    let el = &grid.topology.elements[block];
    for ly in 0..fy {
        for lx in 0..fx {
            let dofs = [
                grid.dofs.local_dof(block, lx, ly),
                grid.dofs.local_dof(block, lx + 1, ly),
                grid.dofs.local_dof(block, lx + 1, ly + 1),
                grid.dofs.local_dof(block, lx, ly + 1),
            ];
            f(dofs, [el.cx * fx + lx, el.cy * fy + ly]);
        }
    }
}

fn push_local<T: Real>(out: &mut Vec<Triplet<T>>, dofs: &[Option<usize>], local: &[&[T]], scale: T) {
    for (a, da) in dofs.iter().enumerate() {
        let Some(da) = da else { continue };
        for (b, db) in dofs.iter().enumerate() {
            let Some(db) = db else { continue };
            out.push((*da, *db, scale * local[a][b]));
        }
    }
}

fn cellwise<T: Real>(
    grid: &GridModel<T>,
    local: &element::Local4<T>,
    coeff: impl Fn(usize, usize) -> T + Sync,
) -> CsrMatrix<T> {
    let rows: Vec<&[T]> = local.iter().map(|r| &r[..]).collect();
    let triplets: Vec<Triplet<T>> = (0..grid.n_elements())
        .into_par_iter()
        .map(|b| {
            let mut t = Vec::new();
            for_cells_in_block(grid, b, |dofs, [ix, iy]| {
                push_local(&mut t, &dofs, &rows, coeff(ix, iy));
            });
            t
        })
        .collect::<Vec<_>>()
        .concat();
    let n = grid.total_dofs();
    CsrMatrix::from_triplets(n, n, &triplets)
}

/// `sum_K int_K kappa grad v . grad w`.
pub fn assemble_volume<T: Real>(field: &PermeabilityField<T>, grid: &GridModel<T>) -> CsrMatrix<T> {
    let [hx, hy] = grid.fine_cell;
    cellwise(grid, &element::stiffness(hx, hy), |ix, iy| field.at(ix, iy))
}

/// `sum_i int_{K_i} kappa_tilde v w`.
pub fn assemble_weighted_mass<T: Real>(ktilde: &WeightField<T>, grid: &GridModel<T>) -> CsrMatrix<T> {
    let [hx, hy] = grid.fine_cell;
    cellwise(grid, &element::mass(hx, hy), |ix, iy| ktilde.at(ix, iy))
}

/// Unweighted `int v w`.
pub fn assemble_mass<T: Real>(grid: &GridModel<T>) -> CsrMatrix<T> {
    let [hx, hy] = grid.fine_cell;
    cellwise(grid, &element::mass(hx, hy), |_, _| T::one())
}

/// Largest `kappa` over each coarse block.
pub fn block_max_kappa<T: Real>(field: &PermeabilityField<T>, grid: &GridModel<T>) -> Vec<T> {
    let [fx, fy] = grid.fine_per_coarse();
    grid.topology
        .elements
        .iter()
        .map(|el| {
            let mut m = T::neg_infinity();
            for ly in 0..fy {
                for lx in 0..fx {
                    m = m.max(field.at(el.cx * fx + lx, el.cy * fy + ly));
                }
            }
            m
        })
        .collect()
}

/// `kbar` for every coarse edge.
pub fn edge_kbar<T: Real>(field: &PermeabilityField<T>, grid: &GridModel<T>) -> Vec<T> {
    let kmax = block_max_kappa(field, grid);
    grid.topology
        .edges
        .iter()
        .map(|e| match e.minus {
            Some(m) => T::lit(0.5) * (kmax[e.plus] + kmax[m]),
            None => kmax[e.plus],
        })
        .collect()
}

/// One side of a fine edge: block, local cell, fixed reference coordinate
/// and which reference axis runs along the edge.
struct Side {
    block: usize,
    cell: [usize; 2],
    /// Reference coordinate of the edge across it (0 or 1).
    across: usize,
    sign_jump: f64,
}

/// Edge terms of `a_DG` and the penalty part alone: `(edges, penalty)`.
///
/// The edge matrix contains the consistency, symmetry and penalty terms;
/// adding it to [`assemble_volume`] gives the full operator.
pub fn assemble_ipdg_edges<T: Real>(
    field: &PermeabilityField<T>,
    grid: &GridModel<T>,
    gamma: T,
) -> (CsrMatrix<T>, CsrMatrix<T>) {
    let kbar = edge_kbar(field, grid);
    let [fx, fy] = grid.fine_per_coarse();
    let [hx, hy] = grid.fine_cell;
    let h = grid.fine_diameter();
    let nx = grid.coarse_nx();
    let (pts, wts) = element::gauss2::<T>();

    let per_edge: Vec<(Vec<Triplet<T>>, Vec<Triplet<T>>)> = grid
        .topology
        .edges
        .par_iter()
        .enumerate()
        .map(|(ei, edge)| {
            let vertical = edge.orientation == EdgeOrientation::Vertical;
            let (n_fine, len) = if vertical { (fy, hy) } else { (fx, hx) };
            let sigma = gamma / h * kbar[ei];
            let avg = if edge.is_boundary() { T::one() } else { T::lit(0.5) };
            let normal = edge.normal;
            let mut full = Vec::new();
            let mut pen = Vec::new();
            for k in 0..n_fine {
                let mut sides = Vec::with_capacity(2);
                for (blk, sign) in [(Some(edge.plus), 1.0), (edge.minus, -1.0)] {
                    let Some(b) = blk else { continue };
                    let (bx, by) = (b % nx, b / nx);
                    let (cell, across) = if vertical {
                        if edge.line == bx {
                            ([0, k], 0)
                        } else {
                            ([fx - 1, k], 1)
                        }
                    } else if edge.line == by {
                        ([k, 0], 0)
                    } else {
                        ([k, fy - 1], 1)
                    };
                    sides.push(Side {
                        block: b,
                        cell,
                        across,
                        sign_jump: sign,
                    });
                }
                // Local functions across both sides: (dof, jump, avg flux) per Gauss point.
                let mut dofs: Vec<Option<usize>> = Vec::with_capacity(8);
                let mut jump = [[T::zero(); 8]; 2];
                let mut flux = [[T::zero(); 8]; 2];
                for side in &sides {
                    let el = &grid.topology.elements[side.block];
                    let [lx, ly] = side.cell;
                    let kappa = field.at(el.cx * fx + lx, el.cy * fy + ly);
                    let nodes = [(lx, ly), (lx + 1, ly), (lx + 1, ly + 1), (lx, ly + 1)];
                    let base = dofs.len();
                    for &(nx_, ny_) in &nodes {
                        dofs.push(grid.dofs.local_dof(side.block, nx_, ny_));
                    }
                    let fixed = T::from_count(side.across);
                    for (q, t) in pts.iter().enumerate() {
                        let (xi, eta) = if vertical { (fixed, *t) } else { (*t, fixed) };
                        let n = element::shape(xi, eta);
                        let g = element::shape_grad(xi, eta);
                        for a in 0..4 {
                            let dn = g[a][0] / hx * normal[0] + g[a][1] / hy * normal[1];
                            jump[q][base + a] = T::lit(side.sign_jump) * n[a];
                            flux[q][base + a] = avg * kappa * dn;
                        }
                    }
                }
                let m = dofs.len();
                for a in 0..m {
                    let Some(da) = dofs[a] else { continue };
                    for b in 0..m {
                        let Some(db) = dofs[b] else { continue };
                        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                        let mut vf = T::zero();
                        let mut vp = T::zero();
                        for q in 0..2 {
                            let w = wts[q] * len;
                            let p = sigma * jump[q][lo] * jump[q][hi];
                            vf += w * (p - flux[q][lo] * jump[q][hi] - flux[q][hi] * jump[q][lo]);
                            vp += w * p;
                        }
                        full.push((da, db, vf));
                        pen.push((da, db, vp));
                    }
                }
            }
            (full, pen)
        })
        .collect();
    let n = grid.total_dofs();
    let (full, pen): (Vec<_>, Vec<_>) = per_edge.into_iter().unzip();
    (
        CsrMatrix::from_triplets(n, n, &full.concat()),
        CsrMatrix::from_triplets(n, n, &pen.concat()),
    )
}

/// `F_j = int f v_j`, 2x2 Gauss per fine cell.
pub fn assemble_load<T: Real>(source: &dyn SourceFn<T>, grid: &GridModel<T>) -> Result<Vec<T>> {
    let [hx, hy] = grid.fine_cell;
    let (pts, wts) = element::gauss2::<T>();
    let singular = source.singular_point();
    let tiny = T::lit(1e-14);
    let parts: Vec<Result<Vec<(usize, T)>>> = (0..grid.n_elements())
        .into_par_iter()
        .map(|b| {
            let mut out = Vec::new();
            let mut err = None;
            for_cells_in_block(grid, b, |dofs, [ix, iy]| {
                if err.is_some() {
                    return;
                }
                let origin = grid.fine_cell_origin(ix, iy);
                let centre = [origin[0] + T::lit(0.5) * hx, origin[1] + T::lit(0.5) * hy];
                let mut local = [T::zero(); 4];
                for (qx, wx) in pts.iter().zip(&wts) {
                    for (qy, wy) in pts.iter().zip(&wts) {
                        let mut p = [origin[0] + *qx * hx, origin[1] + *qy * hy];
                        if let Some(s) = singular {
                            let d = ((p[0] - s[0]).powi(2) + (p[1] - s[1]).powi(2)).sqrt();
                            if d < tiny {
                                let step = [T::lit(0.1) * hx, T::lit(0.1) * hy];
                                for k in 0..2 {
                                    let dir = (centre[k] - p[k]).signum();
                                    p[k] += dir * step[k];
                                }
                            }
                        }
                        let fv = source.eval(p);
                        if !fv.is_finite() {
                            err = Some(Error::NonFiniteSource {
                                x: p[0].as_f64(),
                                y: p[1].as_f64(),
                            });
                            return;
                        }
                        let n = element::shape(*qx, *qy);
                        let w = *wx * *wy * hx * hy * fv;
                        for a in 0..4 {
                            local[a] += w * n[a];
                        }
                    }
                }
                for (a, d) in dofs.iter().enumerate() {
                    if let Some(d) = d {
                        out.push((*d, local[a]));
                    }
                }
            });
            match err {
                Some(e) => Err(e),
                None => Ok(out),
            }
        })
        .collect();
    let mut load = vec![T::zero(); grid.total_dofs()];
    for part in parts {
        for (d, v) in part? {
            load[d] += v;
        }
    }
    Ok(load)
}

/// Assembles every operator the solver needs.
pub fn assemble_forms<T: Real>(
    grid: &GridModel<T>,
    field: &PermeabilityField<T>,
    ktilde: &WeightField<T>,
    source: &dyn SourceFn<T>,
    gamma: T,
) -> Result<AssembledForms<T>> {
    if !(gamma > T::zero()) {
        return Err(Error::Config(format!("penalty gamma must be positive, got {gamma}")));
    }
    crate::medium::validate_field(field, grid)?;
    let volume = assemble_volume(field, grid);
    let (edges, penalty) = assemble_ipdg_edges(field, grid, gamma);
    let a = volume.add(&edges);
    Ok(AssembledForms {
        a,
        volume,
        penalty,
        s: assemble_weighted_mass(ktilde, grid),
        mass: assemble_mass(grid),
        load: assemble_load(source, grid)?,
        gamma,
        kbar: edge_kbar(field, grid),
        block_offsets: grid.dofs.block_offsets.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms<T> {
    pub a: T,
    pub dg: T,
    pub l2: T,
}

/// Energy, DG and `L2` norms of a coefficient vector.
pub fn norms<T: Real>(v: &[T], forms: &AssembledForms<T>) -> Result<Norms<T>> {
    let energy = forms.a.quad_form(v);
    let vv = crate::scalar::dot(v, v);
    let scale = forms.a.max_abs();
    if energy < -T::lit(1e-12) * scale * vv {
        return Err(Error::NonCoercive {
            energy: energy.as_f64(),
            norm_sq: vv.as_f64(),
        });
    }
    let dg = forms.volume.quad_form(v) + forms.penalty.quad_form(v);
    Ok(Norms {
        a: energy.max(T::zero()).sqrt(),
        dg: dg.max(T::zero()).sqrt(),
        l2: forms.mass.quad_form(v).max(T::zero()).sqrt(),
    })
}

/// `sqrt(v^T A v)` without the coercivity check.
pub fn energy_norm<T: Real>(v: &[T], forms: &AssembledForms<T>) -> T {
    forms.a.quad_form(v).max(T::zero()).sqrt()
}

/// Extension-by-zero restriction of an operator to a region's dofs.
pub fn restrict<T: Real>(m: &CsrMatrix<T>, grid: &GridModel<T>, region: &Region) -> Result<CsrMatrix<T>> {
    let dofs = grid.dofs.region_dofs(region);
    if dofs.is_empty() {
        return Err(Error::EmptyRegion);
    }
    Ok(m.principal_submatrix(&dofs))
}

pub fn restrict_vector<T: Real>(v: &[T], grid: &GridModel<T>, region: &Region) -> Result<Vec<T>> {
    let dofs = grid.dofs.region_dofs(region);
    if dofs.is_empty() {
        return Err(Error::EmptyRegion);
    }
    Ok(crate::numkernel::gather(v, &dofs))
}
