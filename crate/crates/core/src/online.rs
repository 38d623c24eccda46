//! Residual-driven online enrichment.
//!
//! Each iteration computes the residual `r = A u - F`, its local dual norm
//! `delta_i` on every coarse neighborhood, selects the neighborhoods that
//! carry most of the squared residual, solves one CEM-type cell problem per
//! selected node and re-solves on the enlarged space.

use rayon::prelude::*;

use crate::assembly::AssembledForms;
use crate::error::{Error, Result, ResultExt};
use crate::grid::GridModel;
use crate::medium::PartitionOfUnity;
use crate::numkernel::{gather, Ordering, SparseCholesky};
use crate::offline::{AuxiliarySpace, BasisOrigin, LocalSystem, MultiscaleBasis, MultiscaleSpace};
use crate::scalar::{dot, norm2, Real};

/// `A u - F`.
pub fn global_residual<T: Real>(u: &[T], forms: &AssembledForms<T>) -> Vec<T> {
    let mut r = forms.a.mul_vec(u);
    for (ri, fi) in r.iter_mut().zip(&forms.load) {
        *ri -= *fi;
    }
    r
}

/// Riesz representative of the residual on `omega_i`.
#[derive(Clone, Debug)]
pub struct LocalRiesz<T> {
    /// Sorted global dofs of `omega_i`.
    pub dofs: Vec<usize>,
    /// `rho = A|_omega^{-1} r|_omega`, local.
    pub rho: Vec<T>,
    pub delta: T,
}

fn neighborhood_factor<T: Real>(
    i: usize,
    forms: &AssembledForms<T>,
    grid: &GridModel<T>,
) -> Result<(Vec<usize>, SparseCholesky<T>)> {
    let region = grid.oversample_neighborhood(i, 0)?;
    let dofs = grid.dofs.region_dofs(&region);
    if dofs.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let a = forms.a.principal_submatrix(&dofs);
    let coords: Vec<[usize; 2]> = dofs.iter().map(|&d| grid.dofs.node_of(d)).collect();
    let chol = SparseCholesky::factor(&a, Ordering::NestedDissection(&coords))
        .map_err(|e| Error::Config(format!("restricted operator on neighborhood of node {i} is not SPD: {e}")))?;
    Ok((dofs, chol))
}

/// `delta_i = sqrt(b^T A|_omega^{-1} b)` with `b = r|_omega`.
pub fn local_indicator<T: Real>(
    i: usize,
    residual: &[T],
    forms: &AssembledForms<T>,
    grid: &GridModel<T>,
) -> Result<T> {
    let (dofs, chol) = neighborhood_factor(i, forms, grid)?;
    let b = gather(residual, &dofs);
    Ok(norm2(&chol.forward_many(&b, 1)))
}

/// The maximizer of `|r(v)| / |v|_a` over functions supported in `omega_i`.
pub fn local_riesz<T: Real>(
    i: usize,
    residual: &[T],
    forms: &AssembledForms<T>,
    grid: &GridModel<T>,
) -> Result<LocalRiesz<T>> {
    let (dofs, chol) = neighborhood_factor(i, forms, grid)?;
    let b = gather(residual, &dofs);
    let rho = chol.solve(&b);
    let delta = dot(&b, &rho).max(T::zero()).sqrt();
    Ok(LocalRiesz { dofs, rho, delta })
}

/// `delta_i` for every coarse node.
pub fn indicators<T: Real>(residual: &[T], forms: &AssembledForms<T>, grid: &GridModel<T>) -> Result<Vec<T>> {
    (0..grid.n_nodes())
        .into_par_iter()
        .map(|i| local_indicator(i, residual, forms, grid))
        .collect()
}

/// Nodes chosen for enrichment.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    /// Prefix length from the selection rule, before the skip filter.
    pub p: usize,
    /// Selected node indices, ascending.
    pub nodes: Vec<usize>,
}

/// Nodes ranked by `delta` descending, ties by ascending index.
pub fn rank_nodes<T: Real>(deltas: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..deltas.len()).collect();
    order.sort_by(|&a, &b| deltas[b].partial_cmp(&deltas[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    order
}

/// Smallest `p >= 1` with `sum_{k>p} delta_(k)^2 < theta sum_k delta_k^2`;
/// `theta = 0` keeps everything. Nodes with `delta <= skip * max delta` are
/// then discarded, since their residual is too small to give a usable basis.
pub fn select_regions<T: Real>(deltas: &[T], theta: T, skip: T) -> Selection {
    let order = rank_nodes(deltas);
    let dmax = order.first().map_or(T::zero(), |&k| deltas[k]);
    if !(dmax > T::zero()) {
        return Selection { p: 0, nodes: Vec::new() };
    }
    let sq: Vec<T> = order.iter().map(|&k| deltas[k] * deltas[k]).collect();
    let total: T = sq.iter().copied().sum();
    let p = if theta > T::zero() {
        // tail[p] = sum of sq[p..]
        let mut tail = total;
        let mut p = order.len();
        for (k, s) in sq.iter().enumerate() {
            tail -= *s;
            if tail < theta * total {
                p = k + 1;
                break;
            }
        }
        p
    } else {
        order.len()
    };
    let mut nodes: Vec<usize> = order[..p].iter().copied().filter(|&k| deltas[k] > skip * dmax).collect();
    nodes.sort_unstable();
    Selection { p, nodes }
}

/// Online basis `beta^(i)` on `omega_{i,m}` for the residual `r = A u - F`.
///
/// The right-hand side is `chi_i r` with `chi_i` applied nodally.
pub fn build_online_basis<T: Real>(
    i: usize,
    residual: &[T],
    m: usize,
    iteration: usize,
    forms: &AssembledForms<T>,
    grid: &GridModel<T>,
    aux: &AuxiliarySpace<T>,
    pou: &PartitionOfUnity<T>,
    tol: T,
) -> Result<MultiscaleBasis<T>> {
    let region = grid.oversample_neighborhood(i, m)?;
    let sys = LocalSystem::new(region, forms, grid, aux)?;
    let b: Vec<T> = sys
        .dofs
        .iter()
        .map(|&d| {
            let [gx, gy] = grid.dofs.node_of(d);
            pou.value_at_node(i, gx, gy) * residual[d]
        })
        .collect();
    let values = sys.solve(&b, tol)?;
    Ok(MultiscaleBasis {
        origin: BasisOrigin::Online {
            node: i,
            iteration,
            layers: m,
        },
        support: sys.region,
        values,
    })
}

/// Parameters of the enrichment loop.
#[derive(Clone, Copy, Debug)]
pub struct AdaptiveConfig<T> {
    pub theta: T,
    pub n_iter: usize,
    /// Oversampling layers of the online cell problems.
    pub layers: usize,
    /// Relative indicator floor below which a node is never enriched.
    pub skip: T,
    /// Stop once every `delta_i` is below `1e-13 |F|`.
    pub early_exit: bool,
    pub tol: T,
}

impl<T: Real> Default for AdaptiveConfig<T> {
    fn default() -> Self {
        AdaptiveConfig {
            theta: T::zero(),
            n_iter: 3,
            layers: 3,
            skip: T::lit(1e-12),
            early_exit: false,
            tol: T::lit(1e-10),
        }
    }
}

/// One iterate of the enrichment loop.
#[derive(Clone, Debug)]
pub struct EnrichmentState<T> {
    pub k: usize,
    /// Active basis count of `V^(k)`.
    pub dofs: usize,
    /// Bases added to form `V^(k)` (before drops).
    pub p_selected: usize,
    /// Bases dropped while solving on `V^(k)`.
    pub dropped: Vec<usize>,
    pub u: Vec<T>,
    pub residual: Vec<T>,
    /// `delta_i^k`; empty for the final state unless indicators were needed.
    pub indicators: Vec<T>,
    /// Nodes enriched to form `V^(k+1)`.
    pub selected: Vec<usize>,
}

/// Runs the enrichment loop from an offline space. `space` must already
/// contain the offline bases; state 0 is its Galerkin solution.
pub fn run_adaptive<T: Real>(
    cfg: &AdaptiveConfig<T>,
    forms: &AssembledForms<T>,
    grid: &GridModel<T>,
    aux: &AuxiliarySpace<T>,
    pou: &PartitionOfUnity<T>,
    space: &mut MultiscaleSpace<T>,
) -> Result<Vec<EnrichmentState<T>>> {
    if !(cfg.theta >= T::zero() && cfg.theta < T::one()) {
        return Err(Error::Config(format!("theta must lie in [0, 1), got {}", cfg.theta)));
    }
    let floor = T::lit(1e-13) * norm2(&forms.load);
    let sol = space.solve(grid, 0).stage(|| "offline solve".into())?;
    let mut states = vec![EnrichmentState {
        k: 0,
        dofs: space.dim(),
        p_selected: 0,
        dropped: sol.dropped,
        residual: global_residual(&sol.u, forms),
        u: sol.u,
        indicators: Vec::new(),
        selected: Vec::new(),
    }];
    for k in 0..cfg.n_iter {
        let cur = states.last_mut().unwrap();
        let deltas = indicators(&cur.residual, forms, grid).stage(|| format!("indicators at iteration {k}"))?;
        let dmax = deltas.iter().fold(T::zero(), |m, d| m.max(*d));
        cur.indicators = deltas;
        if cfg.early_exit && dmax < floor {
            log::info!("iteration {k}: all indicators below {floor:e}, stopping");
            break;
        }
        let sel = select_regions(&cur.indicators, cfg.theta, cfg.skip);
        cur.selected = sel.nodes.clone();
        let residual = &cur.residual;
        let new: Vec<MultiscaleBasis<T>> = sel
            .nodes
            .par_iter()
            .map(|&i| {
                build_online_basis(i, residual, cfg.layers, k + 1, forms, grid, aux, pou, cfg.tol)
                    .stage(|| format!("online basis of node {i} at iteration {}", k + 1))
            })
            .collect::<Result<_>>()?;
        let added = new.len();
        space.extend(new, forms, grid, k + 1);
        let sol = space.solve(grid, k + 1).stage(|| format!("coarse solve at iteration {}", k + 1))?;
        log::info!(
            "iteration {}: {} nodes selected (p = {}), {} bases, {} dropped",
            k + 1,
            sel.nodes.len(),
            sel.p,
            space.dim(),
            sol.dropped.len()
        );
        states.push(EnrichmentState {
            k: k + 1,
            dofs: space.dim(),
            p_selected: added,
            dropped: sol.dropped,
            residual: global_residual(&sol.u, forms),
            u: sol.u,
            indicators: Vec::new(),
            selected: Vec::new(),
        });
    }
    Ok(states)
}
