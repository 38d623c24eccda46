#![allow(dead_code)]

use cemgmsdg::assembly::{assemble_forms, AssembledForms, BuiltinSource};
use cemgmsdg::grid::{build_grid, EdgeOrientation, GridConfig, GridModel};
use cemgmsdg::medium::{compute_kappa_tilde, generate_field, FieldKind, PartitionOfUnity, PermeabilityField};
use cemgmsdg::numkernel::CsrMatrix;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Setup {
    pub grid: GridModel<f64>,
    pub field: PermeabilityField<f64>,
    pub pou: PartitionOfUnity<f64>,
    pub forms: AssembledForms<f64>,
}

pub fn setup_with(n: usize, f: usize, field: Option<(FieldKind, f64, u64)>, source: BuiltinSource) -> Setup {
    let grid = build_grid(GridConfig::unit_square(n, f)).unwrap();
    let [nx, ny] = grid.fine_cells();
    let field = match field {
        None => PermeabilityField::constant(nx, ny, 1.0),
        Some((k, c, s)) => generate_field(k, c, s, &grid).unwrap(),
    };
    let pou = PartitionOfUnity::new(&grid);
    let kt = compute_kappa_tilde(&field, &pou);
    let forms = assemble_forms(&grid, &field, &kt, &source, 4.0).unwrap();
    Setup {
        grid,
        field,
        pou,
        forms,
    }
}

pub fn constant(n: usize, f: usize) -> Setup {
    setup_with(n, f, None, BuiltinSource::Constant(1.0))
}

pub fn contrast(n: usize, f: usize, seed: u64) -> Setup {
    setup_with(n, f, Some((FieldKind::Mixed, 1e4, seed)), BuiltinSource::RadialQuarter)
}

pub fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn dense(m: &CsrMatrix<f64>) -> DMatrix<f64> {
    let d = m.to_dense();
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| d[i][j])
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Values at every dof of a function given by global fine-node values
/// (zero on the boundary); duplicated nodes receive equal values, so the
/// result is continuous across coarse edges.
pub fn continuous(grid: &GridModel<f64>, g: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    (0..grid.total_dofs())
        .map(|d| {
            let [x, y] = grid.dofs.node_of(d);
            g(x, y)
        })
        .collect()
}

/// Value and gradient of the DG function `v` of block `b` at `(x, y)`.
pub fn eval_in_block(grid: &GridModel<f64>, v: &[f64], b: usize, x: f64, y: f64) -> (f64, [f64; 2]) {
    let [hx, hy] = grid.fine_cell;
    let [fx, fy] = grid.fine_per_coarse();
    let el = &grid.topology.elements[b];
    let (x0, y0) = (el.lo[0], el.lo[1]);
    let sx = ((x - x0) / hx).clamp(0.0, fx as f64);
    let sy = ((y - y0) / hy).clamp(0.0, fy as f64);
    let lx = (sx.floor() as usize).min(fx - 1);
    let ly = (sy.floor() as usize).min(fy - 1);
    let (xi, eta) = (sx - lx as f64, sy - ly as f64);
    let c = |a: usize, bb: usize| grid.dofs.local_dof(b, a, bb).map_or(0.0, |d| v[d]);
    let (c00, c10, c11, c01) = (c(lx, ly), c(lx + 1, ly), c(lx + 1, ly + 1), c(lx, ly + 1));
    let val = c00 * (1.0 - xi) * (1.0 - eta) + c10 * xi * (1.0 - eta) + c11 * xi * eta + c01 * (1.0 - xi) * eta;
    let gx = ((c10 - c00) * (1.0 - eta) + (c11 - c01) * eta) / hx;
    let gy = ((c01 - c00) * (1.0 - xi) + (c11 - c10) * xi) / hy;
    (val, [gx, gy])
}

/// Terms of `a_DG(v, v)` by direct quadrature of the defining integrals:
/// `(volume, flux, penalty)` with `a_DG(v, v) = volume - 2 flux + penalty`.
pub fn brute_force_dg(grid: &GridModel<f64>, field: &PermeabilityField<f64>, gamma: f64, v: &[f64]) -> (f64, f64, f64) {
    let g = 0.5 / 3f64.sqrt();
    let pts = [0.5 - g, 0.5 + g];
    let [hx, hy] = grid.fine_cell;
    let [nx, ny] = grid.fine_cells();
    let [fx, fy] = grid.fine_per_coarse();
    let mut volume = 0.0;
    for iy in 0..ny {
        for ix in 0..nx {
            let b = grid.element_of_fine_cell(ix, iy);
            for qx in pts {
                for qy in pts {
                    let (x, y) = ((ix as f64 + qx) * hx, (iy as f64 + qy) * hy);
                    let (_, gr) = eval_in_block(grid, v, b, x, y);
                    volume += 0.25 * hx * hy * field.at(ix, iy) * (gr[0] * gr[0] + gr[1] * gr[1]);
                }
            }
        }
    }
    let kmax = |b: usize| {
        let el = &grid.topology.elements[b];
        let mut m = 0.0f64;
        for ly in 0..fy {
            for lx in 0..fx {
                m = m.max(field.at(el.cx * fx + lx, el.cy * fy + ly));
            }
        }
        m
    };
    let h = (hx * hx + hy * hy).sqrt();
    let (mut flux, mut penalty) = (0.0, 0.0);
    for e in &grid.topology.edges {
        let vertical = e.orientation == EdgeOrientation::Vertical;
        let n = e.normal;
        let kbar = match e.minus {
            Some(m) => 0.5 * (kmax(e.plus) + kmax(m)),
            None => kmax(e.plus),
        };
        let (len, count) = if vertical { (hy, fy) } else { (hx, fx) };
        for k in 0..count {
            for q in pts {
                let t = (k as f64 + q) * len;
                let (x, y) = if vertical { (e.a[0], e.a[1] + t) } else { (e.a[0] + t, e.a[1]) };
                // Adjacent fine cell of a block at this edge point.
                let cell_kappa = |b: usize| {
                    let el = &grid.topology.elements[b];
                    let ix = (((x - el.lo[0]) / hx - 1e-9).max(0.0) as usize).min(fx - 1) + el.cx * fx;
                    let iy = (((y - el.lo[1]) / hy - 1e-9).max(0.0) as usize).min(fy - 1) + el.cy * fy;
                    field.at(ix, iy)
                };
                let (vp, gp) = eval_in_block(grid, v, e.plus, x, y);
                let fp = cell_kappa(e.plus) * (gp[0] * n[0] + gp[1] * n[1]);
                let (jump, avg) = match e.minus {
                    Some(m) => {
                        let (vm, gm) = eval_in_block(grid, v, m, x, y);
                        let fm = cell_kappa(m) * (gm[0] * n[0] + gm[1] * n[1]);
                        (vp - vm, 0.5 * (fp + fm))
                    }
                    None => (vp, fp),
                };
                flux += 0.5 * len * avg * jump;
                penalty += 0.5 * len * gamma / h * kbar * jump * jump;
            }
        }
    }
    (volume, flux, penalty)
}
