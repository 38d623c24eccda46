//! Experiment orchestration: problem setup, fine reference solve, error
//! metrics, the enrichment study and its on-disk artifacts.

mod config;

pub use config::{ExperimentConfig, MediumSpec};

use std::fmt::Write as _;
use std::fs;

use crate::assembly::{assemble_forms, element, norms, AssembledForms, BuiltinSource};
use crate::error::{Error, Result, ResultExt};
use crate::grid::{build_grid, GridConfig, GridModel};
use crate::medium::{
    compute_kappa_tilde, generate_field, load_field, PartitionOfUnity, PermeabilityField, WeightField,
};
use crate::numkernel::{solve_spd_with, Ordering, DEFAULT_DIRECT_LIMIT};
use crate::offline::{
    build_auxiliary_space, build_cem_basis, build_global_basis, build_offline_bases, AuxiliarySpace,
    MultiscaleBasis, MultiscaleSpace, SpaceEvent,
};
use crate::online::{run_adaptive, AdaptiveConfig, EnrichmentState};

/// Grid, medium and assembled operators of one configuration.
pub struct Problem {
    pub grid: GridModel<f64>,
    pub field: PermeabilityField<f64>,
    pub pou: PartitionOfUnity<f64>,
    pub ktilde: WeightField<f64>,
    pub forms: AssembledForms<f64>,
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    let grid = build_grid(GridConfig::unit_square(cfg.coarse_n, cfg.fine_per_coarse)).stage(|| "grid".into())?;
    let [nx, ny] = grid.fine_cells();
    let field = match &cfg.medium {
        MediumSpec::Constant => Ok(PermeabilityField::constant(nx, ny, 1.0)),
        MediumSpec::Generated { kind, contrast, seed } => generate_field(*kind, *contrast, *seed, &grid),
        MediumSpec::File(p) => load_field(p, &grid),
    }
    .stage(|| "medium".into())?;
    let pou = PartitionOfUnity::new(&grid);
    let ktilde = compute_kappa_tilde(&field, &pou);
    let forms = assemble_forms(&grid, &field, &ktilde, &cfg.source, cfg.gamma).stage(|| "assembly".into())?;
    Ok(Problem {
        grid,
        field,
        pou,
        ktilde,
        forms,
    })
}

/// Fine IPDG solution `u_h` of `A u = F`.
pub fn solve_fine_reference(forms: &AssembledForms<f64>, grid: &GridModel<f64>, tol: f64) -> Result<Vec<f64>> {
    let coords: Vec<[usize; 2]> = (0..grid.total_dofs()).map(|d| grid.dofs.node_of(d)).collect();
    solve_spd_with(&forms.a, &forms.load, tol, Ordering::NestedDissection(&coords), DEFAULT_DIRECT_LIMIT)
}

/// Relative `L2` and energy errors of `u_ms` against `u_h`.
pub fn compute_errors(u_ms: &[f64], u_h: &[f64], forms: &AssembledForms<f64>) -> Result<(f64, f64)> {
    let reference = norms(u_h, forms)?;
    if !(reference.a > 0.0 && reference.l2 > 0.0) {
        return Err(Error::ZeroReference);
    }
    let diff: Vec<f64> = u_h.iter().zip(u_ms).map(|(a, b)| a - b).collect();
    let d = norms(&diff, forms)?;
    Ok((d.l2 / reference.l2, d.a / reference.a))
}

/// Largest `e_{k+1}^2 / e_k^2` over successive relative energy errors,
/// skipping steps whose predecessor is already below `1e-13` squared.
pub fn compute_rate(e_a: &[f64]) -> Result<f64> {
    let mut rate: Option<f64> = None;
    for w in e_a.windows(2) {
        let den = w[0] * w[0];
        if den < 1e-13 {
            continue;
        }
        let r = w[1] * w[1] / den;
        rate = Some(rate.map_or(r, |m: f64| m.max(r)));
    }
    rate.ok_or(Error::InsufficientStates)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResultRow {
    pub k: usize,
    pub dofs: usize,
    pub e_l2: f64,
    pub e_a: f64,
    pub p_selected: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
    /// `None` with fewer than two usable rows.
    pub rate: Option<f64>,
}

impl ResultsTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,dofs,e_l2,e_a,p_selected\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{:.8e},{:.8e},{}", r.k, r.dofs, r.e_l2, r.e_a, r.p_selected);
        }
        s
    }

    pub fn e_a(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.e_a).collect()
    }
}

/// Everything shared by enrichment runs on one configuration.
pub struct OfflineStage {
    pub problem: Problem,
    pub reference: Vec<f64>,
    pub aux: AuxiliarySpace<f64>,
    pub offline: Vec<MultiscaleBasis<f64>>,
}

pub fn build_offline_stage(cfg: &ExperimentConfig) -> Result<OfflineStage> {
    let problem = build_problem(cfg)?;
    let (grid, forms) = (&problem.grid, &problem.forms);
    log::info!("{} fine dofs, {} coarse blocks", grid.total_dofs(), grid.n_elements());
    let reference = solve_fine_reference(forms, grid, cfg.solver_tol).stage(|| "fine reference solve".into())?;
    let aux = build_auxiliary_space(forms, grid, &cfg.aux_modes).stage(|| "auxiliary space".into())?;
    log::info!("auxiliary space: {} functions, Lambda = {:e}", aux.dim(), aux.lambda);
    let offline =
        build_offline_bases(cfg.m_offline, forms, grid, &aux, cfg.solver_tol).stage(|| "offline bases".into())?;
    Ok(OfflineStage {
        problem,
        reference,
        aux,
        offline,
    })
}

/// Result of one enrichment run.
pub struct Study {
    pub table: ResultsTable,
    pub states: Vec<EnrichmentState<f64>>,
    pub space: MultiscaleSpace<f64>,
}

pub fn run_study(stage: &OfflineStage, cfg: &ExperimentConfig) -> Result<Study> {
    let (grid, forms) = (&stage.problem.grid, &stage.problem.forms);
    let mut space = MultiscaleSpace::new(grid);
    space.extend(stage.offline.clone(), forms, grid, 0);
    let acfg = AdaptiveConfig {
        theta: cfg.theta,
        n_iter: cfg.n_iter,
        layers: cfg.m_online,
        skip: cfg.skip_ratio,
        early_exit: cfg.early_exit,
        tol: cfg.solver_tol,
    };
    let states = run_adaptive(&acfg, forms, grid, &stage.aux, &stage.problem.pou, &mut space)?;
    let mut rows = Vec::with_capacity(states.len());
    for s in &states {
        let (e_l2, e_a) = compute_errors(&s.u, &stage.reference, forms).stage(|| format!("errors at k = {}", s.k))?;
        log::info!("k = {}: dofs = {}, e_l2 = {e_l2:.6e}, e_a = {e_a:.6e}", s.k, s.dofs);
        rows.push(ResultRow {
            k: s.k,
            dofs: s.dofs,
            e_l2,
            e_a,
            p_selected: s.p_selected,
        });
    }
    let e: Vec<f64> = rows.iter().map(|r| r.e_a).collect();
    let table = ResultsTable {
        rate: compute_rate(&e).ok(),
        rows,
    };
    Ok(Study { table, states, space })
}

/// Runs `f` on a pool with `threads` workers (0 = pool default).
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Full pipeline; writes `results.csv`, `config.txt`, `provenance.csv` and
/// the optional maps and basis dumps into `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultsTable> {
    with_threads(cfg.threads, || {
        let stage = build_offline_stage(cfg)?;
        let study = run_study(&stage, cfg)?;
        write_artifacts(cfg, &stage, &study).stage(|| format!("writing to {}", cfg.out_dir.display()))?;
        Ok(study.table)
    })?
}

fn node_grid_csv(values: &[f64], nx1: usize) -> String {
    let mut s = String::new();
    for row in values.chunks(nx1) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.8e}")).collect();
        let _ = writeln!(s, "{}", line.join(","));
    }
    s
}

pub fn write_artifacts(cfg: &ExperimentConfig, stage: &OfflineStage, study: &Study) -> Result<()> {
    let out = &cfg.out_dir;
    fs::create_dir_all(out)?;
    fs::write(out.join("results.csv"), study.table.to_csv())?;
    fs::write(out.join("config.txt"), cfg.echo())?;
    let mut prov = String::from("event,basis,iteration,origin,reason\n");
    for e in &study.space.log {
        match e {
            SpaceEvent::Added { basis, iteration, origin } => {
                let _ = writeln!(prov, "added,{basis},{iteration},\"{origin:?}\",");
            }
            SpaceEvent::Dropped {
                basis,
                iteration,
                origin,
                reason,
            } => {
                let _ = writeln!(prov, "dropped,{basis},{iteration},\"{origin:?}\",{reason}");
            }
        }
    }
    fs::write(out.join("provenance.csv"), prov)?;
    let grid = &stage.problem.grid;
    if cfg.write_maps {
        let nx1 = grid.coarse_nx() + 1;
        let mut counts = vec![0.0; grid.n_nodes()];
        for s in &study.states {
            if !s.indicators.is_empty() {
                fs::write(out.join(format!("indicators_{}.csv", s.k)), node_grid_csv(&s.indicators, nx1))?;
            }
            for &i in &s.selected {
                counts[i] += 1.0;
            }
        }
        fs::write(out.join("enrichment.csv"), node_grid_csv(&counts, nx1))?;
        let f = &stage.problem.field;
        let mut s = String::new();
        for row in f.values.chunks(f.nx) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.8e}")).collect();
            let _ = writeln!(s, "{}", line.join(","));
        }
        fs::write(out.join("permeability.csv"), s)?;
    }
    for &k in &cfg.dump_bases {
        let b = study.space.bases().get(k).ok_or(Error::IndexOutOfRange {
            what: "basis",
            index: k,
            limit: study.space.bases().len(),
        })?;
        fs::write(out.join(format!("basis_{k}.txt")), basis_to_text(b, grid))?;
    }
    Ok(())
}

/// Nodal values of a basis, one section per block of its support:
/// a `block i cx cy` header then `fy + 1` rows of `fx + 1` values, bottom
/// row first. Boundary nodes print as 0.
pub fn basis_to_text(b: &MultiscaleBasis<f64>, grid: &GridModel<f64>) -> String {
    let [fx, fy] = grid.fine_per_coarse();
    let mut s = format!("# {:?}\n{} {}\n", b.origin, fx + 1, fy + 1);
    let mut k = 0;
    for &e in &b.support.elements {
        let el = &grid.topology.elements[e];
        let off = grid.dofs.block_offsets[e];
        let _ = writeln!(s, "block {e} {} {}", el.cx, el.cy);
        for ly in 0..=fy {
            let row: Vec<String> = (0..=fx)
                .map(|lx| {
                    let v = grid.dofs.local_dof(e, lx, ly).map_or(0.0, |d| b.values[k + d - off]);
                    format!("{v:.8e}")
                })
                .collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        k += grid.dofs.block_len(e);
    }
    s
}

/// `e(m) = |psi_glo - psi_ms(m)|_a` for `m = 1..=max_layers`.
pub fn decay_study(
    cfg: &ExperimentConfig,
    block: usize,
    mode: usize,
    max_layers: usize,
) -> Result<Vec<(usize, f64)>> {
    let problem = build_problem(cfg)?;
    let (grid, forms) = (&problem.grid, &problem.forms);
    let aux = build_auxiliary_space(forms, grid, &cfg.aux_modes)?;
    decay_curve(grid, forms, &aux, block, mode, max_layers, cfg.solver_tol)
}

pub fn decay_curve(
    grid: &GridModel<f64>,
    forms: &AssembledForms<f64>,
    aux: &AuxiliarySpace<f64>,
    block: usize,
    mode: usize,
    max_layers: usize,
    tol: f64,
) -> Result<Vec<(usize, f64)>> {
    let glo = build_global_basis(block, mode, forms, grid, aux, tol)?.to_global(grid);
    let mut out = Vec::with_capacity(max_layers);
    for m in 1..=max_layers {
        let loc = build_cem_basis(block, mode, m, forms, grid, aux, tol)?.to_global(grid);
        let d: Vec<f64> = glo.iter().zip(&loc).map(|(a, b)| a - b).collect();
        out.push((m, norms(&d, forms)?.a));
    }
    Ok(out)
}

/// Errors of the fine solver against `sin(pi x) sin(pi y)` with `kappa = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManufacturedErrors {
    pub h: f64,
    pub dofs: usize,
    pub l2: f64,
    /// DG norm of the error: broken gradient plus penalized jumps.
    pub energy: f64,
}

fn gauss3() -> ([f64; 3], [f64; 3]) {
    let d = 0.5 * (0.6f64).sqrt();
    ([0.5 - d, 0.5, 0.5 + d], [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])
}

/// Fine IPDG solve for the manufactured problem on `coarse x coarse`
/// blocks of `fine x fine` cells, with errors by 3x3 Gauss quadrature.
pub fn manufactured_errors(coarse: usize, fine: usize, gamma: f64) -> Result<ManufacturedErrors> {
    let cfg = ExperimentConfig {
        coarse_n: coarse,
        fine_per_coarse: fine,
        medium: MediumSpec::Constant,
        gamma,
        source: BuiltinSource::Sin2d,
        ..ExperimentConfig::default()
    };
    let p = build_problem(&cfg)?;
    let (grid, forms) = (&p.grid, &p.forms);
    let u = solve_fine_reference(forms, grid, 1e-12)?;
    let [hx, hy] = grid.fine_cell;
    let [fx, fy] = grid.fine_per_coarse();
    let [nx, ny] = grid.fine_cells();
    let (pts, wts) = gauss3();
    let pi = std::f64::consts::PI;
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for iy in 0..ny {
        for ix in 0..nx {
            let b = grid.element_of_fine_cell(ix, iy);
            let el = &grid.topology.elements[b];
            let (lx, ly) = (ix - el.cx * fx, iy - el.cy * fy);
            let nodes = [(lx, ly), (lx + 1, ly), (lx + 1, ly + 1), (lx, ly + 1)];
            let c: Vec<f64> = nodes
                .iter()
                .map(|&(a, bb)| grid.dofs.local_dof(b, a, bb).map_or(0.0, |d| u[d]))
                .collect();
            let o = grid.fine_cell_origin(ix, iy);
            for (qx, wx) in pts.iter().zip(&wts) {
                for (qy, wy) in pts.iter().zip(&wts) {
                    let (x, y) = (o[0] + qx * hx, o[1] + qy * hy);
                    let n = element::shape(*qx, *qy);
                    let g = element::shape_grad(*qx, *qy);
                    let mut uh = 0.0;
                    let mut gh = [0.0; 2];
                    for a in 0..4 {
                        uh += c[a] * n[a];
                        gh[0] += c[a] * g[a][0] / hx;
                        gh[1] += c[a] * g[a][1] / hy;
                    }
                    let ue = (pi * x).sin() * (pi * y).sin();
                    let ge = [pi * (pi * x).cos() * (pi * y).sin(), pi * (pi * x).sin() * (pi * y).cos()];
                    let w = wx * wy * hx * hy;
                    l2 += w * (ue - uh).powi(2);
                    h1 += w * ((ge[0] - gh[0]).powi(2) + (ge[1] - gh[1]).powi(2));
                }
            }
        }
    }
    let jumps = forms.penalty.quad_form(&u);
    Ok(ManufacturedErrors {
        h: hx,
        dofs: grid.total_dofs(),
        l2: l2.sqrt(),
        energy: (h1 + jumps).sqrt(),
    })
}

/// Manufactured-solution study on a 4x4 coarse grid with `4 * 2^l` fine
/// cells per block, `l = 0..levels`.
pub fn check_study(levels: usize) -> Result<Vec<ManufacturedErrors>> {
    (0..levels).map(|l| manufactured_errors(4, 4 << l, 4.0)).collect()
}

/// Observed orders `log2(e_l / e_{l+1})` between successive halvings.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}
