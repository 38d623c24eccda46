//! Fine-scale permeability fields, the coarse bilinear partition of unity
//! and the derived spectral weight `kappa_tilde = kappa * sum_j |grad chi_j|^2`.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::GridModel;
use crate::scalar::Real;

/// Piecewise-constant permeability, one value per fine cell, row-major from
/// the bottom-left cell.
#[derive(Clone, Debug, PartialEq)]
pub struct PermeabilityField<T> {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<T>,
    pub description: String,
}

impl<T: Real> PermeabilityField<T> {
    pub fn constant(nx: usize, ny: usize, value: T) -> Self {
        PermeabilityField {
            nx,
            ny,
            values: vec![value; nx * ny],
            description: format!("constant {value}"),
        }
    }

    /// Builds a field from per-cell values, checking shape and positivity.
    pub fn from_values(nx: usize, ny: usize, values: Vec<T>, description: impl Into<String>) -> Result<Self> {
        if values.len() != nx * ny {
            return Err(Error::DimensionMismatch {
                expected_nx: nx,
                expected_ny: ny,
                found: format!("{} values", values.len()),
            });
        }
        if let Some(k) = values.iter().position(|v| !(*v > T::zero()) || !v.is_finite()) {
            return Err(Error::NonPositivePermeability {
                ix: k % nx,
                iy: k / nx,
                value: values[k].as_f64(),
            });
        }
        Ok(PermeabilityField {
            nx,
            ny,
            values,
            description: description.into(),
        })
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> T {
        self.values[iy * self.nx + ix]
    }

    pub fn min(&self) -> T {
        self.values.iter().fold(T::infinity(), |m, v| m.min(*v))
    }

    pub fn max(&self) -> T {
        self.values.iter().fold(T::neg_infinity(), |m, v| m.max(*v))
    }

    pub fn scaled(&self, c: T) -> Self {
        PermeabilityField {
            nx: self.nx,
            ny: self.ny,
            values: self.values.iter().map(|v| *v * c).collect(),
            description: format!("{} scaled by {c}", self.description),
        }
    }

    fn check_grid(&self, grid: &GridModel<T>) -> Result<()> {
        let [gx, gy] = grid.fine_cells();
        if (self.nx, self.ny) != (gx, gy) {
            return Err(Error::DimensionMismatch {
                expected_nx: gx,
                expected_ny: gy,
                found: format!("{}x{}", self.nx, self.ny),
            });
        }
        Ok(())
    }

    /// Plain-text serialization: a `nx ny` header followed by `ny` rows of
    /// `nx` values, bottom row first.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.nx, self.ny);
        for iy in 0..self.ny {
            let row = &self.values[iy * self.nx..(iy + 1) * self.nx];
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    s.push(' ');
                }
                write!(s, "{v:e}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str, grid: &GridModel<T>) -> Result<Self> {
        let [nx, ny] = grid.fine_cells();
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: hline + 1,
                message: format!("bad header: {e}"),
            })?;
        if dims.len() != 2 {
            return Err(Error::Parse {
                line: hline + 1,
                message: "header must be `nx ny`".into(),
            });
        }
        if (dims[0], dims[1]) != (nx, ny) {
            return Err(Error::DimensionMismatch {
                expected_nx: nx,
                expected_ny: ny,
                found: format!("{}x{} header", dims[0], dims[1]),
            });
        }
        let mut values = Vec::with_capacity(nx * ny);
        let mut rows = 0;
        for (ln, line) in lines {
            let mut count = 0;
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|e| Error::Parse {
                    line: ln + 1,
                    message: format!("bad value `{tok}`: {e}"),
                })?;
                values.push(T::lit(v));
                count += 1;
            }
            if count != nx {
                return Err(Error::DimensionMismatch {
                    expected_nx: nx,
                    expected_ny: ny,
                    found: format!("{count} values on line {}", ln + 1),
                });
            }
            rows += 1;
        }
        if rows != ny {
            return Err(Error::DimensionMismatch {
                expected_nx: nx,
                expected_ny: ny,
                found: format!("{rows} rows"),
            });
        }
        Self::from_values(nx, ny, values, "file")
    }
}

/// Reads a field file and checks it against the fine grid.
pub fn load_field<T: Real>(path: &Path, grid: &GridModel<T>) -> Result<PermeabilityField<T>> {
    let text = std::fs::read_to_string(path)?;
    let mut field = PermeabilityField::parse(&text, grid)?;
    field.description = format!("file {}", path.display());
    Ok(field)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Channels,
    Inclusions,
    Mixed,
}

impl std::str::FromStr for FieldKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "channels" => Ok(FieldKind::Channels),
            "inclusions" => Ok(FieldKind::Inclusions),
            "mixed" => Ok(FieldKind::Mixed),
            other => Err(Error::Config(format!("unknown field kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for FieldKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FieldKind::Channels => "channels",
            FieldKind::Inclusions => "inclusions",
            FieldKind::Mixed => "mixed",
        })
    }
}

/// Generates a binary high-contrast medium: background 1, features equal to
/// `contrast`.
///
/// Randomness comes from `ChaCha8Rng::seed_from_u64(seed)`.
///
/// * channels: `max(1, (nx + ny) / 64)` axis-parallel strips, 2 to 6 cells
///   wide, each covering between half and all of the domain length.
/// * inclusions: `max(1, nx * ny / 1024)` rectangles with 2 to 8 cells per side.
/// * mixed: channels followed by inclusions.
pub fn generate_field<T: Real>(
    kind: FieldKind,
    contrast: T,
    seed: u64,
    grid: &GridModel<T>,
) -> Result<PermeabilityField<T>> {
    if !(contrast >= T::one()) {
        return Err(Error::Config(format!("contrast must be >= 1, got {contrast}")));
    }
    let [nx, ny] = grid.fine_cells();
    let mut mask = vec![false; nx * ny];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fill = |x0: usize, x1: usize, y0: usize, y1: usize| {
        for iy in y0..y1.min(ny) {
            for ix in x0..x1.min(nx) {
                mask[iy * nx + ix] = true;
            }
        }
    };
    if matches!(kind, FieldKind::Channels | FieldKind::Mixed) {
        let count = ((nx + ny) / 64).max(1);
        for _ in 0..count {
            let horizontal = rng.gen_bool(0.5);
            let width = rng.gen_range(2..=6usize);
            let (along, across) = if horizontal { (nx, ny) } else { (ny, nx) };
            let len = rng.gen_range(along.div_ceil(2)..=along);
            let start = rng.gen_range(0..=along - len);
            let offset = rng.gen_range(0..across.saturating_sub(width).max(1));
            if horizontal {
                fill(start, start + len, offset, offset + width);
            } else {
                fill(offset, offset + width, start, start + len);
            }
        }
    }
    if matches!(kind, FieldKind::Inclusions | FieldKind::Mixed) {
        let count = (nx * ny / 1024).max(1);
        for _ in 0..count {
            let w = rng.gen_range(2..=8usize);
            let h = rng.gen_range(2..=8usize);
            let x0 = rng.gen_range(0..nx.saturating_sub(w).max(1));
            let y0 = rng.gen_range(0..ny.saturating_sub(h).max(1));
            fill(x0, x0 + w, y0, y0 + h);
        }
    }
    let values = mask
        .into_iter()
        .map(|m| if m { contrast } else { T::one() })
        .collect();
    PermeabilityField::from_values(
        nx,
        ny,
        values,
        format!("{kind} contrast={contrast} seed={seed}"),
    )
}

/// Standard bilinear hat functions on the coarse grid.
#[derive(Clone, Debug)]
pub struct PartitionOfUnity<T> {
    coarse: [usize; 2],
    fine_per_coarse: [usize; 2],
    coarse_cell: [T; 2],
}

impl<T: Real> PartitionOfUnity<T> {
    pub fn new(grid: &GridModel<T>) -> Self {
        PartitionOfUnity {
            coarse: [grid.coarse_nx(), grid.coarse_ny()],
            fine_per_coarse: grid.fine_per_coarse(),
            coarse_cell: grid.coarse_cell,
        }
    }

    pub fn n_functions(&self) -> usize {
        (self.coarse[0] + 1) * (self.coarse[1] + 1)
    }

    /// 1D hat of coarse node line `line` at fine node `g`, along axis `d`.
    fn hat_1d(&self, d: usize, line: usize, g: usize) -> T {
        let f = self.fine_per_coarse[d];
        let centre = line * f;
        let dist = g.abs_diff(centre);
        if dist >= f {
            T::zero()
        } else {
            T::one() - T::from_count(dist) / T::from_count(f)
        }
    }

    /// `chi_j` at global fine node `(gx, gy)`.
    pub fn value_at_node(&self, j: usize, gx: usize, gy: usize) -> T {
        let nx1 = self.coarse[0] + 1;
        let (ix, iy) = (j % nx1, j / nx1);
        self.hat_1d(0, ix, gx) * self.hat_1d(1, iy, gy)
    }

    /// The four hats that are nonzero on fine cell `(cx, cy)` together with
    /// their gradients at the cell centre.
    pub fn gradients_at_cell_center(&self, cx: usize, cy: usize) -> [(usize, [T; 2]); 4] {
        let [fx, fy] = self.fine_per_coarse;
        let (kx, ky) = (cx / fx, cy / fy);
        let half = T::lit(0.5);
        // Local coordinates of the cell centre inside the coarse block.
        let xi = (T::from_count(cx - kx * fx) + half) / T::from_count(fx);
        let eta = (T::from_count(cy - ky * fy) + half) / T::from_count(fy);
        let [hx, hy] = self.coarse_cell;
        let nx1 = self.coarse[0] + 1;
        let one = T::one();
        let corners = [(0usize, 0usize), (1, 0), (1, 1), (0, 1)];
        corners.map(|(a, b)| {
            let node = (ky + b) * nx1 + kx + a;
            let (sx, fxv) = if a == 1 { (one, xi) } else { (-one, one - xi) };
            let (sy, fyv) = if b == 1 { (one, eta) } else { (-one, one - eta) };
            (node, [sx * fyv / hx, sy * fxv / hy])
        })
    }

    /// `chi_j` at every dof (zero outside `omega_j`).
    pub fn dof_values(&self, j: usize, grid: &GridModel<T>) -> Vec<T> {
        (0..grid.total_dofs())
            .map(|d| {
                let [gx, gy] = grid.dofs.node_of(d);
                self.value_at_node(j, gx, gy)
            })
            .collect()
    }
}

/// `kappa_tilde`, one value per fine cell.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightField<T> {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<T>,
}

impl<T: Real> WeightField<T> {
    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> T {
        self.values[iy * self.nx + ix]
    }
}

/// `kappa_tilde = kappa * sum_j |grad chi_j|^2`, sampled at cell centres.
pub fn compute_kappa_tilde<T: Real>(
    field: &PermeabilityField<T>,
    pou: &PartitionOfUnity<T>,
) -> WeightField<T> {
    let mut values = Vec::with_capacity(field.values.len());
    for iy in 0..field.ny {
        for ix in 0..field.nx {
            let s: T = pou
                .gradients_at_cell_center(ix, iy)
                .iter()
                .map(|(_, g)| g[0] * g[0] + g[1] * g[1])
                .sum();
            values.push(field.at(ix, iy) * s);
        }
    }
    WeightField {
        nx: field.nx,
        ny: field.ny,
        values,
    }
}

/// Checks a field against the grid it will be used with.
pub fn validate_field<T: Real>(field: &PermeabilityField<T>, grid: &GridModel<T>) -> Result<()> {
    field.check_grid(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridConfig};

    fn grid(n: usize, f: usize) -> GridModel<f64> {
        build_grid(GridConfig::unit_square(n, f)).unwrap()
    }

    #[test]
    fn partition_of_unity_sums_to_one() {
        let g = grid(5, 7);
        let pou = PartitionOfUnity::new(&g);
        let [nx, ny] = g.fine_cells();
        let mut worst = 0.0f64;
        for gy in 0..=ny {
            for gx in 0..=nx {
                let s: f64 = (0..pou.n_functions()).map(|j| pou.value_at_node(j, gx, gy)).sum();
                worst = worst.max((s - 1.0).abs());
                for j in 0..pou.n_functions() {
                    let v = pou.value_at_node(j, gx, gy);
                    assert!((0.0..=1.0).contains(&v));
                }
            }
        }
        assert!(worst <= 1e-14, "{worst}");
    }

    #[test]
    fn hats_interpolate_at_coarse_nodes() {
        let g = grid(3, 4);
        let pou = PartitionOfUnity::new(&g);
        for j in 0..pou.n_functions() {
            for (k, node) in g.topology.nodes.iter().enumerate() {
                let v = pou.value_at_node(j, node.ix * 4, node.iy * 4);
                assert_eq!(v, if j == k { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn hat_support_is_neighborhood() {
        let g = grid(4, 3);
        let pou = PartitionOfUnity::new(&g);
        let j = 7;
        for d in 0..g.total_dofs() {
            let [gx, gy] = g.dofs.node_of(d);
            if pou.value_at_node(j, gx, gy) > 0.0 {
                assert!(g.topology.neighborhoods[j].contains(&g.dofs.block_of(d)));
            }
        }
    }

    #[test]
    fn kappa_tilde_at_coarse_centre() {
        // 16 fine cells per coarse cell: cell (8, 8) is not centred, so use
        // an odd refinement where a fine cell centre is the coarse centre.
        let g = build_grid(GridConfig::<f64>::unit_square(16, 3)).unwrap();
        let field = PermeabilityField::constant(48, 48, 1.0);
        let kt = compute_kappa_tilde(&field, &PartitionOfUnity::new(&g));
        assert!((kt.at(1, 1) - 512.0).abs() < 1e-9);
        assert!(kt.values.iter().all(|v| *v > 0.0));
        let doubled = compute_kappa_tilde(&field.scaled(2.0), &PartitionOfUnity::new(&g));
        for (a, b) in doubled.values.iter().zip(&kt.values) {
            assert!((a - 2.0 * b).abs() <= 1e-14 * a.abs());
        }
    }

    #[test]
    fn generator_basics() {
        let g = grid(16, 16);
        let flat = generate_field(FieldKind::Mixed, 1.0, 3, &g).unwrap();
        assert!(flat.values.iter().all(|v| *v == 1.0));
        let a = generate_field(FieldKind::Channels, 1e4, 11, &g).unwrap();
        let b = generate_field(FieldKind::Channels, 1e4, 11, &g).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.min(), 1.0);
        assert_eq!(a.max(), 1e4);
        assert!(generate_field(FieldKind::Channels, 0.5, 1, &g).is_err());
    }

    #[test]
    fn file_round_trip_and_errors() {
        let g = grid(2, 2);
        let field = generate_field(FieldKind::Inclusions, 10.0, 5, &g).unwrap();
        let back = PermeabilityField::parse(&field.to_text(), &g).unwrap();
        assert_eq!(back.values, field.values);

        let zero = "4 4\n1 1 1 1\n1 0 1 1\n1 1 1 1\n1 1 1 1\n";
        assert!(matches!(
            PermeabilityField::parse(zero, &g),
            Err(Error::NonPositivePermeability { ix: 1, iy: 1, .. })
        ));
        let short = "4 4\n1 1 1 1\n1 1 1 1\n1 1 1 1\n";
        assert!(matches!(
            PermeabilityField::parse(short, &g),
            Err(Error::DimensionMismatch { .. })
        ));
        let garbage = "4 4\n1 1 x 1\n";
        assert!(matches!(
            PermeabilityField::parse(garbage, &g),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
