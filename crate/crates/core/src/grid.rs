//! Structured coarse/fine grid hierarchy, coarse topology, oversampled
//! regions and the discontinuous degree-of-freedom map.
//!
//! All indices are row-major: coarse element `(cx, cy)` is `cy * nx + cx`,
//! coarse node `(ix, iy)` is `iy * (nx + 1) + ix`. Fine nodes are addressed
//! by integer global coordinates `(gx, gy)` with `0 <= gx <= nx * fx`.
//!
//! Degrees of freedom are numbered block by block, so every coarse block
//! owns a contiguous range. Fine nodes on an interior coarse edge appear
//! once per adjacent block; fine nodes on the domain boundary carry no dof.

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const NO_DOF: usize = usize::MAX;

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect<T> {
    pub x0: T,
    pub y0: T,
    pub x1: T,
    pub y1: T,
}

impl<T: Real> Rect<T> {
    pub fn unit() -> Self {
        Rect {
            x0: T::zero(),
            y0: T::zero(),
            x1: T::one(),
            y1: T::one(),
        }
    }

    pub fn width(&self) -> T {
        self.x1 - self.x0
    }

    pub fn height(&self) -> T {
        self.y1 - self.y0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridConfig<T> {
    pub domain: Rect<T>,
    pub coarse_nx: usize,
    pub coarse_ny: usize,
    pub fine_per_coarse_x: usize,
    pub fine_per_coarse_y: usize,
}

impl<T: Real> GridConfig<T> {
    /// Square `n x n` coarse grid on the unit square, each block split into
    /// `fine x fine` cells.
    pub fn unit_square(coarse_n: usize, fine_per_coarse: usize) -> Self {
        GridConfig {
            domain: Rect::unit(),
            coarse_nx: coarse_n,
            coarse_ny: coarse_n,
            fine_per_coarse_x: fine_per_coarse,
            fine_per_coarse_y: fine_per_coarse,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.coarse_nx == 0
            || self.coarse_ny == 0
            || self.fine_per_coarse_x == 0
            || self.fine_per_coarse_y == 0
        {
            return Err(Error::Config(format!(
                "grid counts must be positive (coarse {}x{}, fine per coarse {}x{})",
                self.coarse_nx, self.coarse_ny, self.fine_per_coarse_x, self.fine_per_coarse_y
            )));
        }
        let d = &self.domain;
        if !(d.width() > T::zero() && d.height() > T::zero()) {
            return Err(Error::Config("domain must have positive extent".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CoarseElement<T> {
    pub cx: usize,
    pub cy: usize,
    pub lo: [T; 2],
    pub hi: [T; 2],
}

impl<T: Real> CoarseElement<T> {
    pub fn center(&self) -> [T; 2] {
        let half = T::lit(0.5);
        [
            half * (self.lo[0] + self.hi[0]),
            half * (self.lo[1] + self.hi[1]),
        ]
    }
}

#[derive(Clone, Debug)]
pub struct CoarseNode<T> {
    pub ix: usize,
    pub iy: usize,
    pub position: [T; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeOrientation {
    /// Constant x; normal along +-x.
    Vertical,
    /// Constant y; normal along +-y.
    Horizontal,
}

/// A coarse edge. Interior edges have `minus = Some(_)` and a normal
/// pointing from `plus` to `minus`; boundary edges only have `plus` and an
/// outward normal.
#[derive(Clone, Debug)]
pub struct CoarseEdge<T> {
    pub orientation: EdgeOrientation,
    /// Coarse node line the edge lies on (x index for vertical edges).
    pub line: usize,
    /// Coarse cell index along the edge (y index for vertical edges).
    pub span: usize,
    pub plus: usize,
    pub minus: Option<usize>,
    pub normal: [T; 2],
    pub a: [T; 2],
    pub b: [T; 2],
}

impl<T: Real> CoarseEdge<T> {
    pub fn is_boundary(&self) -> bool {
        self.minus.is_none()
    }

    pub fn length(&self) -> T {
        let dx = self.b[0] - self.a[0];
        let dy = self.b[1] - self.a[1];
        (dx * dx + dy * dy).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct CoarseTopology<T> {
    pub elements: Vec<CoarseElement<T>>,
    pub nodes: Vec<CoarseNode<T>>,
    pub edges: Vec<CoarseEdge<T>>,
    /// `neighborhoods[j]`: sorted coarse elements containing node `j`.
    pub neighborhoods: Vec<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegionKind {
    Block,
    Neighborhood,
    Domain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RegionOrigin {
    pub kind: RegionKind,
    pub center: usize,
    pub layers: usize,
}

/// Union of coarse elements, stored as a sorted duplicate-free list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    pub elements: Vec<usize>,
    pub origin: RegionOrigin,
}

impl Region {
    pub fn contains(&self, element: usize) -> bool {
        self.elements.binary_search(&element).is_ok()
    }

    pub fn is_subset_of(&self, other: &Region) -> bool {
        self.elements.iter().all(|&e| other.contains(e))
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// Global dof numbering.
#[derive(Clone, Debug)]
pub struct DofMap {
    fx: usize,
    /// `block_offsets[i]..block_offsets[i + 1]` are the dofs of block `i`.
    pub block_offsets: Vec<usize>,
    /// Per block, local node `ly * (fx + 1) + lx` to global dof or [`NO_DOF`].
    local_to_dof: Vec<Vec<usize>>,
    dof_block: Vec<u32>,
    dof_node: Vec<[u32; 2]>,
}

impl DofMap {
    pub fn total_dofs(&self) -> usize {
        *self.block_offsets.last().unwrap_or(&0)
    }

    pub fn n_blocks(&self) -> usize {
        self.block_offsets.len() - 1
    }

    pub fn block_range(&self, block: usize) -> std::ops::Range<usize> {
        self.block_offsets[block]..self.block_offsets[block + 1]
    }

    pub fn block_len(&self, block: usize) -> usize {
        self.block_offsets[block + 1] - self.block_offsets[block]
    }

    /// Dof of local node `(lx, ly)` in `block`, if it is not on the boundary.
    #[inline]
    pub fn local_dof(&self, block: usize, lx: usize, ly: usize) -> Option<usize> {
        let d = self.local_to_dof[block][ly * (self.fx + 1) + lx];
        (d != NO_DOF).then_some(d)
    }

    #[inline]
    pub fn block_of(&self, dof: usize) -> usize {
        self.dof_block[dof] as usize
    }

    /// Global fine-node coordinates of a dof.
    #[inline]
    pub fn node_of(&self, dof: usize) -> [usize; 2] {
        let [x, y] = self.dof_node[dof];
        [x as usize, y as usize]
    }

    /// Sorted global dofs of a region.
    pub fn region_dofs(&self, region: &Region) -> Vec<usize> {
        let mut out = Vec::new();
        for &b in &region.elements {
            out.extend(self.block_range(b));
        }
        out
    }

    /// Number of dofs in a set of blocks.
    pub fn count_dofs(&self, blocks: &[usize]) -> usize {
        blocks.iter().map(|&b| self.block_len(b)).sum()
    }
}

/// Grid geometry, topology and dof map. Immutable after construction.
#[derive(Clone, Debug)]
pub struct GridModel<T> {
    pub config: GridConfig<T>,
    pub topology: CoarseTopology<T>,
    pub dofs: DofMap,
    /// Coarse cell side lengths `[hx, hy]`.
    pub coarse_cell: [T; 2],
    /// Fine cell side lengths `[hx, hy]`.
    pub fine_cell: [T; 2],
}

pub fn build_grid<T: Real>(config: GridConfig<T>) -> Result<GridModel<T>> {
    config.validate()?;
    let (nx, ny) = (config.coarse_nx, config.coarse_ny);
    let (fx, fy) = (config.fine_per_coarse_x, config.fine_per_coarse_y);
    let d = config.domain;
    let coarse_cell = [
        d.width() / T::from_count(nx),
        d.height() / T::from_count(ny),
    ];
    let fine_cell = [
        d.width() / T::from_count(nx * fx),
        d.height() / T::from_count(ny * fy),
    ];
    let cx_coord = |i: usize| d.x0 + d.width() * T::from_count(i) / T::from_count(nx);
    let cy_coord = |j: usize| d.y0 + d.height() * T::from_count(j) / T::from_count(ny);

    let mut elements = Vec::with_capacity(nx * ny);
    for cy in 0..ny {
        for cx in 0..nx {
            elements.push(CoarseElement {
                cx,
                cy,
                lo: [cx_coord(cx), cy_coord(cy)],
                hi: [cx_coord(cx + 1), cy_coord(cy + 1)],
            });
        }
    }

    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    let mut neighborhoods = Vec::with_capacity((nx + 1) * (ny + 1));
    for iy in 0..=ny {
        for ix in 0..=nx {
            nodes.push(CoarseNode {
                ix,
                iy,
                position: [cx_coord(ix), cy_coord(iy)],
            });
            let mut hood = Vec::with_capacity(4);
            for cy in iy.saturating_sub(1)..(iy + 1).min(ny) {
                for cx in ix.saturating_sub(1)..(ix + 1).min(nx) {
                    hood.push(cy * nx + cx);
                }
            }
            neighborhoods.push(hood);
        }
    }

    let one = T::one();
    let zero = T::zero();
    let mut edges = Vec::new();
    // Vertical edges, row by row.
    for cy in 0..ny {
        for ix in 0..=nx {
            let (plus, minus, normal) = if ix == 0 {
                (cy * nx, None, [-one, zero])
            } else if ix == nx {
                (cy * nx + nx - 1, None, [one, zero])
            } else {
                (cy * nx + ix - 1, Some(cy * nx + ix), [one, zero])
            };
            edges.push(CoarseEdge {
                orientation: EdgeOrientation::Vertical,
                line: ix,
                span: cy,
                plus,
                minus,
                normal,
                a: [cx_coord(ix), cy_coord(cy)],
                b: [cx_coord(ix), cy_coord(cy + 1)],
            });
        }
    }
    // Horizontal edges, row by row.
    for iy in 0..=ny {
        for cx in 0..nx {
            let (plus, minus, normal) = if iy == 0 {
                (cx, None, [zero, -one])
            } else if iy == ny {
                ((ny - 1) * nx + cx, None, [zero, one])
            } else {
                ((iy - 1) * nx + cx, Some(iy * nx + cx), [zero, one])
            };
            edges.push(CoarseEdge {
                orientation: EdgeOrientation::Horizontal,
                line: iy,
                span: cx,
                plus,
                minus,
                normal,
                a: [cx_coord(cx), cy_coord(iy)],
                b: [cx_coord(cx + 1), cy_coord(iy)],
            });
        }
    }

    // Dof map.
    let (gnx, gny) = (nx * fx, ny * fy);
    let mut block_offsets = Vec::with_capacity(nx * ny + 1);
    let mut local_to_dof = Vec::with_capacity(nx * ny);
    let mut dof_block = Vec::new();
    let mut dof_node = Vec::new();
    let mut next = 0usize;
    block_offsets.push(0);
    for (b, el) in elements.iter().enumerate() {
        let mut map = vec![NO_DOF; (fx + 1) * (fy + 1)];
        for ly in 0..=fy {
            for lx in 0..=fx {
                let gx = el.cx * fx + lx;
                let gy = el.cy * fy + ly;
                if gx == 0 || gy == 0 || gx == gnx || gy == gny {
                    continue;
                }
                map[ly * (fx + 1) + lx] = next;
                dof_block.push(b as u32);
                dof_node.push([gx as u32, gy as u32]);
                next += 1;
            }
        }
        local_to_dof.push(map);
        block_offsets.push(next);
    }

    Ok(GridModel {
        topology: CoarseTopology {
            elements,
            nodes,
            edges,
            neighborhoods,
        },
        dofs: DofMap {
            fx,
            block_offsets,
            local_to_dof,
            dof_block,
            dof_node,
        },
        coarse_cell,
        fine_cell,
        config,
    })
}

impl<T: Real> GridModel<T> {
    pub fn n_elements(&self) -> usize {
        self.topology.elements.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.topology.nodes.len()
    }

    pub fn coarse_nx(&self) -> usize {
        self.config.coarse_nx
    }

    pub fn coarse_ny(&self) -> usize {
        self.config.coarse_ny
    }

    pub fn fine_per_coarse(&self) -> [usize; 2] {
        [self.config.fine_per_coarse_x, self.config.fine_per_coarse_y]
    }

    /// Number of fine cells along x and y.
    pub fn fine_cells(&self) -> [usize; 2] {
        [
            self.config.coarse_nx * self.config.fine_per_coarse_x,
            self.config.coarse_ny * self.config.fine_per_coarse_y,
        ]
    }

    pub fn total_dofs(&self) -> usize {
        self.dofs.total_dofs()
    }

    /// Coarse mesh size `H`: diameter of a coarse cell.
    pub fn coarse_diameter(&self) -> T {
        let [a, b] = self.coarse_cell;
        (a * a + b * b).sqrt()
    }

    /// Fine mesh size `h`: diameter of a fine cell.
    pub fn fine_diameter(&self) -> T {
        let [a, b] = self.fine_cell;
        (a * a + b * b).sqrt()
    }

    /// Physical position of global fine node `(gx, gy)`.
    pub fn fine_node_position(&self, gx: usize, gy: usize) -> [T; 2] {
        let [gnx, gny] = self.fine_cells();
        let d = &self.config.domain;
        [
            d.x0 + d.width() * T::from_count(gx) / T::from_count(gnx),
            d.y0 + d.height() * T::from_count(gy) / T::from_count(gny),
        ]
    }

    /// Lower-left corner of global fine cell `(ix, iy)`.
    pub fn fine_cell_origin(&self, ix: usize, iy: usize) -> [T; 2] {
        self.fine_node_position(ix, iy)
    }

    /// Coarse element containing global fine cell `(ix, iy)`.
    pub fn element_of_fine_cell(&self, ix: usize, iy: usize) -> usize {
        let [fx, fy] = self.fine_per_coarse();
        (iy / fy) * self.config.coarse_nx + ix / fx
    }

    fn dilate(&self, set: &[usize]) -> Vec<usize> {
        let nx = self.config.coarse_nx;
        let ny = self.config.coarse_ny;
        let mut mark = vec![false; nx * ny];
        for &e in set {
            let (cx, cy) = (e % nx, e / nx);
            for y in cy.saturating_sub(1)..(cy + 2).min(ny) {
                for x in cx.saturating_sub(1)..(cx + 2).min(nx) {
                    mark[y * nx + x] = true;
                }
            }
        }
        mark.iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    /// Elements sharing at least a point with `set` (vertex adjacency).
    pub fn dilate_elements(&self, set: &[usize]) -> Vec<usize> {
        self.dilate(set)
    }

    /// `K_{i,m}`: block `i` grown by `m` layers of vertex-adjacent elements.
    pub fn oversample_block(&self, i: usize, m: usize) -> Result<Region> {
        if i >= self.n_elements() {
            return Err(Error::IndexOutOfRange {
                what: "coarse element",
                index: i,
                limit: self.n_elements(),
            });
        }
        let mut set = vec![i];
        for _ in 0..m {
            set = self.dilate(&set);
        }
        Ok(Region {
            elements: set,
            origin: RegionOrigin {
                kind: RegionKind::Block,
                center: i,
                layers: m,
            },
        })
    }

    /// `omega_{i,m}`: neighborhood of coarse node `i` grown by `m` layers.
    pub fn oversample_neighborhood(&self, i: usize, m: usize) -> Result<Region> {
        if i >= self.n_nodes() {
            return Err(Error::IndexOutOfRange {
                what: "coarse node",
                index: i,
                limit: self.n_nodes(),
            });
        }
        let mut set = self.topology.neighborhoods[i].clone();
        for _ in 0..m {
            set = self.dilate(&set);
        }
        Ok(Region {
            elements: set,
            origin: RegionOrigin {
                kind: RegionKind::Neighborhood,
                center: i,
                layers: m,
            },
        })
    }

    /// The whole domain as a region.
    pub fn domain_region(&self) -> Region {
        Region {
            elements: (0..self.n_elements()).collect(),
            origin: RegionOrigin {
                kind: RegionKind::Domain,
                center: 0,
                layers: 0,
            },
        }
    }
}
