//! Fill-reducing orderings for the sparse Cholesky factorization.

use std::collections::VecDeque;

use super::sparse::CsrMatrix;
use crate::scalar::Real;

/// Permutation strategy. A permutation is stored as `perm[new] = old`.
#[derive(Clone, Copy, Debug)]
pub enum Ordering<'a> {
    Natural,
    /// Reverse Cuthill-McKee on the matrix graph.
    ReverseCuthillMcKee,
    /// Geometric nested dissection using integer grid coordinates per row.
    NestedDissection(&'a [[usize; 2]]),
}

impl Ordering<'_> {
    pub fn permutation<T: Real>(&self, a: &CsrMatrix<T>) -> Vec<usize> {
        match self {
            Ordering::Natural => (0..a.nrows()).collect(),
            Ordering::ReverseCuthillMcKee => reverse_cuthill_mckee(a),
            Ordering::NestedDissection(coords) => nested_dissection(a, coords),
        }
    }
}

pub fn reverse_cuthill_mckee<T: Real>(a: &CsrMatrix<T>) -> Vec<usize> {
    let n = a.nrows();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    let mut nbrs = Vec::new();
    loop {
        // Start each component from its minimum-degree vertex.
        let start = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| (degree[i], i));
        let Some(start) = start else { break };
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            nbrs.clear();
            nbrs.extend(a.row(v).0.iter().copied().filter(|&u| !visited[u]));
            nbrs.sort_by_key(|&u| (degree[u], u));
            for &u in &nbrs {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

const LEAF: usize = 64;

/// Nested dissection driven by grid coordinates.
///
/// Each subset is split by a coordinate line along its longer extent; every
/// vertex on the cut line, plus any right-hand vertex coupled to the left
/// half, goes into the separator, which is ordered after both halves.
pub fn nested_dissection<T: Real>(a: &CsrMatrix<T>, coords: &[[usize; 2]]) -> Vec<usize> {
    let n = a.nrows();
    assert_eq!(coords.len(), n);
    let mut label = vec![0u8; n];
    let mut out = Vec::with_capacity(n);
    dissect(a, coords, (0..n).collect(), &mut label, &mut out);
    debug_assert_eq!(out.len(), n);
    out
}

const LEFT: u8 = 1;
const RIGHT: u8 = 2;
const SEP: u8 = 3;

fn dissect<T: Real>(
    a: &CsrMatrix<T>,
    coords: &[[usize; 2]],
    verts: Vec<usize>,
    label: &mut [u8],
    out: &mut Vec<usize>,
) {
    if verts.len() <= LEAF {
        out.extend(verts);
        return;
    }
    let mut lo = [usize::MAX; 2];
    let mut hi = [0usize; 2];
    for &v in &verts {
        for d in 0..2 {
            lo[d] = lo[d].min(coords[v][d]);
            hi[d] = hi[d].max(coords[v][d]);
        }
    }
    let axes = if hi[0] - lo[0] >= hi[1] - lo[1] {
        [0, 1]
    } else {
        [1, 0]
    };

    let mut best: Option<(usize, usize, usize)> = None; // (sep size, axis, cut)
    for &axis in &axes {
        if hi[axis] == lo[axis] {
            continue;
        }
        let mut vals: Vec<usize> = verts.iter().map(|&v| coords[v][axis]).collect();
        let mid = vals.len() / 2;
        let median = *vals.select_nth_unstable(mid).1;
        for cut in [median.saturating_sub(1), median, median + 1] {
            if cut <= lo[axis] || cut >= hi[axis] {
                continue;
            }
            let size = classify(a, coords, &verts, axis, cut, label);
            let (mut nl, mut nr) = (0, 0);
            for &v in &verts {
                match label[v] {
                    LEFT => nl += 1,
                    RIGHT => nr += 1,
                    _ => {}
                }
                label[v] = 0;
            }
            if nl == 0 || nr == 0 {
                continue;
            }
            if best.is_none_or(|(s, _, _)| size < s) {
                best = Some((size, axis, cut));
            }
        }
        if best.is_some() {
            break;
        }
    }

    let Some((_, axis, cut)) = best else {
        out.extend(verts);
        return;
    };
    classify(a, coords, &verts, axis, cut, label);
    let mut left = Vec::new();
    let mut right = Vec::new();
    let mut sep = Vec::new();
    for &v in &verts {
        match label[v] {
            LEFT => left.push(v),
            RIGHT => right.push(v),
            _ => sep.push(v),
        }
        label[v] = 0;
    }
    drop(verts);
    dissect(a, coords, left, label, out);
    dissect(a, coords, right, label, out);
    out.extend(sep);
}

/// Labels `verts` relative to the cut and returns the separator size.
fn classify<T: Real>(
    a: &CsrMatrix<T>,
    coords: &[[usize; 2]],
    verts: &[usize],
    axis: usize,
    cut: usize,
    label: &mut [u8],
) -> usize {
    let mut sep = 0;
    for &v in verts {
        let c = coords[v][axis];
        label[v] = if c < cut {
            LEFT
        } else if c > cut {
            RIGHT
        } else {
            sep += 1;
            SEP
        };
    }
    for &v in verts {
        if label[v] != LEFT {
            continue;
        }
        for &u in a.row(v).0 {
            if label[u] == RIGHT {
                label[u] = SEP;
                sep += 1;
            }
        }
    }
    sep
}
