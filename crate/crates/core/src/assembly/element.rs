//! Bilinear reference element on `[0,1]^2` with nodes ordered
//! `(0,0), (1,0), (1,1), (0,1)`.

use crate::scalar::Real;

pub type Local4<T> = [[T; 4]; 4];

/// Two-point Gauss rule on `[0, 1]`: `(points, weights)`.
pub fn gauss2<T: Real>() -> ([T; 2], [T; 2]) {
    let d = T::lit(0.5) / T::lit(3.0).sqrt();
    let half = T::lit(0.5);
    ([half - d, half + d], [half, half])
}

#[inline]
pub fn shape<T: Real>(xi: T, eta: T) -> [T; 4] {
    let one = T::one();
    [
        (one - xi) * (one - eta),
        xi * (one - eta),
        xi * eta,
        (one - xi) * eta,
    ]
}

/// Reference gradients `[d/dxi, d/deta]` of the four shape functions.
#[inline]
pub fn shape_grad<T: Real>(xi: T, eta: T) -> [[T; 2]; 4] {
    let one = T::one();
    [
        [-(one - eta), -(one - xi)],
        [one - eta, -xi],
        [eta, xi],
        [-eta, one - xi],
    ]
}

/// `int_cell grad N_a . grad N_b` for a `hx x hy` cell, by 2x2 Gauss.
pub fn stiffness<T: Real>(hx: T, hy: T) -> Local4<T> {
    let (pts, wts) = gauss2::<T>();
    let mut k = [[T::zero(); 4]; 4];
    for (qx, wx) in pts.iter().zip(&wts) {
        for (qy, wy) in pts.iter().zip(&wts) {
            let g = shape_grad(*qx, *qy);
            let w = *wx * *wy * hx * hy;
            for a in 0..4 {
                for b in a..4 {
                    let v = (g[a][0] * g[b][0]) / (hx * hx) + (g[a][1] * g[b][1]) / (hy * hy);
                    k[a][b] += w * v;
                }
            }
        }
    }
    mirror(&mut k);
    k
}

/// `int_cell N_a N_b` for a `hx x hy` cell, by 2x2 Gauss.
pub fn mass<T: Real>(hx: T, hy: T) -> Local4<T> {
    let (pts, wts) = gauss2::<T>();
    let mut m = [[T::zero(); 4]; 4];
    for (qx, wx) in pts.iter().zip(&wts) {
        for (qy, wy) in pts.iter().zip(&wts) {
            let n = shape(*qx, *qy);
            let w = *wx * *wy * hx * hy;
            for a in 0..4 {
                for b in a..4 {
                    m[a][b] += w * n[a] * n[b];
                }
            }
        }
    }
    mirror(&mut m);
    m
}

fn mirror<T: Copy>(m: &mut Local4<T>) {
    for a in 0..4 {
        for b in 0..a {
            m[a][b] = m[b][a];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_stiffness() {
        let k = stiffness::<f64>(1.0, 1.0);
        for a in 0..4 {
            assert!((k[a][a] - 2.0 / 3.0).abs() < 1e-15);
            assert!((k[a][(a + 2) % 4] + 1.0 / 3.0).abs() < 1e-15);
            assert!((k[a][(a + 1) % 4] + 1.0 / 6.0).abs() < 1e-15);
            assert!(k[a].iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn unit_square_mass() {
        let m = mass::<f64>(1.0, 1.0);
        let want = [[4.0, 2.0, 1.0, 2.0], [2.0, 4.0, 2.0, 1.0], [1.0, 2.0, 4.0, 2.0], [2.0, 1.0, 2.0, 4.0]];
        for a in 0..4 {
            for b in 0..4 {
                assert!((m[a][b] - want[a][b] / 36.0).abs() < 1e-15);
            }
        }
    }
}
