mod common;

use cemgmsdg::numkernel::{
    conjugate_gradient, generalized_eig_sym, solve_spd, solve_spd_with, symmetric_eig_smallest, CsrMatrix,
    DenseMatrix, Ordering, SparseCholesky, SpdSolver,
};
use cemgmsdg::Error;
use common::*;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(n, n) * (n as f64)
}

fn to_dense(m: &DMatrix<f64>) -> DenseMatrix<f64> {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn to_csr(m: &DMatrix<f64>) -> CsrMatrix<f64> {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect();
    CsrMatrix::from_dense(&rows)
}

#[test]
fn sparse_solve_matches_dense_reference() {
    let a = random_spd(50, 1);
    let b = random_vec(50, 2);
    let want = a.clone().cholesky().unwrap().solve(&nalgebra::DVector::from_vec(b.clone()));
    let csr = to_csr(&a);
    for ordering in [Ordering::Natural, Ordering::ReverseCuthillMcKee] {
        let x = SpdSolver::new(&csr, ordering).unwrap().solve(&b, 1e-12).unwrap();
        let err: f64 = x.iter().zip(want.iter()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }
}

#[test]
fn orderings_give_the_same_solution() {
    let s = contrast(3, 4, 2);
    let coords: Vec<[usize; 2]> = (0..s.grid.total_dofs()).map(|d| s.grid.dofs.node_of(d)).collect();
    let b = &s.forms.load;
    let mut sols = Vec::new();
    for ordering in [Ordering::Natural, Ordering::ReverseCuthillMcKee, Ordering::NestedDissection(&coords)] {
        sols.push(SpdSolver::new(&s.forms.a, ordering).unwrap().solve(b, 1e-10).unwrap());
    }
    let scale = norm(&sols[0]);
    for x in &sols[1..] {
        assert!(norm(&sub(x, &sols[0])) < 1e-8 * scale);
    }
}

#[test]
fn iterative_and_direct_paths_agree() {
    let s = contrast(2, 4, 3);
    let direct = solve_spd(&s.forms.a, &s.forms.load, 1e-12).unwrap();
    let iterative = solve_spd_with(&s.forms.a, &s.forms.load, 1e-12, Ordering::Natural, 0).unwrap();
    let cg = conjugate_gradient(&s.forms.a, &s.forms.load, 1e-12, 100_000).unwrap();
    assert!(norm(&sub(&direct, &iterative)) < 1e-6 * norm(&direct));
    assert_eq!(iterative, cg);
}

#[test]
fn solves_are_deterministic() {
    let s = contrast(3, 4, 4);
    let x = solve_spd(&s.forms.a, &s.forms.load, 1e-10).unwrap();
    let y = solve_spd(&s.forms.a, &s.forms.load, 1e-10).unwrap();
    assert_eq!(x, y);
}

#[test]
fn indefinite_matrix_is_rejected() {
    let m = CsrMatrix::from_dense(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
    assert!(matches!(
        SparseCholesky::factor(&m, Ordering::Natural),
        Err(Error::NotPositiveDefinite { .. })
    ));
}

#[test]
fn standard_eigenpairs_match_reference() {
    let a = random_spd(30, 5);
    let mut want: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().cloned().collect();
    want.sort_by(f64::total_cmp);
    let got = symmetric_eig_smallest(&to_dense(&a), 6);
    for k in 0..6 {
        assert!((got.values[k] - want[k]).abs() < 1e-10 * want[k].abs().max(1.0));
        let v = nalgebra::DVector::from_vec(got.vectors[k].clone());
        assert!((v.norm() - 1.0).abs() < 1e-12);
        let res = &a * &v - &v * got.values[k];
        assert!(res.norm() < 1e-9 * want[29]);
    }
}

#[test]
fn generalized_eigenpairs_match_reference() {
    let n = 30;
    let a = random_spd(n, 6);
    let b = random_spd(n, 7);
    // Reference: B^{-1/2} A B^{-1/2} by nalgebra.
    let lb = b.clone().cholesky().unwrap();
    let linv = lb.l().try_inverse().unwrap();
    let c = &linv * &a * linv.transpose();
    let mut want: Vec<f64> = c.symmetric_eigen().eigenvalues.iter().cloned().collect();
    want.sort_by(f64::total_cmp);

    let count = 8;
    let got = generalized_eig_sym(&to_dense(&a), &to_dense(&b), count).unwrap();
    assert_eq!(got.len(), count);
    for k in 0..count {
        assert!((got.values[k] - want[k]).abs() < 1e-10 * want[k].abs());
        let v = nalgebra::DVector::from_vec(got.vectors[k].clone());
        let rq = v.dot(&(&a * &v)) / v.dot(&(&b * &v));
        assert!((rq - got.values[k]).abs() < 1e-10 * got.values[k]);
        let res = &a * &v - (&b * &v) * got.values[k];
        assert!(res.norm() < 1e-8 * a.norm() * v.norm());
        for l in 0..count {
            let w = nalgebra::DVector::from_vec(got.vectors[l].clone());
            let g = v.dot(&(&b * &w));
            let want = if k == l { 1.0 } else { 0.0 };
            assert!((g - want).abs() < 1e-10, "B-inner ({k},{l}) = {g}");
        }
        let first = got.vectors[k].iter().find(|x| x.abs() > 1e-12).unwrap();
        assert!(*first > 0.0);
    }
    for w in got.values.windows(2) {
        assert!(w[0] <= w[1]);
    }
}

#[test]
fn eigensolver_handles_repeated_eigenvalues() {
    let mut d = DMatrix::<f64>::identity(12, 12);
    d[(11, 11)] = 3.0;
    let got = symmetric_eig_smallest(&to_dense(&d), 12);
    for k in 0..11 {
        assert!((got.values[k] - 1.0).abs() < 1e-14);
    }
    for k in 0..12 {
        for l in 0..12 {
            let g: f64 = dot(&got.vectors[k], &got.vectors[l]);
            assert!((g - if k == l { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
    }
}

#[test]
fn eigensolver_is_deterministic() {
    let a = to_dense(&random_spd(25, 8));
    let b = to_dense(&random_spd(25, 9));
    let x = generalized_eig_sym(&a, &b, 5).unwrap();
    let y = generalized_eig_sym(&a, &b, 5).unwrap();
    assert_eq!(x.values, y.values);
    assert_eq!(x.vectors, y.vectors);
}
