//! Dense complex linear algebra for the small (≤ 64-dim) operators used everywhere.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Column-stacking vectorization, so that vec(AXB) = (Bᵀ ⊗ A) vec(X).
pub fn vectorize(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

pub fn unvectorize(v: &CVec, n: usize) -> CMat {
    CMat::from_column_slice(n, n, v.as_slice())
}

pub fn norm1(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    let nrm = norm1(a);
    let mut s = 0i32;
    if nrm > 0.25 {
        s = (nrm / 0.25).log2().ceil() as i32;
    }
    let scale = 0.5f64.powi(s);
    let b = a * C64::new(scale, 0.0);
    let mut result = CMat::identity(n, n);
    let mut term = CMat::identity(n, n);
    for k in 1..=30 {
        term = &term * &b * C64::new(1.0 / k as f64, 0.0);
        result += &term;
        if norm1(&term) <= f64::EPSILON * 1e-3 * norm1(&result) {
            break;
        }
    }
    for _ in 0..s {
        result = &result * &result;
    }
    result
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    frobenius(&(m - m.adjoint())) <= tol
}

pub fn trace(m: &CMat) -> C64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::new(herm);
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals
}

/// Right eigenpairs of a general complex matrix.
///
/// Eigenvalues come from the complex Schur form; each eigenvector is the
/// right singular vector of (M − λI) with the smallest singular value, which
/// stays well defined for the non-normal matrices met here.
pub fn eig_general(m: &CMat) -> Result<(Vec<C64>, CMat)> {
    let n = m.nrows();
    let schur = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Eigensolver("complex Schur iteration did not converge".into()))?;
    let vals: Vec<C64> = schur.eigenvalues().ok_or_else(|| {
        Error::Eigensolver("Schur form is not triangular".into())
    })?.iter().copied().collect();
    let mut vecs = CMat::zeros(n, n);
    for (k, &lam) in vals.iter().enumerate() {
        let shifted = m - CMat::identity(n, n) * lam;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.ok_or_else(|| Error::Eigensolver("SVD failed".into()))?;
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        let mut v: CVec = v_t.row(imin).adjoint();
        // fix the arbitrary phase: largest component real and positive
        let (jmax, _) = v
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (j, z)| if z.norm() > acc.1 { (j, z.norm()) } else { acc });
        let ph = v[jmax] / v[jmax].norm();
        v /= ph;
        let nv = v.norm();
        v /= C64::new(nv, 0.0);
        vecs.set_column(k, &v);
    }
    Ok((vals, vecs))
}

/// Left eigenvectors as the rows of R⁻¹ (biorthogonal to the columns of R).
pub fn left_eigenvectors(right: &CMat) -> Result<CMat> {
    right
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Eigensolver("eigenvector matrix is singular".into()))
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_pauli_rotation() {
        let theta = 0.7;
        let sx = CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
        let u = expm(&(sx * C64::new(0.0, -theta)));
        assert!((u[(0, 0)] - C64::new(theta.cos(), 0.0)).norm() < 1e-15);
        assert!((u[(0, 1)] - C64::new(0.0, -theta.sin())).norm() < 1e-15);
    }

    #[test]
    fn expm_large_norm_diagonal() {
        let d = CMat::from_diagonal(&CVec::from_vec(vec![c(-30.0, 2.0), c(4.0, -1.0)]));
        let u = expm(&d);
        let e0 = c(-30.0, 2.0).exp();
        let e1 = c(4.0, -1.0).exp();
        assert!((u[(0, 0)] - e0).norm() < 1e-12 * e0.norm().max(1e-300));
        assert!((u[(1, 1)] - e1).norm() < 1e-13 * e1.norm());
    }

    #[test]
    fn vec_identity() {
        let a = CMat::from_fn(3, 3, |i, j| c(i as f64 + 0.3, j as f64 - 1.0));
        let x = CMat::from_fn(3, 3, |i, j| c((i * j) as f64, 0.5 * i as f64));
        let b = CMat::from_fn(3, 3, |i, j| c(1.0 / (1.0 + i as f64 + j as f64), 0.2));
        let lhs = vectorize(&(&a * &x * &b));
        let rhs = kron(&b.transpose(), &a) * vectorize(&x);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn eig_non_normal() {
        let m = CMat::from_row_slice(3, 3, &[
            c(1.0, -0.5), c(2.0, 0.0), c(0.0, 0.1),
            c(0.0, 0.0), c(-1.0, -1.0), c(0.3, 0.0),
            c(0.5, 0.0), c(0.0, 0.0), c(2.0, -0.2),
        ]);
        let (vals, r) = eig_general(&m).unwrap();
        for k in 0..3 {
            let v = r.column(k).into_owned();
            assert!((&m * &v - &v * vals[k]).norm() < 1e-12);
        }
        let l = left_eigenvectors(&r).unwrap();
        assert!(max_abs_diff(&(&l * &r), &CMat::identity(3, 3)) < 1e-12);
    }
}
