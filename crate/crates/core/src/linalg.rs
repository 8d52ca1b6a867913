//! Dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const IM: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn r(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// e^{iθ}
#[inline]
pub fn cis(theta: f64) -> C64 {
    C64::from_polar(1.0, theta)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(n: usize) -> CMat {
    CMat::zeros(n, n)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn anticommutator(a: &CMat, b: &CMat) -> CMat {
    a * b + b * a
}

pub fn diag_real(d: &[f64]) -> CMat {
    CMat::from_diagonal(&CVec::from_iterator(d.len(), d.iter().map(|&x| r(x))))
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().iter().sum()
}

/// Largest element modulus.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// ‖M − M†‖ relative to max(1, ‖M‖), both as largest-element norms.
pub fn hermiticity_defect(m: &CMat) -> f64 {
    let d = max_abs(&(m - m.adjoint()));
    d / max_abs(m).max(1.0)
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * r(0.5)
}

/// ‖U†U − I‖ (largest element).
pub fn unitarity_defect(u: &CMat) -> f64 {
    max_abs(&(u.adjoint() * u - eye(u.nrows())))
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted ascending.
pub fn herm_eig(h: &CMat) -> (Vec<f64>, CMat) {
    let n = h.nrows();
    let se = SymmetricEigen::new(hermitian_part(h));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let vals = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vecs.set_column(k, &se.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Apply a real scalar function to a Hermitian matrix.
pub fn herm_fn(h: &CMat, f: impl Fn(f64) -> C64) -> CMat {
    let (vals, v) = herm_eig(h);
    let mut scaled = v.clone();
    for (k, &lam) in vals.iter().enumerate() {
        let z = f(lam);
        for x in scaled.column_mut(k).iter_mut() {
            *x *= z;
        }
    }
    scaled * v.adjoint()
}

/// exp(−i H t) for Hermitian H.
pub fn expm_herm(h: &CMat, t: f64) -> CMat {
    herm_fn(h, |lam| cis(-lam * t))
}

/// Eigen-decomposition of a unitary (normal) matrix via complex Schur.
/// Returns eigenvalues and an orthonormal eigenvector matrix.
pub fn unitary_eig(u: &CMat) -> (Vec<C64>, CMat) {
    let (q, t) = u.clone().schur().unpack();
    let vals = (0..u.nrows()).map(|i| t[(i, i)]).collect();
    (vals, q)
}

/// Euclidean projection of a real vector onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        css += uk;
        let t = (css - 1.0) / (k as f64 + 1.0);
        if uk - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Closest (Frobenius) density matrix: PSD with unit trace.
pub fn project_density(m: &CMat) -> CMat {
    let (vals, v) = herm_eig(m);
    let p = project_simplex(&vals);
    let mut scaled = v.clone();
    for (k, &pk) in p.iter().enumerate() {
        for x in scaled.column_mut(k).iter_mut() {
            *x *= pk;
        }
    }
    scaled * v.adjoint()
}

/// Fidelity between a density matrix and a pure state, ⟨ψ|ρ|ψ⟩.
pub fn expect_pure(rho: &CMat, psi: &CVec) -> f64 {
    (psi.adjoint() * rho * psi)[(0, 0)].re
}

pub fn outer(a: &CVec, b: &CVec) -> CMat {
    a * b.adjoint()
}

/// Row-major vectorization index used for vec(ρ): k = i·d + j.
pub fn vec_index(i: usize, j: usize, d: usize) -> usize {
    i * d + j
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_herm_matches_series_on_pauli() {
        let sx = CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
        let u = expm_herm(&sx, 0.3);
        assert!((u[(0, 0)] - r(0.3f64.cos())).norm() < 1e-14);
        assert!((u[(0, 1)] - c(0.0, -0.3f64.sin())).norm() < 1e-14);
    }

    #[test]
    fn simplex_projection_is_feasible() {
        let p = project_simplex(&[0.9, 0.4, -0.2, 0.05]);
        let s: f64 = p.iter().sum();
        assert!((s - 1.0).abs() < 1e-14);
        assert!(p.iter().all(|&x| x >= 0.0));
        assert_eq!(project_simplex(&[0.5, 0.5]), vec![0.5, 0.5]);
    }

    #[test]
    fn unitary_eig_recovers_phases() {
        let h = CMat::from_row_slice(2, 2, &[r(1.0), c(0.2, 0.1), c(0.2, -0.1), r(-0.5)]);
        let u = expm_herm(&h, 1.0);
        let (vals, q) = unitary_eig(&u);
        for (k, lam) in vals.iter().enumerate() {
            let col = q.column(k).into_owned();
            let res = &u * &col - &col * *lam;
            assert!(res.norm() < 1e-12);
            assert!((lam.norm() - 1.0).abs() < 1e-12);
        }
    }
}
