//! Dense complex matrix helpers on top of `nalgebra`.

use alloc::vec::Vec;

use nalgebra::DMatrix;
pub use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

pub type CMatrix = DMatrix<Complex64>;

pub const TAU: f64 = core::f64::consts::TAU;

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `exp(i * theta)`.
#[inline]
pub fn cis(theta: f64) -> Complex64 {
    Complex64::new(theta.cos(), theta.sin())
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Kronecker product with `a` as the slow (leftmost) factor.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Largest elementwise `|m - m^dagger|`.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Largest elementwise `|a - b|`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues in ascending
/// order and orthonormal eigenvectors as columns.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// `exp(-2 pi i H t)` for Hermitian `H` (GHz) and `t` (ns), given its
/// eigen-decomposition.
pub fn propagator_from_eigen(values: &[f64], vectors: &CMatrix, t: f64) -> CMatrix {
    let n = values.len();
    let mut scaled = vectors.clone();
    for (j, &e) in values.iter().enumerate() {
        let phase = cis(-TAU * e * t);
        for i in 0..n {
            scaled[(i, j)] *= phase;
        }
    }
    scaled * vectors.adjoint()
}

/// `U rho U^dagger`.
pub fn conjugate(u: &CMatrix, rho: &CMatrix) -> CMatrix {
    u * rho * u.adjoint()
}

/// Phase-insensitive distance between two unitaries:
/// `min_theta max_ij |a - e^{i theta} b|`, using the phase that aligns the
/// largest-magnitude entries.
pub fn distance_up_to_phase(a: &CMatrix, b: &CMatrix) -> f64 {
    let overlap = trace(&(b.adjoint() * a));
    let phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    max_abs_diff(a, &(b * phase))
}
