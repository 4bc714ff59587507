//! Small complex-matrix helpers shared by the fiber pipelines.

use crate::numerics::eigh;
use crate::CMat;
use ndarray::Array2;
use num_complex::Complex64;

pub fn dagger(m: &CMat) -> CMat {
    let mut out = Array2::<Complex64>::zeros((m.ncols(), m.nrows()));
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out[[j, i]] = m[[i, j]].conj();
        }
    }
    out
}

pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    a.dot(b)
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a.dot(b) - b.dot(a)
}

pub fn anticommutator(a: &CMat, b: &CMat) -> CMat {
    a.dot(b) + b.dot(a)
}

pub fn trace(m: &CMat) -> Complex64 {
    m.diag().sum()
}

pub fn frobenius_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest deviation from Hermiticity, max_ij |M_ij - conj(M_ji)|.
pub fn hermiticity_residual(m: &CMat) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    worst
}

/// Operator norm (largest singular value), computed as sqrt of the largest
/// eigenvalue of M^* M.
pub fn operator_norm(m: &CMat) -> f64 {
    let gram = dagger(m).dot(m);
    match eigh(&gram) {
        Ok(res) => res.eigenvalues.last().copied().unwrap_or(0.0).max(0.0).sqrt(),
        // the Gram matrix is Hermitian psd by construction; fall back to the
        // Frobenius norm bound if the solver is pushed past its limits
        Err(_) => frobenius_norm(m),
    }
}

pub fn identity(n: usize) -> CMat {
    Array2::<Complex64>::eye(n)
}
