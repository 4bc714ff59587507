//! Dense complex Hermitian eigensolver.
//!
//! Two paths behind one entry point: cyclic Jacobi for the small fiber
//! matrices (n <= 8, all fiber work is 4x4) and Householder tridiagonalisation
//! followed by implicit-shift QL for the flake matrices (n up to ~4000). Both
//! return eigenvalues sorted ascending with an orthonormal set of column
//! eigenvectors.

use crate::error::{Error, Result};
use crate::CMat;
use ndarray::Array2;
use num_complex::Complex64;

/// Eigenvalues (ascending) and orthonormal eigenvectors (columns) of a
/// Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigenResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMat,
}

const JACOBI_CUTOFF: usize = 8;
const MAX_JACOBI_SWEEPS: usize = 60;
const MAX_QL_ITER: usize = 60;

fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigendecomposition of a complex Hermitian matrix.
///
/// The input is symmetrised internally; an asymmetry beyond 1e-10 relative to
/// the matrix norm is rejected as a caller bug.
pub fn eigh(m: &CMat) -> Result<HermitianEigenResult> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::Eigensolver {
            reason: format!("expected square matrix, got {}x{}", m.nrows(), m.ncols()),
            dim: n,
            norm: 0.0,
        });
    }
    let norm = frobenius(m).max(f64::MIN_POSITIVE);
    let mut asym = 0.0_f64;
    let mut a = Array2::<Complex64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let s = 0.5 * (m[[i, j]] + m[[j, i]].conj());
            asym = asym.max((m[[i, j]] - m[[j, i]].conj()).norm());
            a[[i, j]] = s;
        }
    }
    if asym > 1e-10 * norm.max(1e-300) && asym > 1e-14 {
        return Err(Error::Eigensolver {
            reason: format!("matrix not Hermitian: asymmetry {asym:.3e}"),
            dim: n,
            norm,
        });
    }

    let (mut vals, mut vecs) = if n <= JACOBI_CUTOFF {
        jacobi_hermitian(a)?
    } else {
        householder_ql(a)?
    };
    sort_pairs(&mut vals, &mut vecs);
    Ok(HermitianEigenResult {
        eigenvalues: vals,
        eigenvectors: vecs,
    })
}

fn sort_pairs(vals: &mut [f64], vecs: &mut CMat) {
    let n = vals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap());
    let sorted_vals: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
    let mut sorted_vecs = Array2::<Complex64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        sorted_vecs.column_mut(dst).assign(&vecs.column(src));
    }
    vals.copy_from_slice(&sorted_vals);
    *vecs = sorted_vecs;
}

/// Cyclic Jacobi on a Hermitian matrix. Each off-diagonal entry is
/// annihilated by a unitary 2x2 rotation U = D R where D absorbs the phase of
/// the entry and R is the classical symmetric Jacobi rotation.
fn jacobi_hermitian(mut a: CMat) -> Result<(Vec<f64>, CMat)> {
    let n = a.nrows();
    let mut v = Array2::<Complex64>::eye(n);
    let scale = frobenius(&a).max(f64::MIN_POSITIVE);

    for _sweep in 0..MAX_JACOBI_SWEEPS {
        let mut off = 0.0_f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[[p, q]].norm_sqr();
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            let vals = (0..n).map(|i| a[[i, i]].re).collect();
            return Ok((vals, v));
        }

        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                let mag = apq.norm();
                if mag <= 1e-18 * scale {
                    continue;
                }
                let app = a[[p, p]].re;
                let aqq = a[[q, q]].re;
                let phase = apq / mag; // e^{i phi}

                // Real rotation diagonalising [[app, mag], [mag, aqq]].
                let tau = (aqq - app) / (2.0 * mag);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // U = [[c, s], [-s e^{-i phi}, c e^{-i phi}]] on the (p, q) plane.
                let u00 = Complex64::new(c, 0.0);
                let u01 = Complex64::new(s, 0.0);
                let u10 = phase.conj() * (-s);
                let u11 = phase.conj() * c;

                // columns: A <- A U
                for r in 0..n {
                    let arp = a[[r, p]];
                    let arq = a[[r, q]];
                    a[[r, p]] = arp * u00 + arq * u10;
                    a[[r, q]] = arp * u01 + arq * u11;
                }
                // rows: A <- U^* A
                for cidx in 0..n {
                    let apc = a[[p, cidx]];
                    let aqc = a[[q, cidx]];
                    a[[p, cidx]] = u00.conj() * apc + u10.conj() * aqc;
                    a[[q, cidx]] = u01.conj() * apc + u11.conj() * aqc;
                }
                // exact zeros on the annihilated pair, keep diagonal real
                a[[p, q]] = Complex64::new(0.0, 0.0);
                a[[q, p]] = Complex64::new(0.0, 0.0);
                a[[p, p]] = Complex64::new(a[[p, p]].re, 0.0);
                a[[q, q]] = Complex64::new(a[[q, q]].re, 0.0);

                for r in 0..n {
                    let vrp = v[[r, p]];
                    let vrq = v[[r, q]];
                    v[[r, p]] = vrp * u00 + vrq * u10;
                    v[[r, q]] = vrp * u01 + vrq * u11;
                }
            }
        }
    }
    Err(Error::Eigensolver {
        reason: format!("Jacobi did not converge in {MAX_JACOBI_SWEEPS} sweeps"),
        dim: n,
        norm: scale,
    })
}

/// Householder reduction of a Hermitian matrix to real symmetric tridiagonal
/// form, followed by implicit-shift QL with eigenvector accumulation.
fn householder_ql(mut a: CMat) -> Result<(Vec<f64>, CMat)> {
    let n = a.nrows();
    let scale = frobenius(&a).max(f64::MIN_POSITIVE);
    let mut q = Array2::<Complex64>::eye(n);

    // Stage 1: tridiagonalise. After step k, column k below the first
    // subdiagonal is zero; the subdiagonal entry may still be complex.
    for k in 0..n.saturating_sub(2) {
        let mut xnorm2 = 0.0_f64;
        for i in (k + 1)..n {
            xnorm2 += a[[i, k]].norm_sqr();
        }
        let xnorm = xnorm2.sqrt();
        if xnorm <= 1e-300 {
            continue;
        }
        let x0 = a[[k + 1, k]];
        let phase = if x0.norm() > 0.0 {
            x0 / x0.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let alpha = -phase * xnorm;

        // v = x - alpha e1, H = I - beta v v^*
        let mut v: Vec<Complex64> = (k + 1..n).map(|i| a[[i, k]]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 <= 1e-300 {
            continue;
        }
        let beta = 2.0 / vnorm2;

        // w = beta * A v on the trailing block (rows/cols k+1..n)
        let nb = n - (k + 1);
        let mut w = vec![Complex64::new(0.0, 0.0); nb];
        for i in 0..nb {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..nb {
                acc += a[[k + 1 + i, k + 1 + j]] * v[j];
            }
            w[i] = acc * beta;
        }
        // kappa = (beta/2) v^* w ; u = w - kappa v ; A <- A - v u^* - u v^*
        let mut vw = Complex64::new(0.0, 0.0);
        for i in 0..nb {
            vw += v[i].conj() * w[i];
        }
        let kappa = vw * 0.5 * beta;
        let u: Vec<Complex64> = (0..nb).map(|i| w[i] - kappa * v[i]).collect();
        for i in 0..nb {
            for j in 0..nb {
                let delta = v[i] * u[j].conj() + u[i] * v[j].conj();
                a[[k + 1 + i, k + 1 + j]] -= delta;
            }
        }
        // first column/row of the block
        a[[k + 1, k]] = alpha;
        a[[k, k + 1]] = alpha.conj();
        for i in (k + 2)..n {
            a[[i, k]] = Complex64::new(0.0, 0.0);
            a[[k, i]] = Complex64::new(0.0, 0.0);
        }
        // accumulate Q <- Q H   (H acts on columns k+1..n)
        for r in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..nb {
                acc += q[[r, k + 1 + j]] * v[j];
            }
            acc *= beta;
            for j in 0..nb {
                q[[r, k + 1 + j]] -= acc * v[j].conj();
            }
        }
    }

    // Stage 2: unitary diagonal D with d_{i+1} = t_i d_i / |t_i| turns the
    // complex subdiagonal t_i into |t_i|; fold D into Q.
    let mut d = vec![0.0_f64; n];
    let mut e = vec![0.0_f64; n]; // e[i] couples i and i+1; e[n-1] unused
    let mut phase = vec![Complex64::new(1.0, 0.0); n];
    d[0] = a[[0, 0]].re;
    for i in 0..n - 1 {
        let t = a[[i + 1, i]];
        let mag = t.norm();
        phase[i + 1] = if mag > 0.0 { t * phase[i] / mag } else { phase[i] };
        e[i] = mag;
        d[i + 1] = a[[i + 1, i + 1]].re;
    }
    for (j, ph) in phase.iter().enumerate() {
        for r in 0..n {
            q[[r, j]] *= *ph;
        }
    }

    // Stage 3: implicit-shift QL on (d, e), rotations applied to Q's columns.
    ql_implicit(&mut d, &mut e, &mut q).map_err(|reason| Error::Eigensolver {
        reason,
        dim: n,
        norm: scale,
    })?;
    Ok((d, q))
}

fn ql_implicit(d: &mut [f64], e: &mut [f64], q: &mut CMat) -> std::result::Result<(), String> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    let eps = f64::EPSILON;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= eps * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_QL_ITER {
                return Err(format!("QL failed to converge at eigenvalue {l}"));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0_f64, 1.0_f64);
            let mut p = 0.0_f64;
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                // rotate columns i and i+1 of Q
                for row in 0..q.nrows() {
                    let qi = q[[row, i]];
                    let qi1 = q[[row, i + 1]];
                    q[[row, i + 1]] = qi * s + qi1 * c;
                    q[[row, i]] = qi * c - qi1 * s;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}
