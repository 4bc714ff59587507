//! Wick-rotated (imaginary-frequency) route to the spin conductivity.
//!
//! The conductivity is the 3D integral
//!
//! ```text
//! sigma_ij = -(2pi)^-3 int_R dk0 int_BZ dk  Tr( A^s_i A_0 A_j )
//! ```
//!
//! with the Green fiber G = (H(k) - (mu - i k0))^-1 and vertices
//! A_nu = [d_nu (H - (mu - i k0))] G, A^s_nu the S_z-symmetrised variant.
//! The frequency slot gives A_0 = i G. The trace decays as |k0|^-3, so the
//! frequency integral runs on the tangent-mapped line; the Brillouin-zone
//! integral is the uniform trapezoid with Dirac-point refinement. Per
//! momentum the fiber is diagonalised once and every k0 node reuses the
//! eigenpairs.

use crate::error::{Error, Result};
use crate::kubo::{default_refinement, ConductivityResult, Route};
use crate::model::{bloch_gradient, bloch_hamiltonian, spin_z, ModelParams};
use crate::numerics::linalg::dagger;
use crate::numerics::{eigh, integrate_bz_try_many, integrate_real_line_many, QuadratureSpec};
use crate::geometry::Momentum;
use crate::CMat;
use ndarray::Array2;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Green-function fiber G = (H(k) - (mu - i k0))^-1 at one (k0, k).
#[derive(Debug, Clone)]
pub struct GreenFiber {
    pub g: CMat,
    pub k0: f64,
    pub k: Momentum,
    pub mu: f64,
}

fn singular_check(p: &ModelParams, k0: f64, k: Momentum, energies: &[f64]) -> Result<()> {
    let dist = energies
        .iter()
        .map(|e| (e - p.mu).abs())
        .fold(f64::INFINITY, f64::min);
    if k0.abs() + dist <= 1e-12 {
        return Err(Error::SingularFiber { freq: k0, k0: k[0], k1: k[1] });
    }
    Ok(())
}

/// Green fiber from the eigenpairs of H(k).
pub fn green_fiber(p: &ModelParams, k0: f64, k: Momentum) -> Result<GreenFiber> {
    let eigen = eigh(&bloch_hamiltonian(p, k))?;
    singular_check(p, k0, k, &eigen.eigenvalues)?;
    let v = &eigen.eigenvectors;
    let n = eigen.eigenvalues.len();
    let mut core = Array2::<Complex64>::zeros((n, n));
    for (i, e) in eigen.eigenvalues.iter().enumerate() {
        core[[i, i]] = 1.0 / Complex64::new(e - p.mu, k0);
    }
    Ok(GreenFiber {
        g: v.dot(&core).dot(&dagger(v)),
        k0,
        k,
        mu: p.mu,
    })
}

/// The five vertex fibers (A0, A1, A2, As1, As2) at one (k0, k).
pub fn vertex_fibers(p: &ModelParams, k0: f64, k: Momentum) -> Result<(CMat, CMat, CMat, CMat, CMat)> {
    let gf = green_fiber(p, k0, k)?;
    let (d1, d2) = bloch_gradient(p, k);
    let sz = spin_z();
    let ii = Complex64::new(0.0, 1.0);
    let a0 = gf.g.mapv(|z| z * ii);
    let a1 = d1.dot(&gf.g);
    let a2 = d2.dot(&gf.g);
    let sym = |d: &CMat| -> CMat { (d.dot(&sz) + sz.dot(d)).mapv(|z| z * 0.5).dot(&gf.g) };
    let as1 = sym(&d1);
    let as2 = sym(&d2);
    Ok((a0, a1, a2, as1, as2))
}

/// Tr(A^s_i A_0 A_j) for the four direction pairs, integrated over k0 at
/// fixed k, returned as [(1,1), (1,2), (2,1), (2,2)] plus the quadrature
/// error. The trace is evaluated in the eigenbasis of H(k):
/// Tr = i sum_{n,m} W^s_i[n,m] g_m^2 W_j[m,n] g_n with g_n = 1/(E_n - mu + i k0).
fn frequency_integral(
    p: &ModelParams,
    k: Momentum,
    tol: f64,
) -> Result<([Complex64; 4], f64)> {
    let eigen = eigh(&bloch_hamiltonian(p, k))?;
    let dist = eigen
        .eigenvalues
        .iter()
        .map(|e| (e - p.mu).abs())
        .fold(f64::INFINITY, f64::min);
    if dist <= 1e-9 {
        return Err(Error::SingularFiber { freq: 0.0, k0: k[0], k1: k[1] });
    }
    let spread = eigen
        .eigenvalues
        .iter()
        .map(|e| (e - p.mu).abs())
        .fold(1.0_f64, f64::max);
    // geometric mean balances the near-gap peak against the far-band poles,
    // keeping both visible under the tangent map
    let scale = (dist * spread).sqrt().clamp(1e-4, spread);

    let (d1, d2) = bloch_gradient(p, k);
    let sz = spin_z();
    let v = &eigen.eigenvectors;
    let vd = dagger(v);
    let to_basis = |m: &CMat| vd.dot(m).dot(v);
    let sym = |d: &CMat| (d.dot(&sz) + sz.dot(d)).mapv(|z| z * 0.5);
    let ws = [to_basis(&sym(&d1)), to_basis(&sym(&d2))];
    let wj = [to_basis(&d1), to_basis(&d2)];
    // k0-independent coefficient tables c[i][j][n][m] = Ws_i[n,m] Wj_j[m,n]
    let coef: [[[[Complex64; 4]; 4]; 2]; 2] = std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            std::array::from_fn(|nn| std::array::from_fn(|mm| ws[i][[nn, mm]] * wj[j][[mm, nn]]))
        })
    });
    let e: [f64; 4] = std::array::from_fn(|i| eigen.eigenvalues[i] - p.mu);

    let f = |k0: f64| -> [Complex64; 4] {
        let g: [Complex64; 4] = std::array::from_fn(|i| 1.0 / Complex64::new(e[i], k0));
        let g2: [Complex64; 4] = std::array::from_fn(|i| g[i] * g[i]);
        let mut out = [Complex64::new(0.0, 0.0); 4];
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = Complex64::new(0.0, 0.0);
                for nn in 0..4 {
                    let mut inner = Complex64::new(0.0, 0.0);
                    for mm in 0..4 {
                        inner += coef[i][j][nn][mm] * g2[mm];
                    }
                    acc += inner * g[nn];
                }
                out[i * 2 + j] = acc * Complex64::new(0.0, 1.0);
            }
        }
        out
    };
    // absolute floor plus a relative criterion tied to the integrand scale
    integrate_real_line_many(f, tol, 1e-8, scale)
}

/// Spin conductivity by the imaginary-frequency route.
pub fn spin_conductivity_matsubara(
    p: &ModelParams,
    spec: &QuadratureSpec,
) -> Result<ConductivityResult> {
    p.validate()?;
    spec.validate()?;
    let mut spec = spec.clone();
    if spec.refinement.is_none() {
        spec.refinement = default_refinement(p, spec.bz_grid);
    }

    let tensor = |s: &QuadratureSpec| -> Result<[[f64; 2]; 2]> {
        let raw = integrate_bz_try_many(
            |k| frequency_integral(p, k, s.k0_method.tol).map(|(v, _)| v),
            s,
        )?;
        // overall orientation pinned once against the exactly solvable
        // spin-conserving limit (sigma_12 = +1/(2pi) in the topological
        // phase), so both momentum-space routes share one sign convention
        let norm = 1.0 / (2.0 * PI).powi(3);
        Ok([
            [(raw[0] * norm).re, (raw[1] * norm).re],
            [(raw[2] * norm).re, (raw[3] * norm).re],
        ])
    };

    // conservative error estimate from the half-resolution grid; the
    // reported value is the full-grid one
    let coarse = tensor(&spec.halved())?;
    let fine = tensor(&spec)?;
    let mut diff = 0.0_f64;
    for i in 0..2 {
        for j in 0..2 {
            diff = diff.max((coarse[i][j] - fine[i][j]).abs());
        }
    }
    // k0 tolerance contributes at most tol * |BZ| / (2pi)^3 on top
    let k0_term = spec.k0_method.tol * crate::geometry::lattice_vectors().bz_area()
        / (2.0 * PI).powi(3);
    let scale = fine[0][1].abs().max(1.0 / (2.0 * PI));
    if diff > 0.25 * scale {
        return Err(Error::NonConvergence {
            best: fine[0][1],
            achieved: diff,
            requested: 0.25 * scale,
        });
    }
    let result = ConductivityResult::assemble(fine, Route::Matsubara, spec, diff + k0_term, *p);
    result.check_invariants()?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::linalg::{frobenius_norm, identity, operator_norm, trace};
    use crate::spectrum::critical_energy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gapped_params() -> ModelParams {
        ModelParams::new(1.0, 0.3, 0.1, 0.1, 1.0, critical_energy(0.3, 0.1)).unwrap()
    }

    fn random_k(rng: &mut impl Rng) -> Momentum {
        [rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0)]
    }

    #[test]
    fn green_fiber_inversion_residual() {
        let p = gapped_params();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let k = random_k(&mut rng);
            let k0 = rng.gen_range(-5.0..5.0);
            let gf = green_fiber(&p, k0, k).unwrap();
            let h = bloch_hamiltonian(&p, k);
            let shifted = &h - &(identity(4).mapv(|z| z * Complex64::new(p.mu, -k0)));
            let resid = frobenius_norm(&(shifted.dot(&gf.g) - identity(4)));
            assert!(resid < 1e-12, "inversion residual {resid}");
        }
    }

    #[test]
    fn green_fiber_adjoint_relation() {
        let p = gapped_params();
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..50 {
            let k = random_k(&mut rng);
            let k0 = rng.gen_range(0.1..4.0);
            let gp = green_fiber(&p, k0, k).unwrap().g;
            let gm = green_fiber(&p, -k0, k).unwrap().g;
            let resid = frobenius_norm(&(dagger(&gp) - gm));
            assert!(resid < 1e-12);
        }
    }

    #[test]
    fn green_fiber_norm_bound() {
        let p = gapped_params();
        let k = [0.4, -1.1];
        for k0 in [1.0, 10.0, 100.0] {
            let g = green_fiber(&p, k0, k).unwrap().g;
            assert!(operator_norm(&g) <= 1.0 / k0 + 1e-12);
        }
    }

    #[test]
    fn vertex_a0_is_i_g() {
        let p = gapped_params();
        let k = [1.2, 0.3];
        let k0 = 0.7;
        let (a0, _, _, _, _) = vertex_fibers(&p, k0, k).unwrap();
        let g = green_fiber(&p, k0, k).unwrap().g;
        let resid = frobenius_norm(&(&a0 - &g.mapv(|z| z * Complex64::new(0.0, 1.0))));
        assert!(resid < 1e-14);
    }

    #[test]
    fn vertex_spin_blocks_without_rashba() {
        // A^s_i = +-(1/2) (charge vertex) per spin block at lambda_r = 0
        let p = ModelParams::new(1.0, 0.3, 0.1, 0.0, 0.0, 0.0).unwrap();
        let k = [0.9, -0.4];
        let k0 = 0.5;
        let (_, a1, _, as1, _) = vertex_fibers(&p, k0, k).unwrap();
        for (i, j) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
            assert!(as1[[i, j]].norm() < 1e-13);
            assert!(as1[[j, i]].norm() < 1e-13);
        }
        for i in 0..2 {
            for j in 0..2 {
                assert!((as1[[i, j]] - a1[[i, j]] * 0.5).norm() < 1e-12);
                assert!((as1[[i + 2, j + 2]] + a1[[i + 2, j + 2]] * 0.5).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn vertex_norm_decay() {
        let p = gapped_params();
        let k = [0.3, 0.8];
        let (d1, _) = bloch_gradient(&p, k);
        let c = operator_norm(&d1);
        for k0 in [10.0, 50.0, 200.0] {
            let (_, a1, _, _, _) = vertex_fibers(&p, k0, k).unwrap();
            assert!(operator_norm(&a1) <= c / k0 + 1e-12);
        }
    }

    #[test]
    fn trace_decays_at_least_cubically() {
        // integrability of the frequency integral needs |Tr| <~ k0^-3; for
        // this model the cubic coefficient Tr({d1H, S_z} d2H)/2 vanishes
        // identically, so the measured slope is -4
        let p = gapped_params();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..5 {
            let k = random_k(&mut rng);
            let tr = |k0: f64| -> f64 {
                let (a0, _, a2, as1, _) = vertex_fibers(&p, k0, k).unwrap();
                trace(&as1.dot(&a0).dot(&a2)).norm()
            };
            let (x1, x2) = (1e2, 1e4);
            let slope = ((tr(x2) / tr(x1)).ln()) / ((x2 / x1).ln());
            assert!(slope <= -2.9, "slope {slope}");
            assert!((slope + 4.0).abs() < 0.1, "slope {slope}");
        }
    }

    #[test]
    fn eigenbasis_trace_matches_vertex_product() {
        // the fast path must agree with the literal vertex product
        let p = gapped_params();
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..20 {
            let k = random_k(&mut rng);
            let k0 = rng.gen_range(-3.0..3.0);
            let (a0, a1, a2, as1, as2) = vertex_fibers(&p, k0, k).unwrap();
            let direct = [
                trace(&as1.dot(&a0).dot(&a1)),
                trace(&as1.dot(&a0).dot(&a2)),
                trace(&as2.dot(&a0).dot(&a1)),
                trace(&as2.dot(&a0).dot(&a2)),
            ];
            // reproduce the eigenbasis formula at a single frequency
            let eigen = eigh(&bloch_hamiltonian(&p, k)).unwrap();
            let v = &eigen.eigenvectors;
            let vd = dagger(v);
            let sz = spin_z();
            let (d1, d2) = bloch_gradient(&p, k);
            let sym = |d: &CMat| (d.dot(&sz) + sz.dot(d)).mapv(|z| z * 0.5);
            let ws = [vd.dot(&sym(&d1)).dot(v), vd.dot(&sym(&d2)).dot(v)];
            let wj = [vd.dot(&d1).dot(v), vd.dot(&d2).dot(v)];
            let g: Vec<Complex64> = eigen
                .eigenvalues
                .iter()
                .map(|e| 1.0 / Complex64::new(e - p.mu, k0))
                .collect();
            for i in 0..2 {
                for j in 0..2 {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for nn in 0..4 {
                        for mm in 0..4 {
                            acc += ws[i][[nn, mm]] * g[mm] * g[mm] * wj[j][[mm, nn]] * g[nn];
                        }
                    }
                    acc *= Complex64::new(0.0, 1.0);
                    let d = (acc - direct[i * 2 + j]).norm();
                    assert!(d < 1e-12, "mismatch {d} at ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn singular_fiber_rejected() {
        let lso = 0.3;
        let p = ModelParams::new(1.0, lso, lso, 0.0, 0.0, 0.0).unwrap();
        let (kp, _) = crate::geometry::dirac_points();
        match green_fiber(&p, 0.0, kp) {
            Err(Error::SingularFiber { .. }) => {}
            other => panic!("expected SingularFiber, got {other:?}"),
        }
    }
}
