//! Chern and spin Chern numbers, and the deviation of the spin conductivity
//! from quantisation with its quadratic-scaling fit.
//!
//! The Chern number of a projector fiber is computed with the plaquette
//! link-variable method on the uniform reciprocal grid: per plaquette the
//! principal-branch phase of the four-link product of occupied-frame overlap
//! determinants, summed and divided by 2 pi. The orientation is fixed so that
//! the spin-conserving conductivity satisfies sigma_12 = S-Chern / (2 pi),
//! the same convention as the curvature integral used by the Kubo route.

use crate::error::{Error, Result};
use crate::geometry::{lattice_vectors, Momentum};
use crate::kubo::spin_conductivity_kubo;
use crate::model::{spin_commutator_triple_norm, ModelParams};
use crate::numerics::{eigh, QuadratureSpec};
use crate::spectrum::{critical_curve, critical_energy, is_insulator};
use crate::CMat;
use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Outcome of a plaquette Chern computation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChernResult {
    pub value: i64,
    /// Distance of the pre-rounding plaquette sum from the nearest integer.
    pub curvature_l1_residual: f64,
    pub grid: usize,
}

/// Occupied frame of a projector matrix: eigenvectors with eigenvalue > 1/2.
/// The rank is fixed by the rounded trace.
fn occupied_frame(projector: &CMat) -> Result<CMat> {
    let eig = eigh(projector)?;
    let n = projector.nrows();
    let rank = eig
        .eigenvalues
        .iter()
        .map(|v| v.round() as i64)
        .sum::<i64>()
        .max(0) as usize;
    let mut frame = Array2::<Complex64>::zeros((n, rank));
    let mut col = 0;
    for band in 0..n {
        if eig.eigenvalues[band] > 0.5 {
            if col == rank {
                return Err(Error::Internal("projector rank mismatch".into()));
            }
            frame.column_mut(col).assign(&eig.eigenvectors.column(band));
            col += 1;
        }
    }
    if col != rank {
        return Err(Error::Internal(format!(
            "projector rank mismatch: trace says {rank}, eigenvalues give {col}"
        )));
    }
    Ok(frame)
}

fn det_small(m: &CMat) -> Complex64 {
    match m.nrows() {
        0 => Complex64::new(1.0, 0.0),
        1 => m[[0, 0]],
        2 => m[[0, 0]] * m[[1, 1]] - m[[0, 1]] * m[[1, 0]],
        n => {
            // Gaussian elimination with partial pivoting
            let mut a = m.clone();
            let mut det = Complex64::new(1.0, 0.0);
            for i in 0..n {
                let mut piv = i;
                for r in (i + 1)..n {
                    if a[[r, i]].norm() > a[[piv, i]].norm() {
                        piv = r;
                    }
                }
                if a[[piv, i]].norm() == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                if piv != i {
                    for c in 0..n {
                        let tmp = a[[i, c]];
                        a[[i, c]] = a[[piv, c]];
                        a[[piv, c]] = tmp;
                    }
                    det = -det;
                }
                det *= a[[i, i]];
                for r in (i + 1)..n {
                    let f = a[[r, i]] / a[[i, i]];
                    for c in i..n {
                        let sub = f * a[[i, c]];
                        a[[r, c]] -= sub;
                    }
                }
            }
            det
        }
    }
}

/// Overlap determinant det(F1^* F2) between two occupied frames.
fn link(f1: &CMat, f2: &CMat) -> Complex64 {
    det_small(&crate::numerics::linalg::dagger(f1).dot(f2))
}

const CHERN_ORIENTATION: f64 = 1.0;

/// Chern number of a projector fiber by the plaquette link-variable method.
///
/// `fiber` must yield a smooth (gapped) family of projectors; exact
/// periodicity of the fiber over the torus closes the grid without any phase
/// matching. A plaquette phase within 2% of the branch cut signals an
/// under-resolved grid and is reported as `RefineGrid`.
pub fn chern_number(
    fiber: impl Fn(Momentum) -> Result<CMat> + Sync,
    grid: usize,
) -> Result<ChernResult> {
    let lat = lattice_vectors();
    let frames: Vec<CMat> = (0..grid * grid)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / grid, idx % grid);
            let k = lat.momentum([i as f64 / grid as f64, j as f64 / grid as f64]);
            occupied_frame(&fiber(k)?)
        })
        .collect::<Result<Vec<_>>>()?;

    let at = |i: usize, j: usize| &frames[(i % grid) * grid + (j % grid)];
    let phases: Vec<f64> = (0..grid * grid)
        .into_par_iter()
        .map(|idx| -> Result<f64> {
            let (i, j) = (idx / grid, idx % grid);
            let u1 = link(at(i, j), at(i + 1, j));
            let u2 = link(at(i + 1, j), at(i + 1, j + 1));
            let u3 = link(at(i + 1, j + 1), at(i, j + 1));
            let u4 = link(at(i, j + 1), at(i, j));
            let prod = u1 * u2 * u3 * u4;
            if prod.norm() < 1e-12 {
                return Err(Error::RefineGrid {
                    phase: 0.0,
                    margin: prod.norm(),
                    grid,
                });
            }
            let phase = prod.arg();
            if (phase.abs() - PI).abs() < 0.02 * PI {
                return Err(Error::RefineGrid {
                    phase,
                    margin: (phase.abs() - PI).abs(),
                    grid,
                });
            }
            Ok(phase)
        })
        .collect::<Result<Vec<_>>>()?;

    let total: f64 = phases.iter().sum::<f64>() * CHERN_ORIENTATION / (2.0 * PI);
    let value = total.round();
    let residual = (total - value).abs();
    if residual > 0.05 {
        return Err(Error::RefineGrid {
            phase: total,
            margin: residual,
            grid,
        });
    }
    Ok(ChernResult {
        value: value as i64,
        curvature_l1_residual: residual,
        grid,
    })
}

/// Chern number of the Fermi projector of the full four-band fiber.
pub fn chern_of_params(p: &ModelParams, grid: usize) -> Result<ChernResult> {
    chern_number(|k| Ok(crate::kubo::fermi_projector(p, k)?.projector), grid)
}

/// Spin-block sub-projector of the spin-conserving model, embedded in 4x4.
fn spin_block_projector(p_sc: &ModelParams, k: Momentum, spin_down: bool) -> Result<CMat> {
    let pf = crate::kubo::fermi_projector(p_sc, k)?;
    let off = if spin_down { 2 } else { 0 };
    let mut out = Array2::<Complex64>::zeros((4, 4));
    for i in 0..2 {
        for j in 0..2 {
            out[[i + off, j + off]] = pf.projector[[i + off, j + off]];
        }
    }
    Ok(out)
}

/// Spin Chern number through the spin-conserving projector: the model is
/// evaluated with the Rashba coupling switched off and
/// S-Chern = (Chern(up block) - Chern(down block)) / 2.
pub fn spin_chern(p: &ModelParams, grid: usize) -> Result<i64> {
    let p_sc = p.spin_conserving();
    let up = chern_number(|k| spin_block_projector(&p_sc, k, false), grid)?;
    let down = chern_number(|k| spin_block_projector(&p_sc, k, true), grid)?;
    if up.value + down.value != 0 {
        return Err(Error::Internal(format!(
            "spin blocks are not time-reversal partners: {} vs {}",
            up.value, down.value
        )));
    }
    Ok((up.value - down.value) / 2)
}

/// One point of the deviation-from-quantisation scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeviationPoint {
    pub lambda_r: f64,
    /// | sigma_12 - S-Chern / (2 pi) |.
    pub deviation: f64,
    pub sigma_12: f64,
    pub spin_chern: i64,
    /// ||| [H, S_z] ||| at these parameters.
    pub commutator_norm: f64,
}

/// Result of the quadratic-scaling fit of the deviation against lambda_r.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeviationScaling {
    pub slope: f64,
    pub intercept: f64,
    pub points: Vec<DeviationPoint>,
}

/// Scan dev(lambda_r) = | sigma_12(kubo) - S-Chern/(2 pi) | at fixed distance
/// m from the upper critical curve and fit log dev against log lambda_r.
///
/// The staggering is re-anchored per lambda_r: w = w_c^+(lso, lr) + m with
/// m = p0.w - w_c^+(p0.lambda_so, p0.lambda_r); mu follows the critical
/// energy. Every point must be insulating.
pub fn deviation_scaling(
    p0: &ModelParams,
    lambda_r_values: &[f64],
    spec: &QuadratureSpec,
) -> Result<DeviationScaling> {
    p0.validate()?;
    if lambda_r_values.is_empty() {
        return Err(Error::InvalidParams("empty lambda_r ladder".into()));
    }
    for lr in lambda_r_values {
        if *lr <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "lambda_r values must be positive, got {lr}"
            )));
        }
    }
    let m = p0.w - critical_curve(p0.lambda_so, p0.lambda_r).0;
    if m == 0.0 {
        return Err(Error::InvalidParams(
            "p0 sits exactly on the critical curve; the deviation scan needs m != 0".into(),
        ));
    }

    let chern_grid = 48usize;
    let mut points = Vec::with_capacity(lambda_r_values.len());
    for &lr in lambda_r_values {
        let p = ModelParams {
            lambda_r: lr,
            w: critical_curve(p0.lambda_so, lr).0 + m,
            mu: critical_energy(p0.lambda_so, lr),
            ..*p0
        };
        if !is_insulator(&p, 48)? {
            return Err(Error::Phase(format!(
                "deviation scan point lambda_r = {lr} is not insulating"
            )));
        }
        let cond = spin_conductivity_kubo(&p, spec)?;
        let sc = spin_chern(&p, chern_grid)?;
        let dev = (cond.sigma[0][1] - sc as f64 / (2.0 * PI)).abs();
        points.push(DeviationPoint {
            lambda_r: lr,
            deviation: dev,
            sigma_12: cond.sigma[0][1],
            spin_chern: sc,
            commutator_norm: spin_commutator_triple_norm(&p, 48),
        });
    }

    let (slope, intercept) = log_log_fit(points.iter().map(|pt| (pt.lambda_r, pt.deviation)))?;
    Ok(DeviationScaling { slope, intercept, points })
}

fn log_log_fit(points: impl Iterator<Item = (f64, f64)>) -> Result<(f64, f64)> {
    let data: Vec<(f64, f64)> = points
        .filter(|(_, y)| *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if data.len() < 2 {
        return Err(Error::InvalidParams(
            "need at least two nonzero deviations for the log-log fit".into(),
        ));
    }
    let n = data.len() as f64;
    let sx: f64 = data.iter().map(|d| d.0).sum();
    let sy: f64 = data.iter().map(|d| d.1).sum();
    let sxx: f64 = data.iter().map(|d| d.0 * d.0).sum();
    let sxy: f64 = data.iter().map(|d| d.0 * d.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(Error::InvalidParams("degenerate abscissae in fit".into()));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    Ok((slope, intercept))
}
