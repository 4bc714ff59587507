//! Band structure, local internal gap, closed-form critical curves and
//! phase classification.

use crate::error::Result;
use crate::geometry::{dirac_points, lattice_vectors, Momentum};
use crate::model::{fiber_eigen, ModelParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Phase classification of one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PhaseClass {
    /// Gapped at mu; carries the minimal distance from mu to the bands.
    Insulator { gap: f64 },
    /// Gap closes (within tolerance) at the listed momenta near the Dirac points.
    SemiMetal { closing: Vec<Momentum> },
    /// Gap closes away from the Dirac points.
    Metal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhasePoint {
    pub params: ModelParams,
    pub classification: PhaseClass,
    /// Momentum at which the mu-centered gap is smallest.
    pub min_gap_location: Momentum,
    /// The smallest mu-centered gap over the scanned grid.
    pub min_gap: f64,
}

/// Ascending eigenvalues of the Bloch fiber at k.
pub fn bands(p: &ModelParams, k: Momentum) -> Result<[f64; 4]> {
    let e = fiber_eigen(p, k)?.eigenvalues;
    Ok([e[0], e[1], e[2], e[3]])
}

/// Local internal spectral gap E3(k) - E2(k).
pub fn local_gap(p: &ModelParams, k: Momentum) -> Result<f64> {
    let e = bands(p, k)?;
    Ok((e[2] - e[1]).max(0.0))
}

/// Closed form of the local internal gap at the Dirac points:
/// | 2|lso| - |w| - sqrt(w^2 + lr^2) |  for |lr| <= 2 sqrt(lso^2 + |w lso|),
/// 2|w| otherwise.
pub fn local_gap_closed_form(lambda_so: f64, w: f64, lambda_r: f64) -> f64 {
    let lso = lambda_so.abs();
    if lambda_r.abs() <= 2.0 * (lambda_so * lambda_so + (w * lambda_so).abs()).sqrt() {
        (2.0 * lso - w.abs() - (w * w + lambda_r * lambda_r).sqrt()).abs()
    } else {
        2.0 * w.abs()
    }
}

/// The critical curves w_c^+- = +-[ |lso| - lr^2 / (4 |lso|) ]_+ on which the
/// internal gap closes at the Dirac points.
pub fn critical_curve(lambda_so: f64, lambda_r: f64) -> (f64, f64) {
    let wc = (lambda_so.abs() - lambda_r * lambda_r / (4.0 * lambda_so.abs())).max(0.0);
    (wc, -wc)
}

/// The critical energy mu_c: -lr^2/(4 lso) for |lr| <= 2 |lso|, else -lso.
pub fn critical_energy(lambda_so: f64, lambda_r: f64) -> f64 {
    if lambda_r.abs() <= 2.0 * lambda_so.abs() {
        -lambda_r * lambda_r / (4.0 * lambda_so)
    } else {
        -lambda_so
    }
}

/// Default tolerance below which a gap is treated as closed.
pub fn default_gap_tol(p: &ModelParams) -> f64 {
    1e-6 * p.t.max(1.0)
}

/// Scan the mu-centered gap g(k) = min(E3(k) - mu, mu - E2(k)) over a uniform
/// grid with subgrid refinement near the Dirac points, and classify the
/// parameter point.
///
/// The minimum is reduced deterministically (ties broken by lexicographic
/// momentum order). Because the phase picture is only guaranteed for small
/// Rashba coupling, callers should inspect `min_gap` rather than trust the
/// label blindly; the CLI reports the achieved margin.
pub fn classify_phase(p: &ModelParams, grid: usize, gap_tol: f64) -> Result<PhasePoint> {
    p.validate()?;
    let lat = lattice_vectors();
    let (kp, km) = dirac_points();
    let refine_radius = dirac_refinement_radius(p, grid);
    let factor = 8usize;

    struct Cand {
        gap: f64,
        alpha: [f64; 2],
        k: Momentum,
    }

    let best = (0..grid)
        .into_par_iter()
        .map(|i| -> Result<Cand> {
            let mut row_best = Cand {
                gap: f64::INFINITY,
                alpha: [0.0, 0.0],
                k: [0.0, 0.0],
            };
            let mut consider = |alpha: [f64; 2]| -> Result<()> {
                let k = lat.momentum(alpha);
                let e = bands(p, k)?;
                let g = (e[2] - p.mu).min(p.mu - e[1]);
                if g < row_best.gap {
                    row_best = Cand { gap: g, alpha, k };
                }
                Ok(())
            };
            for j in 0..grid {
                let alpha = [i as f64 / grid as f64, j as f64 / grid as f64];
                let k = lat.momentum(alpha);
                let near = lat.torus_distance(k, kp).min(lat.torus_distance(k, km))
                    <= refine_radius;
                if near {
                    for u in 0..factor {
                        for v in 0..factor {
                            consider([
                                (i as f64 + u as f64 / factor as f64) / grid as f64,
                                (j as f64 + v as f64 / factor as f64) / grid as f64,
                            ])?;
                        }
                    }
                } else {
                    consider(alpha)?;
                }
            }
            Ok(row_best)
        })
        .try_reduce(
            || Cand {
                gap: f64::INFINITY,
                alpha: [2.0, 2.0],
                k: [0.0, 0.0],
            },
            |a, b| {
                Ok(if (b.gap, b.alpha[0], b.alpha[1]) < (a.gap, a.alpha[0], a.alpha[1]) {
                    b
                } else {
                    a
                })
            },
        )?;

    let near_dirac = lat.torus_distance(best.k, kp).min(lat.torus_distance(best.k, km))
        <= refine_radius.max(2.0 * lat.bz_area().sqrt() / grid as f64);
    let classification = if best.gap > gap_tol {
        PhaseClass::Insulator { gap: best.gap }
    } else if near_dirac {
        let mut closing = Vec::new();
        for kf in [kp, km] {
            if local_gap(p, kf)? <= 16.0 * gap_tol.max(best.gap.abs()) + gap_tol {
                closing.push(kf);
            }
        }
        if closing.is_empty() {
            closing.push(best.k);
        }
        PhaseClass::SemiMetal { closing }
    } else {
        PhaseClass::Metal
    };

    Ok(PhasePoint {
        params: *p,
        classification,
        min_gap_location: best.k,
        min_gap: best.gap,
    })
}

/// Refinement radius near the Dirac points: max(10 gap / (3t), one grid cell).
pub fn dirac_refinement_radius(p: &ModelParams, grid: usize) -> f64 {
    let gap = local_gap_closed_form(p.lambda_so, p.w, p.lambda_r);
    let cell = 2.0 * std::f64::consts::PI / grid as f64;
    (10.0 * gap / (3.0 * p.t)).max(cell)
}

/// True when the point is insulating at its own chemical potential.
pub fn is_insulator(p: &ModelParams, grid: usize) -> Result<bool> {
    Ok(matches!(
        classify_phase(p, grid, default_gap_tol(p))?.classification,
        PhaseClass::Insulator { .. }
    ))
}
