//! Behaviour of the spin conductivity across the topological transition:
//! the singular propagator near the Dirac point, the closed-form trace
//! identity behind the jump, the closed-form jump itself, and its numerical
//! extraction by extrapolation in the distance m = w - w_c^+ from the
//! critical curve.

use crate::error::{Error, Result};
use crate::geometry::dirac_points;
use crate::matsubara::spin_conductivity_matsubara;
use crate::model::{bloch_gradient, spin_z, ModelParams};
use crate::numerics::{K0Method, QuadratureSpec, Refinement};
use crate::spectrum::{critical_curve, critical_energy};
use crate::CMat;
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Closed-form coefficients of the singular propagator near the Dirac point,
/// as functions of (t, lambda_so, lambda_r, r):
/// alpha_pm = 4 lso^2 +- lr^2, alpha_tilde = 3 t lso - (3/2) lr^2 r, and the
/// entry coefficients z1..z5, v1, v2.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SingularCoefficients {
    pub t: f64,
    pub lambda_so: f64,
    pub lambda_r: f64,
    pub r: f64,
    pub alpha_plus: f64,
    pub alpha_minus: f64,
    pub alpha_tilde: f64,
    pub z1: f64,
    pub z2: f64,
    pub z3: f64,
    pub z4: f64,
    pub z5: f64,
    pub v1: f64,
    pub v2: f64,
}

impl SingularCoefficients {
    pub fn new(t: f64, lambda_so: f64, lambda_r: f64, r: f64) -> Result<Self> {
        if lambda_so == 0.0 || t <= 0.0 {
            return Err(Error::InvalidParams(
                "singular coefficients need t > 0 and lambda_so != 0".into(),
            ));
        }
        let lso2 = lambda_so * lambda_so;
        let lr2 = lambda_r * lambda_r;
        let alpha_plus = 4.0 * lso2 + lr2;
        let alpha_minus = 4.0 * lso2 - lr2;
        let alpha_tilde = 3.0 * t * lambda_so - 1.5 * lr2 * r;
        Ok(SingularCoefficients {
            t,
            lambda_so,
            lambda_r,
            r,
            alpha_plus,
            alpha_minus,
            alpha_tilde,
            z1: -lr2 / (4.0 * lso2) * alpha_minus,
            z2: lambda_r / (2.0 * lambda_so) * alpha_minus,
            z3: -alpha_plus * alpha_minus / (4.0 * lso2),
            z4: alpha_minus * alpha_minus / (4.0 * lso2),
            z5: alpha_minus,
            v1: -lambda_r / (4.0 * lso2) * alpha_tilde * alpha_minus,
            v2: alpha_tilde * alpha_minus / (2.0 * lambda_so),
        })
    }

    /// chi(m, q) = (alpha_- / 4 lso^2)(m^2 alpha_- - 2 i q0 m lr^2
    ///             + q0^2 alpha_+ + |q|^2 alpha_tilde^2).
    pub fn chi(&self, m: f64, q: [f64; 3]) -> Complex64 {
        let lso2 = self.lambda_so * self.lambda_so;
        let lr2 = self.lambda_r * self.lambda_r;
        let q_sq = q[1] * q[1] + q[2] * q[2];
        let inner = Complex64::new(
            m * m * self.alpha_minus + q[0] * q[0] * self.alpha_plus + q_sq * self.alpha_tilde * self.alpha_tilde,
            -2.0 * q[0] * m * lr2,
        );
        inner * (self.alpha_minus / (4.0 * lso2))
    }
}

/// The leading singular part S(m, q) of the Green fiber at the critical
/// chemical potential near the Dirac point, q = (q0, q1, q2). The second
/// basis slot decouples: row and column 2 vanish identically.
pub fn singular_green(c: &SingularCoefficients, m: f64, q: [f64; 3]) -> Result<CMat> {
    let chi = c.chi(m, q);
    if chi.norm() < 1e-300 {
        return Err(Error::SingularInput { m, q0: q[0], q1: q[1], q2: q[2] });
    }
    let i = Complex64::new(0.0, 1.0);
    let (q0, q1, q2) = (q[0], q[1], q[2]);
    let m_iq0 = Complex64::new(m, q0); // m + i q0
    let iq1_q2 = Complex64::new(q2, q1); // i q1 + q2
    let miq1_q2 = Complex64::new(q2, -q1); // -i q1 + q2

    let mut s = Array2::<Complex64>::zeros((4, 4));
    s[[0, 0]] = m_iq0 * c.z1;
    s[[0, 2]] = iq1_q2 * c.v1;
    s[[0, 3]] = m_iq0 * c.z2;
    s[[2, 0]] = miq1_q2 * c.v1;
    s[[2, 2]] = i * q0 * c.z3 + Complex64::new(m * c.z4, 0.0);
    s[[2, 3]] = miq1_q2 * c.v2;
    s[[3, 0]] = m_iq0 * c.z2;
    s[[3, 2]] = iq1_q2 * c.v2;
    s[[3, 3]] = m_iq0 * (-c.z5);
    Ok(s.mapv(|z| z / chi))
}

/// The trace Tr(A~^s_1 A~_0 A~_2) of the leading singular vertices, returned
/// together with its closed-form even and odd parts:
///
/// ```text
/// even = -3 m t at a-^2 / (4 lso chi^2)
/// odd  = -(3 t at^3 a-^3 / (16 lso^5 chi^3)) (a+ q0 - i m lr^2) q1 q2
/// ```
///
/// The matrix product is built independently from the model gradient at the
/// Dirac point, so equality of the two is a genuine re-verification of the
/// closed forms. Only the even part survives the q integration; the odd part
/// is odd in q1 and drops out of the conductivity jump.
pub fn singular_trace(
    c: &SingularCoefficients,
    m: f64,
    q: [f64; 3],
) -> Result<(Complex64, Complex64, Complex64)> {
    let chi = c.chi(m, q);
    if chi.norm() < 1e-300 {
        return Err(Error::SingularInput { m, q0: q[0], q1: q[1], q2: q[2] });
    }

    // d_nu[G^-1] at the Dirac point: i for nu = 0, dH otherwise
    let p = ModelParams {
        t: c.t,
        lambda_so: c.lambda_so,
        w: critical_curve(c.lambda_so, c.lambda_r).0,
        lambda_r: c.lambda_r,
        r: c.r,
        mu: critical_energy(c.lambda_so, c.lambda_r),
    };
    let (kp, _) = dirac_points();
    let (d1, d2) = bloch_gradient(&p, kp);
    let sz = spin_z();
    let s = singular_green(c, m, q)?;

    let i = Complex64::new(0.0, 1.0);
    let a0 = s.mapv(|z| z * i);
    let a2 = d2.dot(&s);
    let as1 = (d1.dot(&sz) + sz.dot(&d1)).mapv(|z| z * 0.5).dot(&s);
    let product = crate::numerics::linalg::trace(&as1.dot(&a0).dot(&a2));

    let lso = c.lambda_so;
    let at = c.alpha_tilde;
    let am = c.alpha_minus;
    let chi2 = chi * chi;
    let chi3 = chi2 * chi;
    let even = Complex64::new(-3.0 * m * c.t * at * am * am / (4.0 * lso), 0.0) / chi2;
    let odd = Complex64::new(c.alpha_plus * q[0], -m * c.lambda_r * c.lambda_r)
        * (-3.0 * c.t * at.powi(3) * am.powi(3) / (16.0 * lso.powi(5)))
        * q[1]
        * q[2]
        / chi3;
    Ok((even, odd, product))
}

/// Closed form of the spin-conductivity jump across the upper critical
/// curve: -(1/2pi)(1 + lr^2 r / (2 t lso - lr^2 r)).
pub fn jump_closed_form(t: f64, lambda_so: f64, lambda_r: f64, r: f64) -> Result<f64> {
    let denom = 2.0 * t * lambda_so - lambda_r * lambda_r * r;
    if denom.abs() < 1e-12 * (2.0 * t * lambda_so).abs().max(1e-12) {
        return Err(Error::SingularParameters);
    }
    Ok(-(1.0 / (2.0 * PI)) * (1.0 + lambda_r * lambda_r * r / denom))
}

/// Per-m record of the numerical jump extraction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JumpSample {
    pub m: f64,
    pub sigma_above: f64,
    pub sigma_below: f64,
    /// sigma(w_c^+ + m) - sigma(w_c^+ - m).
    pub difference: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JumpResult {
    pub delta: f64,
    pub per_m: Vec<JumpSample>,
    pub closed_form: f64,
}

/// Quadrature spec tuned for a near-critical run at distance m from the
/// transition: Dirac refinement radius tracking the cone feature 2m/(3t) and
/// a subgrid factor fine enough to resolve it.
pub fn near_critical_spec(base: &QuadratureSpec, t: f64, m: f64) -> QuadratureSpec {
    let lat = crate::geometry::lattice_vectors();
    let h = lat.b[0][0].hypot(lat.b[0][1]) / base.bz_grid as f64;
    let feature = (2.0 * m.abs() / (3.0 * t)).max(1e-6);
    let radius = (10.0 * feature).max(3.0 * h);
    let factor = ((5.0 * h / feature).ceil() as usize).clamp(8, 64);
    let (kp, km) = dirac_points();
    QuadratureSpec {
        bz_grid: base.bz_grid,
        k0_method: K0Method { order: base.k0_method.order, tol: base.k0_method.tol },
        refinement: Some(Refinement { centers: vec![kp, km], radius, factor }),
    }
}

/// Numerical jump extraction: sigma_12 is evaluated by the imaginary-time
/// route on both sides of the critical curve for each m in the ladder, and
/// the m -> 0 limit is taken by Richardson extrapolation on the two smallest
/// ladder entries (the per-m differences approach delta linearly in m).
pub fn jump_numeric(
    p_base: &ModelParams,
    m_ladder: &[f64],
    spec: &QuadratureSpec,
) -> Result<(f64, Vec<JumpSample>)> {
    p_base.validate()?;
    if m_ladder.len() < 2 {
        return Err(Error::InvalidParams("m ladder needs at least two entries".into()));
    }
    if m_ladder.windows(2).any(|w| w[1] >= w[0]) || m_ladder.iter().any(|m| *m <= 0.0) {
        return Err(Error::InvalidParams(
            "m ladder must be positive and strictly decreasing".into(),
        ));
    }

    let wc = critical_curve(p_base.lambda_so, p_base.lambda_r).0;
    let mu = critical_energy(p_base.lambda_so, p_base.lambda_r);
    let mut per_m = Vec::with_capacity(m_ladder.len());
    for &m in m_ladder {
        let run = |w: f64| -> Result<f64> {
            let p = ModelParams { w, mu, ..*p_base };
            let s = near_critical_spec(spec, p_base.t, m);
            Ok(spin_conductivity_matsubara(&p, &s)?.sigma[0][1])
        };
        let above = run(wc + m)?;
        let below = run(wc - m)?;
        per_m.push(JumpSample {
            m,
            sigma_above: above,
            sigma_below: below,
            difference: above - below,
        });
    }

    // the per-m differences must stabilise towards small m
    let diffs: Vec<f64> = per_m.windows(2).map(|w| (w[1].difference - w[0].difference).abs()).collect();
    if diffs.len() >= 2 && *diffs.last().unwrap() > 2.0 * diffs.first().unwrap() + 1e-3 {
        return Err(Error::NonConvergence {
            best: per_m.last().unwrap().difference,
            achieved: *diffs.last().unwrap(),
            requested: *diffs.first().unwrap(),
        });
    }

    // two-point Richardson on the smallest pair, cancelling the O(m) term
    let last = &per_m[per_m.len() - 1];
    let prev = &per_m[per_m.len() - 2];
    let ratio = prev.m / last.m;
    let delta = (ratio * last.difference - prev.difference) / (ratio - 1.0);
    Ok((delta, per_m))
}
