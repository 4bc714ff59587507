//! Quadrature engines: Gauss-Legendre on the tangent-mapped real line and
//! the uniform trapezoidal rule on the Brillouin torus with local subgrid
//! refinement near designated momenta.

use crate::error::{Error, Result};
use crate::geometry::{lattice_vectors, Momentum};
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::{Mutex, OnceLock};

/// How the frequency (k0) integral is carried out.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct K0Method {
    /// Initial Gauss-Legendre order on the tangent-mapped interval; the order
    /// is doubled until two successive estimates agree within the tolerance.
    pub order: usize,
    /// Absolute tolerance for the k0 integral.
    pub tol: f64,
}

impl Default for K0Method {
    fn default() -> Self {
        K0Method { order: 64, tol: 1e-9 }
    }
}

/// Local subgrid refinement of the Brillouin-zone trapezoid rule.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Refinement {
    /// Momenta around which cells are refined (torus metric).
    pub centers: Vec<Momentum>,
    /// Refinement radius.
    pub radius: f64,
    /// Subgrid factor per axis inside refined cells.
    pub factor: usize,
}

/// Grid specification shared by all Brillouin-zone integrators.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QuadratureSpec {
    /// Trapezoid points per reciprocal axis (even, >= 4).
    pub bz_grid: usize,
    pub k0_method: K0Method,
    pub refinement: Option<Refinement>,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            bz_grid: 96,
            k0_method: K0Method::default(),
            refinement: None,
        }
    }
}

impl QuadratureSpec {
    pub fn with_grid(grid: usize) -> Self {
        QuadratureSpec {
            bz_grid: grid,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bz_grid < 4 || self.bz_grid % 2 != 0 {
            return Err(Error::Config(format!(
                "bz_grid must be even and >= 4, got {}",
                self.bz_grid
            )));
        }
        if self.k0_method.tol <= 0.0 {
            return Err(Error::Config("k0 tolerance must be positive".into()));
        }
        if let Some(r) = &self.refinement {
            if r.factor == 0 || r.radius <= 0.0 {
                return Err(Error::Config("refinement factor/radius must be positive".into()));
            }
        }
        Ok(())
    }

    /// Doubled-resolution copy (refinement carried over unchanged).
    pub fn doubled(&self) -> Self {
        QuadratureSpec {
            bz_grid: self.bz_grid * 2,
            k0_method: self.k0_method,
            refinement: self.refinement.clone(),
        }
    }

    /// Half-resolution copy used for conservative error estimates.
    pub fn halved(&self) -> Self {
        QuadratureSpec {
            bz_grid: (self.bz_grid / 2).max(4),
            k0_method: self.k0_method,
            refinement: self.refinement.clone(),
        }
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1], cached per order.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<Mutex<BTreeMap<usize, (Vec<f64>, Vec<f64>)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(BTreeMap::new()));
    if let Some(hit) = cache.lock().unwrap().get(&order) {
        return hit.clone();
    }

    let n = order;
    let mut nodes = vec![0.0_f64; n];
    let mut weights = vec![0.0_f64; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Newton iteration from the Chebyshev estimate
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0_f64;
            let mut p1 = 0.0_f64;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j as f64 + 1.0) * x * p1 - j as f64 * p2) / (j as f64 + 1.0);
            }
            pp = n as f64 * (x * p0 - p1) / (x * x - 1.0);
            let dx = p0 / pp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    cache.lock().unwrap().insert(order, (nodes.clone(), weights.clone()));
    (nodes, weights)
}

fn tangent_map_pass<const M: usize>(
    f: &dyn Fn(f64) -> [Complex64; M],
    scale: f64,
    order: usize,
) -> ([Complex64; M], f64) {
    let (nodes, weights) = gauss_legendre(order);
    let mut acc = [Complex64::new(0.0, 0.0); M];
    let mut max_abs_k0 = 0.0_f64;
    for (x, w) in nodes.iter().zip(weights.iter()) {
        let theta = FRAC_PI_2 * x;
        let val = theta.tan();
        let k0 = scale * val;
        let jac = FRAC_PI_2 * scale * (1.0 + val * val);
        let v = f(k0);
        for (a, vi) in acc.iter_mut().zip(v.iter()) {
            *a += vi * (w * jac);
        }
        max_abs_k0 = max_abs_k0.max(k0.abs());
    }
    (acc, max_abs_k0)
}

fn max_norm<const M: usize>(a: &[Complex64; M], b: &[Complex64; M]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Componentwise real-line integral of an array-valued integrand via the
/// substitution k0 = scale * tan(theta) and Gauss-Legendre in theta, doubling
/// the order until two successive estimates agree (max norm) within
/// max(tol_abs, tol_rel * |result|).
///
/// The integrand must decay at least cubically. The region beyond the largest
/// sampled node is bounded by the cubic-decay tail estimate |f(K)| K / 2 per
/// side and added to the achieved-error bookkeeping.
pub fn integrate_real_line_many<const M: usize>(
    f: impl Fn(f64) -> [Complex64; M],
    tol_abs: f64,
    tol_rel: f64,
    scale: f64,
) -> Result<([Complex64; M], f64)> {
    let f = &f;
    let scale = if scale.is_finite() && scale > 0.0 { scale } else { 1.0 };
    let tail_at = |k: f64| -> f64 {
        let fp = f(k);
        let fm = f(-k);
        let np = fp.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let nm = fm.iter().map(|z| z.norm()).fold(0.0, f64::max);
        0.5 * k * (np + nm)
    };
    let mut order = 32usize;
    let (mut prev, mut kmax) = tangent_map_pass(f, scale, order);
    let max_order = 16384usize;
    while order < max_order {
        order *= 2;
        let (cur, km) = tangent_map_pass(f, scale, order);
        kmax = km;
        let err = max_norm(&cur, &prev) + tail_at(kmax);
        let mag = cur.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if err <= tol_abs.max(tol_rel * mag) {
            return Ok((cur, err));
        }
        prev = cur;
    }
    Err(Error::NonConvergence {
        best: prev[0].re,
        achieved: tail_at(kmax),
        requested: tol_abs,
    })
}

/// Scalar wrapper around [`integrate_real_line_many`] with absolute
/// tolerance semantics.
pub fn integrate_real_line_scaled(
    f: impl Fn(f64) -> Complex64,
    tol: f64,
    scale: f64,
) -> Result<(Complex64, f64)> {
    integrate_real_line_many(|k0| [f(k0)], tol, 0.0, scale).map(|(v, e)| (v[0], e))
}

/// `integrate_real_line_scaled` with unit scale.
pub fn integrate_real_line(f: impl Fn(f64) -> Complex64, tol: f64) -> Result<Complex64> {
    integrate_real_line_scaled(f, tol, 1.0).map(|(v, _)| v)
}

/// Componentwise Brillouin-zone trapezoid rule for a fallible array-valued
/// integrand; see [`integrate_bz`] for the quadrature layout.
pub fn integrate_bz_try_many<const M: usize>(
    f: impl Fn(Momentum) -> Result<[Complex64; M]> + Sync,
    spec: &QuadratureSpec,
) -> Result<[Complex64; M]> {
    let lat = lattice_vectors();
    let n = spec.bz_grid;
    let cell_weight = lat.bz_area() / (n * n) as f64;

    let rows: Vec<[Complex64; M]> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<[Complex64; M]> {
            let mut row_acc = [Complex64::new(0.0, 0.0); M];
            let add = |acc: &mut [Complex64; M], v: [Complex64; M], w: f64| {
                for (a, vi) in acc.iter_mut().zip(v.iter()) {
                    *a += vi * w;
                }
            };
            for j in 0..n {
                let alpha = [i as f64 / n as f64, j as f64 / n as f64];
                let k = lat.momentum(alpha);
                let refined = spec.refinement.as_ref().filter(|r| {
                    r.centers
                        .iter()
                        .any(|c| lat.torus_distance(k, *c) <= r.radius)
                });
                match refined {
                    None => add(&mut row_acc, f(k)?, 1.0),
                    Some(r) => {
                        // closed composite trapezoid over the cell: sub-nodes
                        // include all cell corners so the rule stays
                        // conforming at the patch boundary
                        let fac = r.factor;
                        let mut sub = [Complex64::new(0.0, 0.0); M];
                        let edge_w = |u: usize| if u == 0 || u == fac { 0.5 } else { 1.0 };
                        for u in 0..=fac {
                            for v in 0..=fac {
                                let sk = lat.momentum([
                                    (i as f64 + u as f64 / fac as f64) / n as f64,
                                    (j as f64 + v as f64 / fac as f64) / n as f64,
                                ]);
                                add(&mut sub, f(sk)?, edge_w(u) * edge_w(v));
                            }
                        }
                        add(&mut row_acc, sub, 1.0 / (fac * fac) as f64);
                    }
                }
            }
            Ok(row_acc)
        })
        .collect::<Result<Vec<_>>>()?;

    // row-major deterministic reduction
    let mut total = [Complex64::new(0.0, 0.0); M];
    for r in rows {
        for (t, v) in total.iter_mut().zip(r.iter()) {
            *t += v;
        }
    }
    for t in total.iter_mut() {
        *t *= cell_weight;
    }
    Ok(total)
}

/// Uniform trapezoid rule over the Brillouin torus in the reciprocal
/// coordinates (alpha1, alpha2) in [0,1)^2, with optional subgrid refinement
/// of the cells within `refinement.radius` of the listed centers.
///
/// Normalised so integrate_bz(|1|) = |b1 x b2|. Rows are reduced in
/// row-major order regardless of worker scheduling, so runs are
/// bit-reproducible.
pub fn integrate_bz(f: impl Fn(Momentum) -> Complex64 + Sync, spec: &QuadratureSpec) -> Complex64 {
    integrate_bz_try_many(|k| Ok([f(k)]), spec)
        .expect("infallible integrand")[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::dot;

    #[test]
    fn gauss_legendre_low_orders() {
        // integral of x^2 over [-1,1] = 2/3
        let (x, w) = gauss_legendre(8);
        let s: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi * xi).sum();
        assert!((s - 2.0 / 3.0).abs() < 1e-14);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-13);
    }

    #[test]
    fn real_line_lorentzian_squared() {
        // residue calculus: int dz (z^2+1)^-2 = pi/2
        let (v, err) = integrate_real_line_scaled(
            |z| Complex64::new(1.0 / (z * z + 1.0).powi(2), 0.0),
            1e-10,
            1.0,
        )
        .unwrap();
        assert!((v.re - FRAC_PI_2).abs() < 1e-10, "got {} err {err}", v.re);
        assert!(v.im.abs() < 1e-12);
    }

    #[test]
    fn real_line_odd_integrand() {
        let v = integrate_real_line(|z| Complex64::new(z / (z * z + 1.0).powi(2), 0.0), 1e-10)
            .unwrap();
        assert!(v.norm() < 1e-10);
    }

    #[test]
    fn real_line_wider_lorentzian() {
        // int dz (z^2+4)^-2 = pi/16
        let v = integrate_real_line(|z| Complex64::new(1.0 / (z * z + 4.0).powi(2), 0.0), 1e-10)
            .unwrap();
        assert!((v.re - PI / 16.0).abs() < 1e-10, "got {}", v.re);
    }

    #[test]
    fn bz_constant_gives_bz_area() {
        let spec = QuadratureSpec::with_grid(12);
        let v = integrate_bz(|_| Complex64::new(1.0, 0.0), &spec);
        let lat = lattice_vectors();
        assert!((v.re - lat.bz_area()).abs() < 1e-12);
        assert!(v.im.abs() < 1e-14);
    }

    #[test]
    fn bz_fourier_mode_integrates_to_zero() {
        let lat = lattice_vectors();
        let spec = QuadratureSpec::with_grid(12);
        let v = integrate_bz(
            |k| Complex64::new(0.0, dot(k, lat.a[0])).exp(),
            &spec,
        );
        assert!(v.norm() < 1e-12, "got {v}");
    }

    #[test]
    fn bz_smooth_bump_self_convergence() {
        // smooth periodic bump; trapezoid error decays faster than any power
        let lat = lattice_vectors();
        let f = move |k: Momentum| {
            let a1 = dot(k, lat.a[0]);
            let a2 = dot(k, lat.a[1]);
            Complex64::new((a1.cos() + 0.3 * (2.0 * a2).sin()).exp(), 0.0)
        };
        let c8 = integrate_bz(f, &QuadratureSpec::with_grid(8));
        let c16 = integrate_bz(f, &QuadratureSpec::with_grid(16));
        let c32 = integrate_bz(f, &QuadratureSpec::with_grid(32));
        let e1 = (c16 - c8).norm();
        let e2 = (c32 - c16).norm();
        assert!(e2 <= e1 / 4.0, "e1 = {e1}, e2 = {e2}");
        assert!(e2 < 1e-8);
    }

    #[test]
    fn bz_refinement_exact_on_constant() {
        // subcell weights must sum to the cell weight exactly
        let refined = integrate_bz(
            |_| Complex64::new(1.0, 0.0),
            &QuadratureSpec {
                bz_grid: 12,
                k0_method: K0Method::default(),
                refinement: Some(Refinement {
                    centers: vec![crate::geometry::dirac_points().0],
                    radius: 1.2,
                    factor: 4,
                }),
            },
        );
        let lat = lattice_vectors();
        assert!((refined.re - lat.bz_area()).abs() < 1e-11);
    }

    #[test]
    fn bz_refinement_resolves_sharp_peak() {
        // periodic peak at the Dirac point, width ~ 0.05: the refined coarse
        // grid must land far closer to the reference than the plain one
        let lat = lattice_vectors();
        let (kp, _) = crate::geometry::dirac_points();
        let f = move |k: Momentum| {
            let d = lat.torus_distance(k, kp);
            Complex64::new(1.0 / (d * d + 2.5e-3), 0.0)
        };
        let reference = integrate_bz(f, &QuadratureSpec::with_grid(768));
        let plain = integrate_bz(f, &QuadratureSpec::with_grid(48));
        let refined = integrate_bz(
            f,
            &QuadratureSpec {
                bz_grid: 48,
                k0_method: K0Method::default(),
                refinement: Some(Refinement {
                    centers: vec![kp],
                    radius: 1.0,
                    factor: 8,
                }),
            },
        );
        let err_plain = (plain - reference).norm();
        let err_refined = (refined - reference).norm();
        assert!(
            err_refined < err_plain / 5.0,
            "plain {err_plain:.3e}, refined {err_refined:.3e}"
        );
        assert!(err_refined < 5e-3 * reference.norm());
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let lat = lattice_vectors();
        let f = move |k: Momentum| {
            Complex64::new(dot(k, lat.a[0]).cos() * dot(k, lat.a[1]).sin(), 0.3)
        };
        let spec = QuadratureSpec::with_grid(32);
        let a = integrate_bz(f, &spec);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| integrate_bz(f, &spec));
        assert_eq!(a.re.to_bits(), b.re.to_bits());
        assert_eq!(a.im.to_bits(), b.im.to_bits());
    }
}
