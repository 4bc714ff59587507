//! Extended Kane-Mele Bloch fiber and derived operators.
//!
//! Basis ordering of every 4x4 fiber is (A up, B up, A down, B down); all
//! matrix constants below depend on it. The fiber at momentum k is
//!
//! ```text
//!       | w + aSO(k)    Omega(k)     aR(k)        OmegaR(k)  |
//!       | conj Omega   -w - aSO(k)  -OmegaR(-k)   aR(k)      |
//!       | conj aR      -conj OmegaR(-k)  w - aSO(k)  Omega(k)|
//!       | conj OmegaR   conj aR      conj Omega  -w + aSO(k) |
//! ```
//!
//! with the scalar functions (dimerisation fixed in direction 3)
//!
//! ```text
//! Omega(k)  = t (e^{-i k.a2} + e^{i k.a1} + 1)
//! OmegaR(k) = (lambda_r/3)    sum_j e^{i 2pi(3-j)/3} e^{i k.(d_j - d_3)}
//! aSO(k)    = -(2 lambda_so / 3 sqrt3) sum_j sin(k.a_j)
//! aR(k)     = (2 lambda_r r / sqrt3)   sum_j e^{i 2pi(3-j)/3} sin(k.a_j)
//! ```
//!
//! The prefactors 1/(3 sqrt3) and 1/3 in the spin-orbit and Rashba terms are
//! fixed so that OmegaR(k_F^+) = lambda_r and aSO(k_F^+) = lambda_so exactly.
//! The fiber is periodic under k -> k + g for dual lattice vectors g; the
//! -OmegaR(-k) entries are evaluated by a literal second call at -k.

use crate::error::{Error, Result};
use crate::geometry::{dot, lattice_vectors, Momentum};
use crate::numerics::linalg::{commutator, frobenius_norm, operator_norm};
use crate::numerics::{eigh, HermitianEigenResult};
use crate::CMat;
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// The five couplings of the extended Kane-Mele model plus the chemical
/// potential, defining one insulator candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Nearest-neighbour hopping, t > 0.
    pub t: f64,
    /// Intrinsic spin-orbit coupling, nonzero.
    pub lambda_so: f64,
    /// Staggered sublattice potential.
    pub w: f64,
    /// Rashba coupling.
    pub lambda_r: f64,
    /// Relative strength of the next-to-nearest-neighbour Rashba term.
    pub r: f64,
    /// Chemical potential.
    pub mu: f64,
}

impl ModelParams {
    pub fn new(t: f64, lambda_so: f64, w: f64, lambda_r: f64, r: f64, mu: f64) -> Result<Self> {
        let p = ModelParams { t, lambda_so, w, lambda_r, r, mu };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0) {
            return Err(Error::InvalidParams(format!("t must be > 0, got {}", self.t)));
        }
        if self.lambda_so == 0.0 {
            return Err(Error::InvalidParams("lambda_so must be nonzero".into()));
        }
        for (name, v) in [
            ("t", self.t),
            ("lambda_so", self.lambda_so),
            ("w", self.w),
            ("lambda_r", self.lambda_r),
            ("r", self.r),
            ("mu", self.mu),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} is not finite")));
            }
        }
        Ok(())
    }

    /// Copy with the Rashba coupling switched off (the spin-commuting part).
    pub fn spin_conserving(&self) -> ModelParams {
        ModelParams { lambda_r: 0.0, ..*self }
    }

    /// Copy with mu set to the critical energy mu_c(lambda_so, lambda_r).
    pub fn at_critical_mu(&self) -> ModelParams {
        ModelParams {
            mu: crate::spectrum::critical_energy(self.lambda_so, self.lambda_r),
            ..*self
        }
    }
}

/// Fiber of S_z: diag(1/2, 1/2, -1/2, -1/2) in the basis (A up, B up, A down, B down).
pub fn spin_z() -> CMat {
    let mut s = Array2::<Complex64>::zeros((4, 4));
    for (i, v) in [0.5, 0.5, -0.5, -0.5].iter().enumerate() {
        s[[i, i]] = Complex64::new(*v, 0.0);
    }
    s
}

/// Phase factors e^{i 2pi (3-j)/3} for j = 1, 2, 3.
fn rashba_phases() -> [Complex64; 3] {
    let om = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
    [om * om, om, Complex64::new(1.0, 0.0)]
}

struct Scalars {
    omega: Complex64,
    omega_r: Complex64,
    alpha_so: f64,
    alpha_r: Complex64,
}

fn scalars(p: &ModelParams, k: Momentum) -> Scalars {
    let lat = lattice_vectors();
    let ph = rashba_phases();
    let i = Complex64::new(0.0, 1.0);

    let mut omega = Complex64::new(0.0, 0.0);
    let mut omega_r = Complex64::new(0.0, 0.0);
    let mut alpha_so = 0.0_f64;
    let mut alpha_r = Complex64::new(0.0, 0.0);
    for j in 0..3 {
        let dj3 = [lat.d[j][0] - lat.d[2][0], lat.d[j][1] - lat.d[2][1]];
        let e_d = (i * dot(k, dj3)).exp();
        let sin_a = dot(k, lat.a[j]).sin();
        omega += e_d;
        omega_r += ph[j] * e_d;
        alpha_so += sin_a;
        alpha_r += ph[j] * sin_a;
    }
    let s3 = 3.0_f64.sqrt();
    Scalars {
        omega: omega * p.t,
        omega_r: omega_r * (p.lambda_r / 3.0),
        alpha_so: alpha_so * (-2.0 * p.lambda_so / (3.0 * s3)),
        alpha_r: alpha_r * (2.0 * p.lambda_r * p.r / s3),
    }
}

/// Analytic gradient of the scalar functions.
fn scalar_gradients(p: &ModelParams, k: Momentum) -> [Scalars; 2] {
    let lat = lattice_vectors();
    let ph = rashba_phases();
    let i = Complex64::new(0.0, 1.0);
    let s3 = 3.0_f64.sqrt();

    std::array::from_fn(|axis| {
        let mut omega = Complex64::new(0.0, 0.0);
        let mut omega_r = Complex64::new(0.0, 0.0);
        let mut alpha_so = 0.0_f64;
        let mut alpha_r = Complex64::new(0.0, 0.0);
        for j in 0..3 {
            let dj3 = [lat.d[j][0] - lat.d[2][0], lat.d[j][1] - lat.d[2][1]];
            let e_d = (i * dot(k, dj3)).exp() * i * dj3[axis];
            let cos_a = dot(k, lat.a[j]).cos() * lat.a[j][axis];
            omega += e_d;
            omega_r += ph[j] * e_d;
            alpha_so += cos_a;
            alpha_r += ph[j] * cos_a;
        }
        Scalars {
            omega: omega * p.t,
            omega_r: omega_r * (p.lambda_r / 3.0),
            alpha_so: alpha_so * (-2.0 * p.lambda_so / (3.0 * s3)),
            alpha_r: alpha_r * (2.0 * p.lambda_r * p.r / s3),
        }
    })
}

fn assemble(w: f64, s: &Scalars, s_minus: &Scalars) -> CMat {
    let wv = Complex64::new(w, 0.0);
    let aso = Complex64::new(s.alpha_so, 0.0);
    let om = s.omega;
    let omr = s.omega_r;
    let ar = s.alpha_r;
    let omr_m = s_minus.omega_r; // OmegaR(-k)

    let mut h = Array2::<Complex64>::zeros((4, 4));
    h[[0, 0]] = wv + aso;
    h[[0, 1]] = om;
    h[[0, 2]] = ar;
    h[[0, 3]] = omr;
    h[[1, 0]] = om.conj();
    h[[1, 1]] = -wv - aso;
    h[[1, 2]] = -omr_m;
    h[[1, 3]] = ar;
    h[[2, 0]] = ar.conj();
    h[[2, 1]] = -omr_m.conj();
    h[[2, 2]] = wv - aso;
    h[[2, 3]] = om;
    h[[3, 0]] = omr.conj();
    h[[3, 1]] = ar.conj();
    h[[3, 2]] = om.conj();
    h[[3, 3]] = -wv + aso;
    h
}

/// The 4x4 Bloch fiber H(k) of the extended Kane-Mele Hamiltonian.
pub fn bloch_hamiltonian(p: &ModelParams, k: Momentum) -> CMat {
    let s = scalars(p, k);
    let s_minus = scalars(p, [-k[0], -k[1]]);
    assemble(p.w, &s, &s_minus)
}

/// Analytic momentum gradient (dH/dk1, dH/dk2) of the Bloch fiber.
///
/// The -OmegaR(-k) entries differentiate to +(d OmegaR)(-k).
pub fn bloch_gradient(p: &ModelParams, k: Momentum) -> (CMat, CMat) {
    let g = scalar_gradients(p, k);
    let g_minus = scalar_gradients(p, [-k[0], -k[1]]);
    let build = |axis: usize| {
        let s = &g[axis];
        // entry (2,3) is -OmegaR(-k); d/dk_axis gives +(d_axis OmegaR)(-k)
        let mut m = assemble(0.0, s, &Scalars {
            omega: Complex64::new(0.0, 0.0),
            omega_r: -g_minus[axis].omega_r,
            alpha_so: 0.0,
            alpha_r: Complex64::new(0.0, 0.0),
        });
        // assemble() put w = 0 so the diagonal already carries only d(aSO);
        // nothing else to correct.
        debug_assert!(m.nrows() == 4);
        // keep the diagonal purely real
        for i in 0..4 {
            m[[i, i]] = Complex64::new(m[[i, i]].re, 0.0);
        }
        m
    };
    (build(0), build(1))
}

/// Sorted eigenvalues and eigenvectors of the fiber at k.
pub fn fiber_eigen(p: &ModelParams, k: Momentum) -> Result<HermitianEigenResult> {
    eigh(&bloch_hamiltonian(p, k))
}

/// Split H = H_sc + H_snc into the spin-commuting part (the model with the
/// Rashba coupling switched off) and the spin-non-commuting remainder
/// H_snc(k) = H(p, k) - H(p_sc, k) = 2 [H(k), S_z] S_z.
///
/// The consistency of both identities is checked on a fixed momentum sample;
/// a residual above 1e-10 indicates a model bug and is reported as an
/// internal error.
pub fn spin_split(p: &ModelParams) -> Result<(ModelParams, SpinNonCommutingFiber)> {
    let p_sc = p.spin_conserving();
    let fiber = SpinNonCommutingFiber { full: *p, sc: p_sc };

    let sz = spin_z();
    let scale = 1.0_f64.max(p.t.abs() + p.lambda_so.abs() + p.w.abs() + p.lambda_r.abs());
    let lat = lattice_vectors();
    for (i, j) in [(0, 0), (1, 3), (2, 5), (3, 1), (5, 2), (7, 11)] {
        let k = lat.momentum([i as f64 / 7.3, j as f64 / 13.1]);
        let h = bloch_hamiltonian(p, k);
        let h_sc = bloch_hamiltonian(&p_sc, k);
        let snc = fiber.fiber(k);
        let comm = commutator(&h_sc, &sz);
        if frobenius_norm(&comm) > 1e-10 * scale {
            return Err(Error::Internal(format!(
                "[H_sc, S_z] residual {:.3e} at k = ({:.4}, {:.4})",
                frobenius_norm(&comm),
                k[0],
                k[1]
            )));
        }
        let alg = commutator(&h, &sz).dot(&sz) * Complex64::new(2.0, 0.0);
        let resid = frobenius_norm(&(&alg - &snc));
        if resid > 1e-10 * scale {
            return Err(Error::Internal(format!(
                "2[H, S_z]S_z does not match H - H_sc: residual {resid:.3e}"
            )));
        }
    }
    Ok((p_sc, fiber))
}

/// The fiber of the spin-non-commuting part of the Hamiltonian.
#[derive(Debug, Clone, Copy)]
pub struct SpinNonCommutingFiber {
    full: ModelParams,
    sc: ModelParams,
}

impl SpinNonCommutingFiber {
    pub fn fiber(&self, k: Momentum) -> CMat {
        bloch_hamiltonian(&self.full, k) - bloch_hamiltonian(&self.sc, k)
    }
}

/// Grid estimate of the norm |||A||| = sup_k ||A(k)|| + sum_j sup_k ||d_j A(k)||.
///
/// The suprema are lower bounds converging under grid refinement; `grad` must
/// be the analytic derivative pair of `A`.
pub fn triple_norm(
    a: impl Fn(Momentum) -> CMat + Sync,
    grad: impl Fn(Momentum) -> (CMat, CMat) + Sync,
    grid: usize,
) -> f64 {
    use rayon::prelude::*;
    let lat = lattice_vectors();
    let sup = (0..grid * grid)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / grid, idx % grid);
            let k = lat.momentum([i as f64 / grid as f64, j as f64 / grid as f64]);
            let n0 = operator_norm(&a(k));
            let (g1, g2) = grad(k);
            [n0, operator_norm(&g1), operator_norm(&g2)]
        })
        .reduce(
            || [0.0_f64; 3],
            |x, y| [x[0].max(y[0]), x[1].max(y[1]), x[2].max(y[2])],
        );
    sup[0] + sup[1] + sup[2]
}

/// |||[H, S_z]||| for the given parameters (proportional to |lambda_r| for
/// this model).
pub fn spin_commutator_triple_norm(p: &ModelParams, grid: usize) -> f64 {
    let sz = spin_z();
    let sz2 = sz.clone();
    triple_norm(
        move |k| commutator(&bloch_hamiltonian(p, k), &sz),
        move |k| {
            let (d1, d2) = bloch_gradient(p, k);
            (commutator(&d1, &sz2), commutator(&d2, &sz2))
        },
        grid,
    )
}

/// Fixed symplectic matrix of the time-reversal operator in the fiber
/// picture: J = [[0, I2], [-I2, 0]].
pub fn time_reversal_j() -> CMat {
    let mut j = Array2::<Complex64>::zeros((4, 4));
    j[[0, 2]] = Complex64::new(1.0, 0.0);
    j[[1, 3]] = Complex64::new(1.0, 0.0);
    j[[2, 0]] = Complex64::new(-1.0, 0.0);
    j[[3, 1]] = Complex64::new(-1.0, 0.0);
    j
}

/// Time-reversal residuals at momentum k: max distance of the sorted spectra
/// of H(k) and H(-k), and || H(k) - J conj(H(-k)) J^-1 ||.
pub fn time_reversal_check(p: &ModelParams, k: Momentum) -> Result<(f64, f64)> {
    let h_k = bloch_hamiltonian(p, k);
    let h_mk = bloch_hamiltonian(p, [-k[0], -k[1]]);
    let e_k = eigh(&h_k)?.eigenvalues;
    let e_mk = eigh(&h_mk)?.eigenvalues;
    let spec_residual = e_k
        .iter()
        .zip(e_mk.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0_f64, f64::max);

    let j = time_reversal_j();
    let j_inv = {
        // J^-1 = J^T = -J
        let mut m = j.clone();
        m.mapv_inplace(|z| -z);
        m
    };
    let conj_mk = h_mk.mapv(|z| z.conj());
    let transformed = j.dot(&conj_mk).dot(&j_inv);
    let conj_residual = operator_norm(&(&h_k - &transformed));
    Ok((spec_residual, conj_residual))
}
