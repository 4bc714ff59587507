//! Real-space finite-flake engine: open-boundary honeycomb samples with the
//! Hamiltonian assembled from the hopping operators, dense diagonalisation,
//! the Liouvillian inverse of the position commutator, the spin-torque
//! expectation and a finite-size estimate of the spin conductivity. This
//! route shares no momentum-space machinery with the Kubo and Matsubara
//! integrators and serves as their independent cross-check.

use crate::error::{Error, Result};
use crate::geometry::lattice_vectors;
use crate::kubo::{ConductivityResult, Route};
use crate::model::ModelParams;
use crate::numerics::linalg::dagger;
use crate::numerics::{eigh, HermitianEigenResult, QuadratureSpec};
use crate::CMat;
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Finite open-boundary honeycomb sample.
///
/// Cells are Bravais points c1 a1 + c2 a2 with c_i in 0..L; each carries an
/// A site at the cell origin and a B site at origin + d3. Matrix index
/// layout: ((cell * 2 + sublattice) * 2 + spin), spin 0 = up.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Flake {
    pub l: usize,
    /// Site positions (2 L^2 entries, sublattice-interleaved per cell).
    pub site_positions: Vec<[f64; 2]>,
    /// Matrix dimension, 4 L^2.
    pub dim: usize,
}

impl Flake {
    pub fn site_index(&self, cell: [usize; 2], sublattice: usize, spin: usize) -> usize {
        (((cell[0] * self.l + cell[1]) * 2) + sublattice) * 2 + spin
    }

    pub fn position(&self, idx: usize) -> [f64; 2] {
        self.site_positions[idx / 2]
    }

    pub fn spin_sign(&self, idx: usize) -> f64 {
        if idx % 2 == 0 {
            0.5
        } else {
            -0.5
        }
    }

    /// The four levels (sublattice x spin) of one cell.
    pub fn cell_indices(&self, cell: [usize; 2]) -> [usize; 4] {
        [
            self.site_index(cell, 0, 0),
            self.site_index(cell, 0, 1),
            self.site_index(cell, 1, 0),
            self.site_index(cell, 1, 1),
        ]
    }

    /// The square block of side x side innermost cells.
    pub fn central_cells(&self, side: usize) -> Vec<[usize; 2]> {
        let side = side.min(self.l);
        let start = (self.l - side) / 2;
        let mut cells = Vec::with_capacity(side * side);
        for c1 in start..start + side {
            for c2 in start..start + side {
                cells.push([c1, c2]);
            }
        }
        cells
    }
}

/// (v wedge sigma)_z = v_x sigma_y - v_y sigma_x as a 2x2 spin matrix.
fn wedge_z(v: [f64; 2]) -> [[Complex64; 2]; 2] {
    let (dx, dy) = (v[0], v[1]);
    [
        [Complex64::new(0.0, 0.0), Complex64::new(-dy, -dx)],
        [Complex64::new(-dy, dx), Complex64::new(0.0, 0.0)],
    ]
}

fn scaled(m: [[Complex64; 2]; 2], s: Complex64) -> [[Complex64; 2]; 2] {
    [[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]]
}

/// Build the flake and its dense Hamiltonian: nearest-neighbour hopping,
/// sublattice-signed imaginary next-to-nearest spin-orbit hops, staggered
/// potential, and the two Rashba terms. Hops leaving the sample are dropped
/// (open boundary).
pub fn build_flake(p: &ModelParams, l: usize) -> Result<(Flake, CMat)> {
    p.validate()?;
    if !(2..=32).contains(&l) {
        return Err(Error::InvalidParams(format!(
            "flake side must be in [2, 32], got {l}"
        )));
    }
    let lat = lattice_vectors();
    let mut positions = Vec::with_capacity(2 * l * l);
    for c1 in 0..l {
        for c2 in 0..l {
            let origin = [
                c1 as f64 * lat.a[0][0] + c2 as f64 * lat.a[1][0],
                c1 as f64 * lat.a[0][1] + c2 as f64 * lat.a[1][1],
            ];
            positions.push(origin); // A
            positions.push([origin[0] + lat.d[2][0], origin[1] + lat.d[2][1]]); // B
        }
    }
    let flake = Flake {
        l,
        site_positions: positions,
        dim: 4 * l * l,
    };

    let key = |pos: [f64; 2]| -> (i64, i64) {
        ((pos[0] * 1e6).round() as i64, (pos[1] * 1e6).round() as i64)
    };
    let mut lookup = std::collections::HashMap::new();
    for (site, pos) in flake.site_positions.iter().enumerate() {
        lookup.insert(key(*pos), site);
    }
    let find = |pos: [f64; 2]| lookup.get(&key(pos)).copied();

    let mut h = Array2::<Complex64>::zeros((flake.dim, flake.dim));
    let mut add = |to_site: usize, from_site: usize, spin_mat: [[Complex64; 2]; 2]| {
        for (s_to, row) in spin_mat.iter().enumerate() {
            for (s_from, amp) in row.iter().enumerate() {
                h[[to_site * 2 + s_to, from_site * 2 + s_from]] += amp;
            }
        }
    };
    let id2 = |amp: Complex64| {
        [
            [amp, Complex64::new(0.0, 0.0)],
            [Complex64::new(0.0, 0.0), amp],
        ]
    };
    let sz2 = |amp: Complex64| {
        [
            [amp, Complex64::new(0.0, 0.0)],
            [Complex64::new(0.0, 0.0), -amp],
        ]
    };

    let i = Complex64::new(0.0, 1.0);
    let s3 = 3.0_f64.sqrt();
    let nsites = flake.site_positions.len();
    for site in 0..nsites {
        let pos = flake.site_positions[site];
        let is_a = site % 2 == 0;
        let chi = if is_a { 1.0 } else { -1.0 };

        // staggered potential
        add(site, site, id2(Complex64::new(p.w * chi, 0.0)));

        // nearest-neighbour bonds originate on A sites; both hop directions
        // are written explicitly
        if is_a {
            for dj in lat.d.iter() {
                if let Some(nb) = find([pos[0] + dj[0], pos[1] + dj[1]]) {
                    add(nb, site, id2(Complex64::new(p.t, 0.0)));
                    add(site, nb, id2(Complex64::new(p.t, 0.0)));
                    // (i lr / 3)(T_{d_j} - T_{-d_j}) tensor (d_j ^ sigma)_z
                    let wz = wedge_z(*dj);
                    add(nb, site, scaled(wz, i * (p.lambda_r / 3.0)));
                    add(site, nb, scaled(wz, -i * (p.lambda_r / 3.0)));
                }
            }
        }

        // next-to-nearest hops (same sublattice), one directed term per
        // (site, direction, sign)
        for aj in lat.a.iter() {
            for sign in [1.0_f64, -1.0] {
                if let Some(nb) = find([pos[0] + sign * aj[0], pos[1] + sign * aj[1]]) {
                    // spin-orbit: -i lso (chi_A - chi_B)/(3 sqrt3) (T_a - T_-a) sigma_z
                    let chi_nb = if nb % 2 == 0 { 1.0 } else { -1.0 };
                    let so_amp =
                        -i * Complex64::new(p.lambda_so * chi_nb / (3.0 * s3) * sign, 0.0);
                    add(nb, site, sz2(so_amp));
                    // (i lr r / 3)(T_a - T_-a) tensor (a_j ^ sigma)_z
                    let wz = wedge_z(*aj);
                    add(nb, site, scaled(wz, i * (p.lambda_r * p.r / 3.0) * sign));
                }
            }
        }
    }

    Ok((flake, h))
}

/// Dense eigenpairs of a flake Hamiltonian.
pub struct FlakeSpectrum {
    pub eigen: HermitianEigenResult,
}

impl FlakeSpectrum {
    pub fn new(h: &CMat) -> Result<Self> {
        Ok(FlakeSpectrum { eigen: eigh(h)? })
    }

    fn gap_check(&self, mu: f64) -> Result<()> {
        let dist = self
            .eigen
            .eigenvalues
            .iter()
            .map(|e| (e - mu).abs())
            .fold(f64::INFINITY, f64::min);
        if dist <= 1e-8 {
            return Err(Error::NoGap { mu, dist });
        }
        Ok(())
    }
}

/// Response operator for direction j:
/// L_j = sum over opposite-occupation pairs of
/// <n|[X_j, P]|m> / ((E_n - E_m) - i eta) |n><m|, returned in the site basis.
/// At eta = 0 this is the inverse Liouvillian applied to [X_j, P].
pub fn flake_response(
    flake: &Flake,
    spectrum: &FlakeSpectrum,
    mu: f64,
    j: usize,
    eta: f64,
) -> Result<CMat> {
    spectrum.gap_check(mu)?;
    let n = flake.dim;
    let psi = &spectrum.eigen.eigenvectors;
    let e = &spectrum.eigen.eigenvalues;

    // Y = Psi^* X_j Psi with X_j diagonal in the site basis
    let mut xpsi = psi.clone();
    for row in 0..n {
        let x = flake.position(row)[j];
        for col in 0..n {
            xpsi[[row, col]] *= x;
        }
    }
    let y = dagger(psi).dot(&xpsi);

    let mut core = Array2::<Complex64>::zeros((n, n));
    for a in 0..n {
        let occ_a = e[a] <= mu;
        for b in 0..n {
            let occ_b = e[b] <= mu;
            if occ_a == occ_b {
                continue;
            }
            // <a|[X_j, P]|b> = -Y_ab if a occupied, +Y_ab otherwise
            let elem = if occ_a { -y[[a, b]] } else { y[[a, b]] };
            core[[a, b]] = elem / Complex64::new(e[a] - e[b], -eta);
        }
    }
    Ok(psi.dot(&core).dot(&dagger(psi)))
}

/// Fermi projector of the flake in the site basis.
pub fn flake_projector(spectrum: &FlakeSpectrum, mu: f64) -> Result<CMat> {
    spectrum.gap_check(mu)?;
    let n = spectrum.eigen.eigenvalues.len();
    let psi = &spectrum.eigen.eigenvectors;
    let mut occ = psi.clone();
    for (band, e) in spectrum.eigen.eigenvalues.iter().enumerate() {
        if *e > mu {
            for row in 0..n {
                occ[[row, band]] = Complex64::new(0.0, 0.0);
            }
        }
    }
    Ok(occ.dot(&dagger(psi)))
}

/// Spin torque T_z = i [H, S_z] in the site basis (S_z is diagonal, so the
/// commutator is elementwise).
pub fn spin_torque_operator(flake: &Flake, h: &CMat) -> CMat {
    let n = flake.dim;
    let mut t = Array2::<Complex64>::zeros((n, n));
    let i = Complex64::new(0.0, 1.0);
    for a in 0..n {
        let sa = flake.spin_sign(a);
        for b in 0..n {
            t[[a, b]] = i * h[[a, b]] * (flake.spin_sign(b) - sa);
        }
    }
    t
}

/// Tr(T_z L_j chi_cell) / |C_1| for the given cell.
pub fn spin_torque_expectation_at(
    flake: &Flake,
    h: &CMat,
    spectrum: &FlakeSpectrum,
    mu: f64,
    j: usize,
    cell: [usize; 2],
) -> Result<f64> {
    let lj = flake_response(flake, spectrum, mu, j, 0.0)?;
    let tz = spin_torque_operator(flake, h);
    let mut acc = Complex64::new(0.0, 0.0);
    for idx in flake.cell_indices(cell) {
        for b in 0..flake.dim {
            acc += tz[[idx, b]] * lj[[b, idx]];
        }
    }
    Ok(acc.re / lattice_vectors().cell_area)
}

/// As [`spin_torque_expectation_at`] for the canonical central cell.
pub fn spin_torque_expectation(
    flake: &Flake,
    h: &CMat,
    spectrum: &FlakeSpectrum,
    mu: f64,
    j: usize,
) -> Result<f64> {
    let c = flake.l / 2;
    spin_torque_expectation_at(flake, h, spectrum, mu, j, [c, c])
}

/// Flake conductivity, conventional and proper spin-current variants.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FlakeConductivity {
    /// Conventional-current tensor; the error estimate is the spread of
    /// sigma_12 across the alternative central-region sizes.
    pub result: ConductivityResult,
    /// Proper-current tensor on the default central region.
    pub sigma_prop: [[f64; 2]; 2],
    /// max over components of |sigma_conv - sigma_prop|.
    pub conv_prop_difference: f64,
    /// (side, sigma_12) for each evaluated central-region size.
    pub alternative_centers: Vec<(usize, f64)>,
}

/// sigma_ij = Re Tr(chi_c J_i L_j chi_c) / area over the ceil(L/2)^2
/// innermost cells, with J the conventional spin current
/// (i/2){[H, X_i], S_z}; the proper variant i [H, X_i S_z] is reported
/// alongside, and two alternative center sizes expose the finite-size
/// systematics.
pub fn flake_spin_conductivity(
    flake: &Flake,
    h: &CMat,
    spectrum: &FlakeSpectrum,
    p: &ModelParams,
) -> Result<FlakeConductivity> {
    spectrum.gap_check(p.mu)?;
    let n = flake.dim;
    let lat = lattice_vectors();
    let lj = [
        flake_response(flake, spectrum, p.mu, 0, 0.0)?,
        flake_response(flake, spectrum, p.mu, 1, 0.0)?,
    ];

    let i = Complex64::new(0.0, 1.0);
    let current = |axis: usize, proper: bool| -> CMat {
        let mut jm = Array2::<Complex64>::zeros((n, n));
        for a in 0..n {
            let xa = flake.position(a)[axis];
            let sa = flake.spin_sign(a);
            for b in 0..n {
                let xb = flake.position(b)[axis];
                let sb = flake.spin_sign(b);
                jm[[a, b]] = if proper {
                    i * h[[a, b]] * (xb * sb - xa * sa) // i [H, X S_z]
                } else {
                    i * h[[a, b]] * (xb - xa) * (0.5 * (sa + sb)) // (i/2){[H,X], S_z}
                };
            }
        }
        jm
    };

    let trace_over = |jm: &CMat, l: &CMat, cells: &[[usize; 2]]| -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for cell in cells {
            for idx in flake.cell_indices(*cell) {
                for b in 0..n {
                    acc += jm[[idx, b]] * l[[b, idx]];
                }
            }
        }
        acc.re
    };

    let default_side = flake.l.div_ceil(2);
    let mut sides = vec![default_side];
    if default_side > 2 {
        sides.push(default_side - 2);
    }
    if default_side + 2 <= flake.l {
        sides.push(default_side + 2);
    }

    let mut sigma_conv = [[0.0_f64; 2]; 2];
    let mut sigma_prop = [[0.0_f64; 2]; 2];
    let mut alternatives = Vec::new();
    for (si, side) in sides.iter().enumerate() {
        let cells = flake.central_cells(*side);
        let area = lat.cell_area * cells.len() as f64;
        let mut conv = [[0.0_f64; 2]; 2];
        let mut prop = [[0.0_f64; 2]; 2];
        for ax_i in 0..2 {
            let jc = current(ax_i, false);
            let jp = current(ax_i, true);
            for ax_j in 0..2 {
                conv[ax_i][ax_j] = trace_over(&jc, &lj[ax_j], &cells) / area;
                prop[ax_i][ax_j] = trace_over(&jp, &lj[ax_j], &cells) / area;
            }
        }
        if si == 0 {
            sigma_conv = conv;
            sigma_prop = prop;
        }
        alternatives.push((*side, conv[0][1]));
    }

    let spread = alternatives
        .iter()
        .map(|(_, s12)| (s12 - sigma_conv[0][1]).abs())
        .fold(0.0_f64, f64::max);
    let mut diff = 0.0_f64;
    for a in 0..2 {
        for b in 0..2 {
            diff = diff.max((sigma_conv[a][b] - sigma_prop[a][b]).abs());
        }
    }

    let result = ConductivityResult {
        sigma: sigma_conv,
        route: Route::Flake,
        grid_spec: QuadratureSpec::with_grid(4),
        error_estimate: spread.max(1e-12),
        params: *p,
    };
    Ok(FlakeConductivity {
        result,
        sigma_prop,
        conv_prop_difference: diff,
        alternative_centers: alternatives,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::linalg::{commutator, frobenius_norm, hermiticity_residual, identity};
    use crate::spectrum::bands;

    fn spin_z_flake(flake: &Flake) -> CMat {
        let mut s = Array2::<Complex64>::zeros((flake.dim, flake.dim));
        for a in 0..flake.dim {
            s[[a, a]] = Complex64::new(flake.spin_sign(a), 0.0);
        }
        s
    }

    #[test]
    fn hamiltonian_hermitian() {
        let p = ModelParams::new(1.0, 0.3, 0.2, 0.15, 0.8, 0.0).unwrap();
        let (_, h) = build_flake(&p, 6).unwrap();
        assert!(hermiticity_residual(&h) < 1e-13);
    }

    #[test]
    fn spin_conserved_without_rashba() {
        let p = ModelParams::new(1.0, 0.4, 0.3, 0.0, 0.7, 0.0).unwrap();
        let (flake, h) = build_flake(&p, 6).unwrap();
        let sz = spin_z_flake(&flake);
        assert!(frobenius_norm(&commutator(&h, &sz)) < 1e-13);
    }

    #[test]
    fn rashba_breaks_spin_conservation() {
        let p = ModelParams::new(1.0, 0.4, 0.3, 0.2, 0.0, 0.0).unwrap();
        let (flake, h) = build_flake(&p, 4).unwrap();
        let sz = spin_z_flake(&flake);
        assert!(frobenius_norm(&commutator(&h, &sz)) > 1e-3);
    }

    #[test]
    fn nearest_neighbour_count() {
        // an interior A site has exactly 3 nearest-neighbour bonds
        let p = ModelParams::new(1.0, 0.3, 0.0, 0.0, 0.0, 0.0).unwrap();
        let (flake, h) = build_flake(&p, 6).unwrap();
        let idx = flake.site_index([3, 3], 0, 0);
        let hops = (0..flake.dim)
            .filter(|&b| b != idx && h[[idx, b]].norm() > 0.5 * p.t)
            .count();
        assert_eq!(hops, 3);
    }

    #[test]
    fn eigenvalues_within_bulk_band_range() {
        let p = ModelParams::new(1.0, 0.3, 0.1, 0.1, 0.5, 0.0).unwrap();
        let (_, h) = build_flake(&p, 10).unwrap();
        let spec = FlakeSpectrum::new(&h).unwrap();
        let lat = lattice_vectors();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..24 {
            for j in 0..24 {
                let k = lat.momentum([i as f64 / 24.0, j as f64 / 24.0]);
                let e = bands(&p, k).unwrap();
                lo = lo.min(e[0]);
                hi = hi.max(e[3]);
            }
        }
        let eps = 0.5;
        let emin = spec.eigen.eigenvalues.first().unwrap();
        let emax = spec.eigen.eigenvalues.last().unwrap();
        assert!(*emin >= lo - eps, "flake min {emin} vs bulk {lo}");
        assert!(*emax <= hi + eps, "flake max {emax} vs bulk {hi}");
    }

    #[test]
    fn response_satisfies_liouvillian_identity() {
        let p = ModelParams::new(1.0, 0.3, 0.0, 0.1, 0.5, 0.0).unwrap();
        let (flake, h) = build_flake(&p, 4).unwrap();
        let spectrum = FlakeSpectrum::new(&h).unwrap();
        let lj = flake_response(&flake, &spectrum, p.mu, 0, 0.0).unwrap();
        let proj = flake_projector(&spectrum, p.mu).unwrap();
        let mut x = Array2::<Complex64>::zeros((flake.dim, flake.dim));
        for a in 0..flake.dim {
            x[[a, a]] = Complex64::new(flake.position(a)[0], 0.0);
        }
        let xp = commutator(&x, &proj);
        // off-diagonal part of [X, P] w.r.t. the projector
        let od = {
            let pp = identity(flake.dim) - &proj;
            proj.dot(&xp).dot(&pp) + pp.dot(&xp).dot(&proj)
        };
        let resid = frobenius_norm(&(commutator(&h, &lj) - od));
        assert!(resid < 1e-10, "Liouvillian residual {resid}");
        assert!(frobenius_norm(&proj.dot(&lj).dot(&proj)) < 1e-12);
    }

    #[test]
    fn response_eta_perturbation_first_order() {
        let p = ModelParams::new(1.0, 0.3, 0.0, 0.1, 0.5, 0.0).unwrap();
        let (flake, h) = build_flake(&p, 4).unwrap();
        let spectrum = FlakeSpectrum::new(&h).unwrap();
        let l0 = flake_response(&flake, &spectrum, p.mu, 0, 0.0).unwrap();
        let eta = 1e-3;
        let le = flake_response(&flake, &spectrum, p.mu, 0, eta).unwrap();
        let diff = frobenius_norm(&(&le - &l0));
        let le2 = flake_response(&flake, &spectrum, p.mu, 0, eta / 2.0).unwrap();
        let diff2 = frobenius_norm(&(&le2 - &l0));
        let ratio = diff / diff2;
        assert!((ratio - 2.0).abs() < 0.2, "eta scaling ratio {ratio}");
    }

    #[test]
    fn torque_vanishes_without_rashba() {
        let p = ModelParams::new(1.0, 0.3, 0.1, 0.0, 0.0, 0.0).unwrap();
        let (flake, h) = build_flake(&p, 6).unwrap();
        let spectrum = FlakeSpectrum::new(&h).unwrap();
        let v = spin_torque_expectation(&flake, &h, &spectrum, p.mu, 0).unwrap();
        assert!(v.abs() < 1e-13, "torque {v}");
    }

    #[test]
    fn spin_block_decomposition_without_rashba() {
        // at lambda_r = 0 the conductivity splits into spin sectors whose
        // +-1/2-weighted sum reproduces the total
        let p = ModelParams::new(1.0, 0.3, 0.0, 0.0, 0.0, 0.0).unwrap();
        let (flake, h) = build_flake(&p, 8).unwrap();
        let spectrum = FlakeSpectrum::new(&h).unwrap();
        let full = flake_spin_conductivity(&flake, &h, &spectrum, &p).unwrap();

        // project onto single-spin levels and recompute the trace by hand
        let lj = flake_response(&flake, &spectrum, p.mu, 1, 0.0).unwrap();
        let jc = {
            let n = flake.dim;
            let i = Complex64::new(0.0, 1.0);
            let mut jm = Array2::<Complex64>::zeros((n, n));
            for a in 0..n {
                for b in 0..n {
                    jm[[a, b]] = i
                        * h[[a, b]]
                        * (flake.position(b)[0] - flake.position(a)[0])
                        * (0.5 * (flake.spin_sign(a) + flake.spin_sign(b)));
                }
            }
            jm
        };
        let cells = flake.central_cells(flake.l.div_ceil(2));
        let area = lattice_vectors().cell_area * cells.len() as f64;
        let mut per_spin = [0.0_f64; 2];
        for cell in &cells {
            for idx in flake.cell_indices(*cell) {
                let spin = idx % 2;
                let mut acc = Complex64::new(0.0, 0.0);
                for b in 0..flake.dim {
                    acc += jc[[idx, b]] * lj[[b, idx]];
                }
                per_spin[spin] += acc.re;
            }
        }
        let total = (per_spin[0] + per_spin[1]) / area;
        assert!((total - full.result.sigma[0][1]).abs() < 1e-12);
        // each sector contributes with the same sign (up and down Chern
        // sectors add constructively in the spin conductivity)
        assert!(per_spin[0] * per_spin[1] > 0.0);
    }
}
