//! Honeycomb lattice constants, reciprocal basis and Brillouin-torus helpers.
//!
//! Nearest-neighbour vectors (dimensionless lattice units)
//!   d1 = (1/2)(1, -sqrt3),  d2 = (1/2)(1, sqrt3),  d3 = (-1, 0),
//! next-to-nearest-neighbour vectors a1 = d2 - d3, a2 = d3 - d1, a3 = d1 - d2.
//! The a_j generate the Bravais lattice; the reciprocal basis b1, b2 satisfies
//! b_i . a_j = 2 pi delta_ij and is obtained by a linear solve so that the
//! geometry stays single-sourced.

use std::f64::consts::PI;

/// A momentum in the plane (components in the fixed Cartesian frame).
pub type Momentum = [f64; 2];

/// Lattice constants of the honeycomb structure.
#[derive(Debug, Clone, Copy)]
pub struct LatticeData {
    /// Nearest-neighbour vectors.
    pub d: [[f64; 2]; 3],
    /// Next-to-nearest-neighbour vectors a1 = d2 - d3, a2 = d3 - d1, a3 = d1 - d2.
    pub a: [[f64; 2]; 3],
    /// Reciprocal basis, b_i . a_j = 2 pi delta_ij.
    pub b: [[f64; 2]; 2],
    /// Area of the fundamental cell, |a1 x a2| = 3 sqrt(3) / 2.
    pub cell_area: f64,
}

#[inline]
pub fn dot(x: [f64; 2], y: [f64; 2]) -> f64 {
    x[0] * y[0] + x[1] * y[1]
}

#[inline]
fn cross(x: [f64; 2], y: [f64; 2]) -> f64 {
    x[0] * y[1] - x[1] * y[0]
}

#[inline]
fn sub(x: [f64; 2], y: [f64; 2]) -> [f64; 2] {
    [x[0] - y[0], x[1] - y[1]]
}

/// Honeycomb lattice constants.
pub fn lattice_vectors() -> LatticeData {
    let s3 = 3.0_f64.sqrt();
    let d1 = [0.5, -0.5 * s3];
    let d2 = [0.5, 0.5 * s3];
    let d3 = [-1.0, 0.0];
    let a1 = sub(d2, d3);
    let a2 = sub(d3, d1);
    let a3 = sub(d1, d2);

    // Solve a_i . b_j = 2 pi delta_ij for the two reciprocal vectors.
    let det = cross(a1, a2);
    let solve = |rhs: [f64; 2]| -> [f64; 2] {
        // rows of the system are a1, a2
        [
            (rhs[0] * a2[1] - rhs[1] * a1[1]) / det,
            (a1[0] * rhs[1] - a2[0] * rhs[0]) / det,
        ]
    };
    let b1 = solve([2.0 * PI, 0.0]);
    let b2 = solve([0.0, 2.0 * PI]);

    LatticeData {
        d: [d1, d2, d3],
        a: [a1, a2, a3],
        b: [b1, b2],
        cell_area: det.abs(),
    }
}

impl LatticeData {
    /// Area of the Brillouin zone, |b1 x b2| = (2 pi)^2 / cell_area.
    pub fn bz_area(&self) -> f64 {
        cross(self.b[0], self.b[1]).abs()
    }

    /// Momentum at reciprocal coordinates (alpha1, alpha2): alpha1 b1 + alpha2 b2.
    pub fn momentum(&self, alpha: [f64; 2]) -> Momentum {
        [
            alpha[0] * self.b[0][0] + alpha[1] * self.b[1][0],
            alpha[0] * self.b[0][1] + alpha[1] * self.b[1][1],
        ]
    }

    /// Reciprocal coordinates of k against (b1, b2): alpha_i = k . a_i / 2 pi.
    pub fn alpha(&self, k: Momentum) -> [f64; 2] {
        [dot(k, self.a[0]) / (2.0 * PI), dot(k, self.a[1]) / (2.0 * PI)]
    }

    /// Distance from k to c on the Brillouin torus (minimum over reciprocal
    /// lattice translates).
    pub fn torus_distance(&self, k: Momentum, c: Momentum) -> f64 {
        let mut best = f64::INFINITY;
        for g1 in -1..=1 {
            for g2 in -1..=1 {
                let dx = k[0] - c[0] + g1 as f64 * self.b[0][0] + g2 as f64 * self.b[1][0];
                let dy = k[1] - c[1] + g1 as f64 * self.b[0][1] + g2 as f64 * self.b[1][1];
                best = best.min(dx.hypot(dy));
            }
        }
        best
    }
}

/// The two Dirac points k_F^+- = (2 pi / 3)(1, +-1/sqrt3).
///
/// Both are equivalent (mod the dual lattice) to representatives in the
/// fundamental domain; the literal values are returned because every closed
/// form downstream is written at these points. On the torus -k_F^+ = k_F^-.
pub fn dirac_points() -> (Momentum, Momentum) {
    let c = 2.0 * PI / 3.0;
    let s3 = 3.0_f64.sqrt();
    ([c, c / s3], [c, -c / s3])
}

/// Representative of k modulo the dual lattice in the fundamental domain
/// { alpha1 b1 + alpha2 b2 : alpha_i in [0, 1) }.
pub fn bz_wrap(k: Momentum) -> Momentum {
    let lat = lattice_vectors();
    let alpha = lat.alpha(k);
    let wrap = |x: f64| {
        let y = x - x.floor();
        // guard against -1e-17 -> 0.9999999999999999 style wraps of exact lattice points
        if y >= 1.0 {
            y - 1.0
        } else {
            y
        }
    };
    lat.momentum([wrap(alpha[0]), wrap(alpha[1])])
}
