//! Numerics for the extended Kane-Mele model on the honeycomb lattice.
//!
//! The model is the standard Kane-Mele Hamiltonian (nearest-neighbour hopping
//! `t`, intrinsic spin-orbit coupling `lambda_so`, staggered potential `w`,
//! Rashba coupling `lambda_r`) extended by a next-to-nearest-neighbour Rashba
//! term with relative strength `r`. The crate computes its spin-transport
//! observables:
//!
//! * band structure and phase diagram ([`spectrum`]),
//! * spin conductivity by two independent momentum-space routes: the Kubo
//!   formula through the Fermi projector ([`kubo`]) and the Wick-rotated
//!   imaginary-frequency integral ([`matsubara`]),
//! * Chern and spin Chern numbers and the deviation of the spin conductivity
//!   from quantisation ([`topology`]),
//! * the closed-form and numerically extrapolated conductivity jump across
//!   the topological transition ([`criticality`]),
//! * an independent real-space finite-flake engine ([`realspace`]).
//!
//! All fiber matrices are 4x4 in the basis (A up, B up, A down, B down); see
//! [`model`] for the conventions.

pub mod cli;
pub mod criticality;
pub mod error;
pub mod geometry;
pub mod kubo;
pub mod matsubara;
pub mod model;
pub mod numerics;
pub mod realspace;
pub mod spectrum;
pub mod topology;

pub use error::{Error, Result};
pub use geometry::{bz_wrap, dirac_points, lattice_vectors, LatticeData, Momentum};
pub use kubo::{spin_conductivity_kubo, ConductivityResult, Route};
pub use matsubara::spin_conductivity_matsubara;
pub use model::ModelParams;
pub use numerics::{eigh, integrate_bz, integrate_real_line, QuadratureSpec};
pub use spectrum::{classify_phase, PhaseClass, PhasePoint};

use num_complex::Complex64;

/// Complex 4x4 (or larger) dense matrix used throughout.
pub type CMat = ndarray::Array2<Complex64>;
