//! Dense Hermitian eigensolver, matrix algebra and the quadrature engines
//! used by every integrator in the crate.

mod eigh;
pub mod linalg;
mod quad;

pub use eigh::{eigh, HermitianEigenResult};
pub use quad::{
    gauss_legendre, integrate_bz, integrate_bz_try_many, integrate_real_line,
    integrate_real_line_many, integrate_real_line_scaled, K0Method, QuadratureSpec, Refinement,
};
