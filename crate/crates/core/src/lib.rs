//! Covariant tangent vectors along transient orbits.
//!
//! Given a vector field whose orbit settles onto an equilibrium, this crate
//! carries an orthonormal tangent frame forward along the orbit with QR
//! re-orthonormalization, pulls random upper triangular coefficients back
//! through the stored triangular factors, and composes the two into tangent
//! vectors. Along the transient those vectors converge to the eigenvectors
//! of the linearization at the equilibrium, and perturbing the orbit along
//! one of them steers it out along the matching eigendirection.
//!
//! All numerics are generic over [`Scalar`] (`f32`, `f64`); the aliases at
//! the crate root fix the scalar to `f64`.

// `!(x < tol)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;
mod matrix;
mod scalar;

pub mod experiments;
pub mod ginelli;
pub mod integrate;
pub mod linalg;
pub mod systems;

pub use error::{Error, Result};
pub use matrix::SquareMatrix;
pub use scalar::Scalar;

pub use ginelli::{
    backward_pass, compose_all, compose_vectors, forward_pass, lyapunov_exponents,
    seed_coefficients, BackwardRecord, ExponentEstimate, ForwardConfig, ForwardRecord, SystemInfo,
    TangentVectors, VectorField,
};
pub use integrate::{integrate_orbit, rk4_step, rk4_tangent_step, Trajectory};
pub use linalg::{
    normalize_columns, qr_positive, solve_upper, CoeffMatrix, DiagNorms, OrthoFrame, UpperTri,
};
pub use systems::{
    build_system, builtin_systems, eval_field, eval_jacobian, fd_jacobian, DynamicalSystem,
};

/// Scalar used by the binaries and file formats.
pub type Real = f64;
pub type Matrix = SquareMatrix<Real>;
pub type Frame = OrthoFrame<Real>;
pub type Triangle = UpperTri<Real>;
pub type Coefficients = CoeffMatrix<Real>;
pub type Record = ForwardRecord<Real>;
pub type Backward = BackwardRecord<Real>;
pub type Vectors = VectorField<Real>;
pub type Exponents = ExponentEstimate<Real>;
pub type Orbit = Trajectory<Real>;
pub type System = dyn DynamicalSystem<Real>;
pub type RunConfig = experiments::RunConfig<Real>;
pub type TransientRun = experiments::TransientRun<Real>;
