//! Integrable spin-1/2 XYZ central-spin models in an arbitrary magnetic field.
//!
//! The crate builds the conserved charges of the fully anisotropic (XYZ)
//! spin-1/2 Richardson-Gaudin family, solves the closed system of quadratic
//! equations obeyed by their eigenvalues by homotopy continuation in the
//! coupling strength `g`, and evaluates per-site spin expectation values from
//! eigenvalue derivatives (Hellmann-Feynman). A dense exact-diagonalization
//! oracle validates everything at small system size.
//!
//! Modules:
//! - [`model`]: parametrisation, realized fields/couplings, integrability
//!   constraint checker, special-limit constructors.
//! - [`oracle`]: dense 2^L charge matrices, commutation diagnostics, joint
//!   eigensystem extraction, parity checks.
//! - [`solver`]: quadratic residual/Jacobian, damped Newton, adaptive
//!   continuation in `g` from the analytic `g = 0` roots.
//! - [`observables`]: eigenvalue derivatives via the linear system, spin
//!   expectation values, finite-difference cross-check.
//!
//! All numerics are generic over the scalar type through [`Scalar`]
//! (`f32` or `f64`); the `*64` aliases at the crate root fix `f64`.

pub mod error;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod scalar;
pub mod solver;

pub use error::{ModelError, OracleError, SolverError};
pub use scalar::Scalar;

/// Default-precision aliases.
pub type ModelParams64 = model::ModelParams<f64>;
pub type RawModelParams64 = model::RawModelParams<f64>;
pub type CouplingSet64 = model::CouplingSet<f64>;
pub type ChargeMatrixSet64 = oracle::ChargeMatrixSet<f64>;
pub type JointEigensystem64 = oracle::JointEigensystem<f64>;
pub type StateEigenvalues64 = solver::StateEigenvalues<f64>;
pub type ContinuationPath64 = solver::ContinuationPath<f64>;
pub type ObservableRecord64 = observables::ObservableRecord<f64>;
