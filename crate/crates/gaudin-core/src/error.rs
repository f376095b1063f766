//! Error types shared across the crate.
//!
//! Diagnostic payloads are carried as `f64` regardless of the working scalar
//! so the error enums stay non-generic.

use thiserror::Error;

/// Rejections raised while validating model parameters.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("the system needs at least one spin")]
    EmptySystem,

    #[error("epsilon count {found} does not match the requested {expected} sites")]
    EpsilonCountMismatch { expected: usize, found: usize },

    #[error("inhomogeneities {i} and {j} are separated by {separation:e}, below the minimum gap {min_gap:e}")]
    EpsilonsTooClose {
        i: usize,
        j: usize,
        separation: f64,
        min_gap: f64,
    },

    #[error("alpha_{family}*epsilon + beta_{family} = {value:e} at site {site} is not positive; complex couplings are unsupported")]
    NonPositiveRadicand {
        family: char,
        site: usize,
        value: f64,
    },

    #[error("non-finite parameter: {name}")]
    NonFiniteParameter { name: &'static str },

    #[error("the XXZ limit needs strictly positive inhomogeneities, found epsilon = {value:e} at site {site}")]
    NonPositiveEpsilonForXxz { site: usize, value: f64 },
}

/// Failures of the exact-diagonalization oracle.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("L = {requested} exceeds the dense-matrix guard L_max = {l_max}")]
    SystemTooLarge { requested: usize, l_max: usize },

    #[error("site index {site} outside 1..={l}")]
    SiteOutOfRange { site: usize, l: usize },

    #[error("joint spectrum is degenerate: {} states share eigenvalue rows (first block {:?}), minimal gap {min_gap:e}", states.len(), &states[..states.len().min(8)])]
    DegenerateJointSpectrum { states: Vec<usize>, min_gap: f64 },
}

/// Failures of the quadratic-equation solver and the continuation driver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("Newton did not reach tolerance {tol:e} in {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    #[error("Jacobian is numerically singular (condition estimate {condition:e})")]
    SingularJacobian { condition: f64 },

    #[error("continuation stalled at g = {last_good_g:e} heading for {target_g:e}: step {step:e} hit the floor {floor:e} ({reason})")]
    PathFailure {
        last_good_g: f64,
        target_g: f64,
        step: f64,
        floor: f64,
        reason: String,
    },
}
