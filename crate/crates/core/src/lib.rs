//! Real, sparse, Frobenius-norm stability radius of continuous-time LTI systems.
//!
//! The library computes the smallest structured real perturbation `Δ` (Frobenius
//! norm, entries restricted to a binary sparsity pattern `S`) such that
//! `A + BΔC` has an eigenvalue on the imaginary axis. The search runs a
//! penalty-based gradient/Newton descent over a Sylvester-equation
//! parametrization of the eigenvalue-assignment constraint, and candidate
//! minima are certified independently against first- and second-order
//! optimality conditions.
//!
//! Module map:
//! - [`matops`]: vectorization, Kronecker/Hadamard products, commutation
//!   matrix, pseudoinverse.
//! - [`model`]: problem data `(A, B, C, S)`, weight matrices, assumption checks.
//! - [`sylvester`]: the parametrization `AX − ωXĪ = −BG`, `Δ = G(CX)⁺`.
//! - [`objective`]: penalized cost, analytic gradient/Hessian, FD oracles.
//! - [`solver`]: descent loop, multi-start, weight sweeps.
//! - [`verify`]: optimality certification, spectral value sets, brute-force
//!   stability-radius brackets.
//! - [`networks`]: line/circle network fragility studies.
//! - [`cli`]: command-line entry points.

pub mod cli;
mod eig;
pub mod matops;
#[cfg(test)]
pub(crate) mod testutil;
pub mod model;
pub mod networks;
pub mod objective;
pub mod solver;
pub mod sylvester;
pub mod verify;

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("nominal matrix is unstable: spectral abscissa = {alpha:.6e} >= 0")]
    NotStable { alpha: f64 },

    #[error("CX lost full column rank and {attempts} jitter attempts did not recover it")]
    RankDeficient { attempts: usize },

    #[error("cost became non-finite at iteration {iter}")]
    NonFiniteCost { iter: usize },

    #[error("no eigenvalue of the perturbed matrix within {tol:.3e} of i*{omega}")]
    NotBoundaryPoint { omega: f64, tol: f64 },

    #[error("constraint Jacobian is rank deficient; second-order test inconclusive")]
    RegularityFailed,

    #[error("no instability found up to search bound {bound:.3e}")]
    NoInstabilityFound { bound: f64 },

    #[error("problem file: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
