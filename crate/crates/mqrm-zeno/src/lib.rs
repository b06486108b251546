//! Quantum Zeno and anti-Zeno dynamics of a two-level system coupled to a
//! harmonic ladder of cavity modes (the multimode Rabi model), with the mode
//! register initially in a squeezed thermal state.
//!
//! Survival probabilities under repeated projective measurement and the
//! effective decay rate γ(τ) = −ln P_sur(τ)/τ are computed by three mutually
//! cross-checking engines:
//!
//! - [`analytic`]: closed-form rates from the short-time kernel of the
//!   single-excitation dynamics, including the squeezing-renormalized variant;
//! - [`se_oracle`]: a numerically exact integrator of the coupled amplitude
//!   ODEs in the single-excitation subspace of the thermofield-doubled chain;
//! - [`tensornet`]: matrix-product-state time evolution (TDVP) of the full
//!   thermofield-doubled Hamiltonian, with a dense exact-diagonalization
//!   checker for small instances.
//!
//! [`model`] holds the shared Hamiltonian construction, [`zeno`] the
//! measurement protocol and physics analysis (crossover location, energy
//! flow, critical squeezing angles), and [`config`]/[`runner`] the batch
//! front-end machinery behind the `mqrm` binary.

pub mod analytic;
pub mod config;
pub mod model;
pub mod output;
pub mod runner;
pub mod se_oracle;
pub mod tensornet;
pub mod zeno;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("engine precondition violated: {0}")]
    Engine(String),
    #[error("Hilbert-space dimension guard exceeded: {0}")]
    DimensionGuard(String),
    #[error("evolution failed to converge: {0}")]
    NonConverged(String),
    #[error("unknown observable: {0}")]
    UnknownObservable(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
