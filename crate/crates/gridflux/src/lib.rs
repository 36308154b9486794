//! Structure-preserving energy modeling and control for small power-system
//! studies.
//!
//! The crate is organized in layers:
//!
//! - [`numerics`]: dense linear-algebra kernels (left null space, Lyapunov
//!   solve, symmetric eigen-extremes) and a deterministic fixed-step RK4
//!   integrator.
//! - [`components`]: generator-turbine-governor models in transformed state
//!   space, interconnected-area models with a structurally singular power
//!   coupling, a controllable-source RLC circuit feeding a constant-power
//!   load, and disturbance signal generators.
//! - [`intvar`]: interaction-variable extraction (left null space of the
//!   component matrix), generalized port flows (instantaneous power and rate
//!   of change of instantaneous reactive power), and aggregate energy
//!   dynamics.
//! - [`stability`]: decentralized small-signal stability assessment via
//!   vector Lyapunov functions and the Metzler comparison-matrix test.
//! - [`control`]: conventional baselines (two-loop PI, PD) and nonlinear
//!   energy controllers (single- and two-timescale), the energy-to-physical
//!   control map, and a discrete AGC loop.
//! - [`sim`]: scenario assembly, closed-loop simulation, collapse/settling
//!   detection, and conservation audits.
//! - [`config`] / [`cli`]: strict JSON scenario configs and the batch
//!   command-line front end.
//! - [`accept`]: the runnable acceptance suite (also exposed as the `accept`
//!   CLI subcommand).
//!
//! See the `examples/` directory for one runnable example per major
//! capability.

pub mod accept;
pub mod cli;
pub mod components;
pub mod config;
pub mod control;
pub mod intvar;
pub mod numerics;
pub mod sim;
pub mod stability;

#[cfg(test)]
pub(crate) mod test_oracles;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// No singular value fell below the null-space threshold: the matrix has
    /// no (numerical) left null space, i.e. the model lacks a conservation
    /// structure.
    #[error("matrix has no left null space at tolerance {tol:e} (smallest relative singular value {smallest_rel:e})")]
    EmptyNullSpace { tol: f64, smallest_rel: f64 },

    /// A matrix required to be Hurwitz has an eigenvalue with nonnegative
    /// real part.
    #[error("matrix is not Hurwitz: eigenvalue with real part {real_part:e}")]
    NotHurwitz { real_part: f64 },

    /// The Kronecker system of the Lyapunov equation is rank deficient.
    #[error("Lyapunov solver: Kronecker system is singular")]
    SolverSingular,

    /// A symmetric-only operation received an asymmetric matrix.
    #[error("matrix is not symmetric: max |M - M^T| = {deviation:e}")]
    NotSymmetric { deviation: f64 },

    /// A positive-definite weight matrix was not positive definite.
    #[error("weight matrix is not positive definite: min eigenvalue {min_eig:e}")]
    NotPositiveDefinite { min_eig: f64 },

    /// An rhs guard predicate failed during integration (e.g. voltage below
    /// the constant-power-load floor, current below the control-map floor).
    #[error("guard tripped at t = {t}: {what}")]
    GuardTripped { t: f64, what: String },

    /// A state left the finite range during integration.
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    /// Operand dimensions do not agree.
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    /// The internal susceptance graph of an area does not connect all
    /// generator nodes.
    #[error("area topology is disconnected: generator {node} unreachable")]
    DisconnectedTopology { node: usize },

    /// Invalid parameter or configuration value.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
