//! Laplace linear-quadratic functional perturbation (LLQFP) for network games.
//!
//! Each player perturbs its own payoff with a linear-quadratic term whose
//! coefficients are drawn from a truncated Laplace law. The crate covers the
//! sampler, the perturbation itself, original and perturbed Nash equilibria,
//! the accuracy bounds relating them, privacy parameter planning, and an exact
//! numerical audit of the resulting (ε, δ) guarantee.
//!
//! Player indices are 0-based throughout the Rust API. Every file format and
//! report uses 1-based indices.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod equilibrium;
mod error;
pub mod experiment;
pub mod game;
pub mod linalg;
pub mod mechanism;
pub mod network;
pub mod privacy;
pub mod trunc_laplace;

pub use equilibrium::{EquilibriumResult, SolveMethod};
pub use error::{Error, Result};
pub use game::{ActionBox, LqGame, MonotoneGame, MonotoneGameOracle};
pub use mechanism::{PerturbationDraw, PerturbedLqGame};
pub use network::Network;
pub use privacy::{AuditReport, MechanismInput, PrivacyBudget};
pub use trunc_laplace::{NoiseParams, NoiseStream};

/// Crate version, embedded in every output header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
