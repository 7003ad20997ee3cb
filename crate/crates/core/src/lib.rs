//! Damped Gaussian message passing for `y = A h + z` with unit-magnitude `A`,
//! with convergence certificates and MIMO-OFDM measurement builders.
//!
//! - [`linmodel`]: the model, its exact posterior, seeded instances.
//! - [`siga`]: the damped `(theta, nu)` iteration.
//! - [`convergence`]: `nu` fixed points, damping bounds, certificates.
//! - [`mimo`]: partial-DFT Kronecker measurements for channel estimation.
//! - [`harness`]: TOML-driven sweeps writing CSV and JSON artifacts.

pub mod convergence;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod linmodel;
pub mod mimo;
pub mod report;
pub mod siga;

pub use convergence::{certify, damping_bounds, rho_shift, ConvergenceCertificate, DampingBounds};
pub use error::{Result, SigaError};
pub use linmodel::{exact_posterior, GaussianLinearModel};
pub use siga::{run, SigaConfig, SigaResult, Status};
