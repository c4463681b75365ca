//! Thermal quantum-correlation measures and demon-style work extraction on
//! multi-qubit density matrices.
//!
//! The crate is organized bottom-up:
//! - [`qcore`]: density matrices, labeled subsystem layouts, partial trace,
//!   entropies.
//! - [`measurement`]: rank-one projective product measurements, the
//!   non-selective channel, and marginal eigenbases.
//! - [`correlations`]: discord-type functionals at a fixed measurement.
//! - [`optimizer`]: grid + simplex minimization over product bases.
//! - [`demon`]: quantum/classical work, the sequential extraction
//!   protocol, and the purification circuit.
//! - [`states`]: state-family factories and seeded random states.
//! - [`statefile`]: a plain-text matrix interchange format.

pub mod correlations;
pub mod demon;
pub mod error;
pub mod measurement;
pub mod optimizer;
pub mod qcore;
pub mod statefile;
pub mod states;

pub use error::{Error, Result};
pub use measurement::{ProductBasisSpec, QubitBasis};
pub use optimizer::{CandidateGrid, MinimizationResult};
pub use qcore::{DensityMatrix, PureState, SubsystemLayout};
