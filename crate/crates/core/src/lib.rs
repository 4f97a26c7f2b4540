//! Certified learning of local Hamiltonians from Gibbs-state expectation values.
//!
//! The pipeline is: a [`model::HamiltonianModel`] and a perturber set from
//! [`model::enumerate_pkl`], expectation tables from [`oracle`], the matrix
//! constraint system from [`eeb::assemble`], and interval or confidence
//! programs from [`learn`]. [`modular`] is a dense reference implementation of
//! the GNS-space operators used to cross-check everything else.

pub mod eeb;
pub mod error;
pub mod learn;
pub mod linalg;
pub mod model;
pub mod modular;
pub mod oracle;
pub mod pauli;

pub use error::{Error, Result};
pub use pauli::PauliString;
