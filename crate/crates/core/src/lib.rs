//! Interior-boundary construction of the fixed-momentum Nelson Hamiltonian
//! on a discretized, truncated Fock space.

pub mod bounds;
pub mod campaign;
pub mod config;
pub mod error;
pub mod fock;
pub mod grid;
pub mod instance;
pub mod linalg;
pub mod model;
pub mod ops_core;
pub mod ops_modified;
pub mod positivity;
pub mod renorm;
pub mod resolvent;

pub use error::{Error, Result};
