//! Virtual quantum subspace expansion on a classical simulator.
//!
//! The pipeline: ingest molecular integrals from FCIDUMP files, prepare a
//! variational ground state in a small active space, estimate subspace
//! matrices from (optionally noisy) measurement data, and solve the
//! regularized generalized eigenvalue problem for ground- and excited-state
//! potential energy curves.

pub mod eigh;
pub mod error;
pub mod fermion;
pub mod integrals;
pub mod oracles;
pub mod qubitops;
pub mod scan;
pub mod simulator;
pub mod spectra;
pub mod subspace;
pub mod vqe;

pub use error::{Error, Result};
