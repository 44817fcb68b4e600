//! Equilibration of non-interacting Bose and Fermi gases.
//!
//! Expectation values of particle-counting observables in an `N`-particle
//! free gas reduce to a single-particle problem: a weighted ensemble of
//! orthonormal orbitals evolving under the one-body Hamiltonian, measured by
//! the projector onto the counted modes. This crate implements that
//! reduction, the worked examples built on it (fermions released in a box,
//! bosons after trap quenches, free lattice models) and the general
//! equilibration bounds, together with a brute-force Fock-space simulator
//! used as an independent oracle.
//!
//! Data-parallel loops (time grids, parameter sweeps, random-instance
//! sweeps) run on rayon when the `parallel` feature is enabled (default) and
//! fall back to plain iterators otherwise. See [`exec`].

pub mod bounds;
pub mod bridge;
pub mod error;
pub mod exec;
pub mod fermibox;
pub mod fock;
pub mod lattice;
pub mod linalg;
pub mod quad;
pub mod quench;
pub mod spectral;

pub use error::{Error, Result};
pub use exec::Exec;

pub use num_complex::Complex64 as C64;
