//! Numerical laboratory for the projection-operator treatment of constrained
//! Hamiltonian systems.
//!
//! The crate is organised by subsystem:
//!
//! - [`fock`]: truncated Fock and spin spaces, canonical operators, coherent
//!   states and their geometry.
//! - [`projection`]: regularized spectral projectors built from constraint
//!   operators, the multiplier (γ) integral representation, and germ
//!   extraction for constraints with continuous spectrum.
//! - [`dynamics`]: exact, reduced and interleaved (Chernoff) evolution.
//! - [`lattice`]: coherent-state lattice path integrals evaluated with grid
//!   transfer matrices.
//! - [`classical`]: polynomial Poisson brackets and classical constraint
//!   classification.
//!
//! Units are fixed with ℏ = 1 and `Q = (A + A†)/√2`.

pub mod classical;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod fock;
pub mod lattice;
pub mod linalg;
pub mod projection;
pub mod quadrature;

pub use config::Tolerances;
pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
