//! Number-conserving TEBD for open Bose-Hubbard chains.
//!
//! The crate builds chain Hamiltonians ([`model`]), stores states as
//! particle-number-tagged matrix product states ([`symmps`]), evolves them in
//! real and imaginary time ([`tebd`]) and measures densities and end-to-end
//! entanglement ([`observables`]). Small chains can be checked against exact
//! diagonalization ([`oracle`]); [`experiments`] drives whole runs from a
//! JSON config.

pub mod error;
pub mod experiments;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod scalar;
pub mod symmps;
pub mod tebd;

pub use error::{Error, Result};
pub use model::{LatticeSpec, LocalPotential, Profile};
pub use symmps::{BondSpectrum, CanonicalState, TruncationPolicy};
pub use tebd::{EvolutionParams, GroundState, Mode};
