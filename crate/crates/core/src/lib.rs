//! Encrypted 1:N cosine matching with slot-packed feature vectors.
//!
//! The crate has four layers: [`he`] defines the leveled operation contract
//! and an exact cleartext backend, [`ckks`] implements the contract over a
//! lattice scheme, [`pipeline`] holds the packing and matching algorithms,
//! and [`cost`] models and measures their running time.

pub mod ckks;
pub mod cost;
pub mod error;
pub mod fvec;
pub mod he;
pub mod pipeline;

pub use error::HeError;
