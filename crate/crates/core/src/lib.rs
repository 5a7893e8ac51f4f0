//! Group-sparse low-rank image restoration.
//!
//! Stacks of mutually similar patches form low-rank matrices; each group
//! gets an adaptive rank-1 atom dictionary from its own SVD, which turns
//! group sparse coding into singular value shrinkage. An ADMM loop
//! alternates a data-consistency step against the degradation operator
//! (pixel masks or block-Gaussian compressive sensing) with per-group
//! weighted lp shrinkage of the spectrum.

pub mod analyze;
pub mod degrade;
pub mod dictionary;
pub mod error;
pub mod grouping;
pub mod image;
pub mod lowrank;
pub mod restore;

pub use error::{Error, Result};
pub use image::{Image, PatchCoord};
pub use restore::{DegradationOp, Observation, SolverConfig};
