//! Oriented gl(2) foam Khovanov complexes over the integers.

pub mod corpus;
pub mod burnside;
pub mod cube;
pub mod diagram;
pub mod differential;
pub mod error;
pub mod generators;
pub mod homology;
pub mod moves;
pub mod sparse;

pub use error::{Error, Result};
