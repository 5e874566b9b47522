//! Radial numerical lab for the focusing cubic NLS in three dimensions.

pub mod banded;
pub mod classify;
pub mod config;
pub mod error;
pub mod evolve;
pub mod grid;
pub mod ground_state;
pub mod linearized;
pub mod modulation;
pub mod profiles;
pub mod report;
pub mod selftest;
pub mod sweep;
pub mod virial;

pub use error::{LabError, Result};
pub use grid::{Norms, RadialField, RadialGrid};
