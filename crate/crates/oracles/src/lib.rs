//! Independent reference computations for the golden constants.
//!
//! Nothing here depends on the lab library: the ODE integrator, the
//! discretization and the eigensolver are all separate implementations.

pub mod dp45;
pub mod golden;
pub mod sine;
