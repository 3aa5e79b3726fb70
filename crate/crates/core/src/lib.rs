//! Numerical laboratory for a Vlasov-Navier-Stokes system in a box with
//! absorbing walls.

pub mod asymptotics;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod flowmap;
pub mod fluid;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod kinetic;
pub mod linalg;
pub mod run;
pub mod scenarios;
pub mod transport;

pub use error::{Error, Result};
