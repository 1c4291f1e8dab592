//! Geometric mechanics toolkit.
//!
//! Builds mechanical systems from a metric and a force law, integrates their
//! evolution fields (free, Newtonian, time-constrained, Hertz-reduced),
//! propagates Hamilton-Jacobi characteristics with action/time/length
//! functionals, quantizes symmetric contravariant tensor fields into
//! differential operators and realizes the resulting Schrodinger operators on
//! 1-D grids.

pub mod acceptance;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod hamjac;
pub mod multi_index;
pub mod operator;
pub mod quantize;
pub mod schrodgrid;
pub mod system;

pub use error::{Error, Result};
