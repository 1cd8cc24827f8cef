//! Stochastic simulation of the transverse critical point of a degenerate
//! optical parametric oscillator.

mod error;
pub mod analytics;
pub mod cli;
pub mod dynamics;
pub mod grid;
pub mod noise;
pub mod observables;
pub mod params;

pub use error::{OpoError, Result};
