//! Open ASEP with reservoirs, its microscopic Cole-Hopf transform, and the Robin-boundary
//! heat kernels and stochastic heat equation that appear in its weakly asymmetric limit.

pub mod asep;
pub mod error;
pub mod gartner;
pub mod green;
pub mod io;
pub mod kernel;
pub mod params;
pub mod quadrature;
pub mod she;
pub mod stats;

pub use error::{Error, Result};
