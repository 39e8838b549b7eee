//! Two-membrane etalon toolkit.
//!
//! Models a low-finesse Fabry-Perot cavity formed by two movable dielectric
//! membranes: slab coefficients, steady Airy response, time-domain field
//! recursion with moving mirrors, first-order sideband transfer functions,
//! balanced homodyne spectra and the fitters used to characterize a real
//! device (cavity length, finesse, membrane thickness, mechanical Q).

pub mod bessel;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod etalon;
pub mod fit;
pub mod homodyne;
pub mod io;
pub mod mechanics;
pub mod response;
pub mod selftest;
pub mod series;
pub mod slab;

pub use error::{Error, Result};

/// Speed of light in vacuum [m/s].
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub use num_complex::Complex64;
