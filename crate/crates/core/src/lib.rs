//! Storage and retrieval efficiency of photons in ordered atomic arrays.
//!
//! Lengths are in units of the resonant wavelength and rates in units of the
//! single-atom decay rate, so `k0 = 2 pi` and `Gamma0 = 1`.

pub mod config;
pub mod detection;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod greens;
pub mod quadrature;
pub mod run;
pub mod retrieval;
pub mod spectral;
pub mod studies;

pub use error::{Error, Result};

/// Resonant wavenumber.
pub const K0: f64 = 2.0 * std::f64::consts::PI;

/// Resonant scattering cross section `3 lambda^2 / (2 pi)`.
pub const CROSS_SECTION: f64 = 3.0 / (2.0 * std::f64::consts::PI);
