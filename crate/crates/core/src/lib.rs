//! Simulation of electro-optic spectral shearing of heralded single photons.
//!
//! Pulse modes live on a [`grid::TimeFrequencyGrid`] in the frame of the
//! optical carrier. Elements in [`elements`] act on pure ([`pulse::PulseMode`])
//! or mixed ([`density::SpectralDensityMatrix`]) states; [`source`] produces
//! heralded states from a joint spectral amplitude, and [`instruments`] and
//! [`counting`] turn states into count tables, fits, HOM visibilities and
//! heralded g2 values.

pub mod config;
pub mod counting;
pub mod density;
pub mod elements;
pub mod error;
pub mod fit;
pub mod grid;
pub mod instruments;
pub mod pulse;
mod roots;
pub mod runner;
pub mod source;
pub mod state;

pub use error::{Error, Result};
