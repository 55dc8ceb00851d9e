//! Joint photon-number, conditional and quasi-distribution statistics for a
//! three-mode parametric process observed as a single field and a compound
//! (summed) field.
//!
//! The pipeline runs from raw photocount moments to Gaussian state parameters
//! ([`moments`]), from parameters to exact photon-number distributions
//! ([`distributions`]) and s-ordered intensity quasi-distributions
//! ([`quasiprob`]), and from the interaction Hamiltonian to the same
//! parameters ([`dynamics`]). [`efficiency`] studies detector-loss
//! degradation of conditional state preparation and [`sampler`] generates
//! synthetic classical-regime photocount records for validation.

pub mod distributions;
pub mod dynamics;
pub mod efficiency;
pub mod error;
pub mod moments;
pub mod numerics;
pub mod params;
pub mod quasiprob;
pub mod sampler;

pub use error::{Error, ErrorCategory, Result};
pub use params::GsnParams;
