//! Performance models for free-space quantum key distribution links.
//!
//! The crate models a line-of-sight optical channel (geometric beam spread
//! plus Beer-Lambert atmospheric attenuation) and, on top of it, the
//! quantum bit error rate and secret key rate of four QKD protocols:
//!
//! * prepare-and-measure **BB84** and **six-state** with heralded single
//!   photons ([`single_photon`]),
//! * entanglement-based **E91** with CHSH-certified security ([`e91`]),
//! * entanglement-based **BBM92** with accidental-coincidence noise
//!   ([`bbm92`]).
//!
//! Analytic formulas are cross-checked by a Monte Carlo detection model
//! ([`mc`]). Parameter sweeps, threshold searches, and reference-table
//! reports live in [`sweep`]; TOML configuration ingestion in [`config`].

pub mod bbm92;
pub mod channel;
pub mod config;
pub mod e91;
pub mod error;
pub mod math;
pub mod mc;
pub mod single_photon;
pub mod sweep;

pub use error::{Error, Result};
pub use math::{LossDb, Probability, Tolerance, Transmittance};
