//! Desk-scale simulator for chip-to-chip quantum key distribution links.
//!
//! Weak-coherent-pulse frames for BB84 (time-bin, vacuum + weak decoy),
//! coherent one-way (COW) and differential phase shift (DPS) are generated,
//! attenuated by an emulated fibre link, decoded by a passive receiver
//! (tunable beamsplitter, asymmetric Mach-Zehnder interferometer with a
//! stepped delay line, superconducting detectors) and analysed into sifted,
//! error and secret key rates.
//!
//! The pipeline is organised bottom-up:
//!
//! * [`model`]: complex amplitudes, pulse frames, counter-based random streams
//!   and the shared entropy / decibel helpers.
//! * [`transmitter`]: protocol encoders and finite extinction.
//! * [`channel`]: fibre attenuation.
//! * [`receiver`]: optics and single-photon detection.
//! * [`security`]: sifting, visibility, decoy bounds and key rates.
//! * [`harness`]: configuration, Monte Carlo and analytic runners, sweeps and
//!   report emission.

pub mod channel;
pub mod error;
pub mod harness;
pub mod model;
pub mod receiver;
pub mod security;
pub mod transmitter;

pub use error::{QkdError, Result};
