//! Link-level simulator and analytical toolkit for bit-interleaved coded
//! multiple beamforming with constellation precoding.
//!
//! The transmitter encodes with a convolutional code, distributes coded bits
//! over spatial streams, maps them onto QAM symbols, and mixes the first P
//! streams with a unitary precoder before singular-value beamforming. The
//! receiver computes maximum-likelihood bit metrics and decodes with a
//! Viterbi decoder. Alongside the simulation chain, the analysis module
//! enumerates error events of the coded/interleaved system and predicts the
//! diversity order that the simulated error-rate curves should exhibit.

pub mod analysis;
pub mod channel;
pub mod coding;
pub mod config;
pub mod detector;
pub mod error;
pub mod harness;
pub mod modem;
pub mod numerics;
pub mod precoding;

pub use error::{Error, Result};
