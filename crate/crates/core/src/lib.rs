//! Simulator for a chaos-based baseband wireless link.
//!
//! Symbols are shaped by a chaotic basis function, sent through a static
//! multipath channel with AWGN, matched-filtered, and decoded against one of
//! four thresholds: zero, past-ISI only, past plus CNN-predicted future ISI,
//! and a genie that knows every transmitted symbol.
//!
//! All time is measured in symbol durations; one symbol spans `n_samp`
//! samples.

pub mod channel;
pub mod error;
pub mod harness;
pub mod isi;
pub mod neuralnet;
pub mod receiver;
pub mod waveform;

pub use error::{Error, Result};
