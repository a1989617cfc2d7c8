//! Far-field keyword spotting: feature extraction, small CNN/LSTM models
//! trained from scratch, domain-adaptive losses, streaming detection and
//! false-reject/false-alarm evaluation.

pub mod cli;
pub mod config;
pub mod detect;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod ingest;
pub mod losses;
pub mod models;
pub mod netcore;
pub mod train;

pub use error::{Error, Result};
