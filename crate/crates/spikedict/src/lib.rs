//! Std companion to `spikedict-core`: file formats, configuration, the FFT
//! correlation kernel, parallel window coding and the `spikedict` CLI.

pub mod cli;
pub mod config;
pub mod error;
pub mod fft;
pub mod formats;
pub mod parallel;
pub mod pipeline;
pub mod templates;

pub use error::{Error, Result};
