//! Noise-robust keyword spotting toolkit.
//!
//! The crate bundles everything needed to train and evaluate small keyword
//! classifiers under controlled noise: corpus and noise-bank ingestion, an
//! SNR-exact augmentation pipeline with a log-mel frontend, compact conv and
//! attention encoders with double-precision backprop, an inter-intra
//! contrastive regularizer, a reproducible training loop and a noise-grid
//! evaluation harness.

pub mod config;
pub mod dataio;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod i2cr;
pub mod model;
pub mod rngutil;
pub mod train;

pub use error::{Error, Result};
