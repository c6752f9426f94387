//! Federated waveform-translation GANs for PPG → ABP estimation.
//!
//! The crate simulates a complete pipeline: paired-waveform ingestion and
//! segmentation, cycle-consistent adversarial training of LSTM generators
//! against CNN discriminators, a federated-averaging protocol over simulated
//! clients, and a clinical evaluation stage (beat detection, mean arterial
//! pressure, Bland-Altman agreement, DTW/RMSE/PCC similarity).

pub mod config;
pub mod diffcore;
pub mod error;
pub mod eval;
pub mod federation;
pub mod nets;
pub mod rng;
pub mod signal;
pub mod training;

pub use error::{Error, Result};
