//! Post-processing for multi-band channel-sounder campaigns.
//!
//! The processing chain mirrors a time-domain PN sounder:
//!
//! 1. [`calib`] removes the back-to-back system response by spectral
//!    division and returns the channel impulse response (CIR).
//! 2. [`apdp`] gates CIRs by SNR, averages them into an average power delay
//!    profile (APDP), estimates the noise floor and extracts multipath
//!    components (MPCs).
//! 3. [`largescale`] turns MPC power into path loss through the link budget
//!    and fits close-in (CI) and floating-intercept (FI) models.
//! 4. [`dispersion`] and [`kfactor`] compute RMS delay spread and the Ricean
//!    K factor.
//!
//! [`synth`] generates corridor channels with known parameters so every
//! stage can be checked against ground truth, and [`capture`],
//! [`manifest`], [`pipeline`] and [`report`] cover the on-disk formats and
//! batch orchestration.

pub mod apdp;
pub mod calib;
pub mod capture;
pub mod db;
pub mod dispersion;
pub mod error;
pub mod kfactor;
pub mod largescale;
pub mod manifest;
pub mod pipeline;
pub mod record;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
