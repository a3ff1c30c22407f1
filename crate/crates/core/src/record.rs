use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordKind {
    /// Back-to-back (cabled) system response.
    Calibration,
    /// Over-the-air snapshot.
    Measurement,
}

/// A uniformly sampled complex baseband record.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexRecord {
    samples: Vec<Complex64>,
    sample_rate_hz: f64,
    center_frequency_hz: f64,
    kind: RecordKind,
}

impl ComplexRecord {
    pub fn new(
        samples: Vec<Complex64>,
        sample_rate_hz: f64,
        center_frequency_hz: f64,
        kind: RecordKind,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("record has no samples"));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::invalid(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if !(center_frequency_hz.is_finite() && center_frequency_hz > 0.0) {
            return Err(Error::invalid(format!(
                "center frequency must be positive, got {center_frequency_hz}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            center_frequency_hz,
            kind,
        })
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn center_frequency_hz(&self) -> f64 {
        self.center_frequency_hz
    }

    pub fn kind(&self) -> RecordKind {
        self.kind
    }

    /// Checks the record against the configured record length.
    pub fn expect_len(&self, record_len: usize) -> Result<()> {
        if self.samples.len() != record_len {
            return Err(Error::invalid(format!(
                "record has {} samples, expected {record_len}",
                self.samples.len()
            )));
        }
        Ok(())
    }

    /// Mean sample power.
    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }
}
