//! Back-to-back calibration removal.
//!
//! The calibration record is `y_th = u * g_th` and a measurement is
//! `y_rx = u * g_th * h`. Dividing the spectra leaves `H(f)`, and the inverse
//! transform gives the CIR. Transforms are unnormalized forward and `1/N`
//! inverse, so tap powers are directly comparable across records.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::record::ComplexRecord;

/// Default spectral-division floor relative to the calibration peak, dB.
pub const DEFAULT_FLOOR_DB: f64 = -40.0;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

fn inverse_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Unnormalized forward DFT.
pub fn fft(samples: &[Complex64]) -> Vec<Complex64> {
    let mut buf = samples.to_vec();
    if !buf.is_empty() {
        forward_plan(buf.len()).process(&mut buf);
    }
    buf
}

/// Inverse DFT scaled by `1/N`.
pub fn ifft(bins: &[Complex64]) -> Vec<Complex64> {
    let mut buf = bins.to_vec();
    if !buf.is_empty() {
        inverse_plan(buf.len()).process(&mut buf);
        let scale = 1.0 / buf.len() as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
    }
    buf
}

/// Spectrum of a record.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    pub bins: Vec<Complex64>,
    pub bin_spacing_hz: f64,
    pub center_frequency_hz: f64,
}

impl FrequencyResponse {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }
}

/// Channel impulse response on a uniform delay grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cir {
    pub taps: Vec<Complex64>,
    /// Seconds per delay bin.
    pub delay_bin_s: f64,
}

impl Cir {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Linear tap powers `|h(τ)|²`.
    pub fn powers(&self) -> Vec<f64> {
        self.taps.iter().map(|t| t.norm_sqr()).collect()
    }

    pub fn scaled(&self, a: Complex64) -> Cir {
        Cir {
            taps: self.taps.iter().map(|t| t * a).collect(),
            delay_bin_s: self.delay_bin_s,
        }
    }
}

pub fn to_frequency_domain(record: &ComplexRecord) -> Result<FrequencyResponse> {
    if record.is_empty() {
        return Err(Error::invalid("empty record"));
    }
    let n = record.len();
    Ok(FrequencyResponse {
        bins: fft(record.samples()),
        bin_spacing_hz: record.sample_rate_hz() / n as f64,
        center_frequency_hz: record.center_frequency_hz(),
    })
}

/// Bins of the calibration spectrum that survive the division floor.
///
/// A bin is kept when `|Y_th| >= peak|Y_th| · 10^(floor_db/20)`.
pub fn kept_bins(y_th: &FrequencyResponse, floor_db: f64) -> Result<Vec<bool>> {
    let peak = y_th.bins.iter().map(|b| b.norm()).fold(0.0, f64::max);
    if peak == 0.0 || !peak.is_finite() {
        return Err(Error::DegenerateCalibration);
    }
    let limit = peak * 10f64.powf(floor_db / 20.0);
    Ok(y_th.bins.iter().map(|b| b.norm() >= limit).collect())
}

/// `H(f) = Y_rx(f) / Y_th(f)` on kept bins, zero elsewhere.
pub fn deconvolve(
    y_rx: &FrequencyResponse,
    y_th: &FrequencyResponse,
    floor_db: f64,
) -> Result<FrequencyResponse> {
    if y_rx.len() != y_th.len() {
        return Err(Error::invalid(format!(
            "bin count mismatch: measurement {} vs calibration {}",
            y_rx.len(),
            y_th.len()
        )));
    }
    if y_rx.is_empty() {
        return Err(Error::invalid("empty spectrum"));
    }
    let kept = kept_bins(y_th, floor_db)?;
    let bins = y_rx
        .bins
        .iter()
        .zip(&y_th.bins)
        .zip(&kept)
        .map(|((rx, th), &keep)| if keep { rx / th } else { Complex64::new(0.0, 0.0) })
        .collect();
    Ok(FrequencyResponse {
        bins,
        bin_spacing_hz: y_rx.bin_spacing_hz,
        center_frequency_hz: y_rx.center_frequency_hz,
    })
}

pub fn to_cir(h: &FrequencyResponse) -> Result<Cir> {
    if h.is_empty() {
        return Err(Error::invalid("empty spectrum"));
    }
    Ok(Cir {
        taps: ifft(&h.bins),
        delay_bin_s: 1.0 / (h.bin_spacing_hz * h.len() as f64),
    })
}
