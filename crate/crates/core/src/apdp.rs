//! SNR gating, APDP averaging, noise-floor estimation and multipath
//! extraction.

use serde::{Deserialize, Serialize};

use crate::calib::Cir;
use crate::db::{db_to_pow, pow_to_db};
use crate::error::{Error, Result};

pub const DEFAULT_SNR_GATE_DB: f64 = 25.0;
pub const DEFAULT_FLOOR_MARGIN_DB: f64 = 6.0;
pub const DEFAULT_PEAK_WINDOW_DB: f64 = 25.0;

/// Delay-bin window used for noise estimation, as fractions of the record.
///
/// The window is `[start_fraction, end_fraction)` of the bins and must not
/// overlap the signal region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseWindow {
    pub start_fraction: f64,
    pub end_fraction: f64,
}

impl Default for NoiseWindow {
    /// Trailing 25 % of the bins.
    fn default() -> Self {
        Self {
            start_fraction: 0.75,
            end_fraction: 1.0,
        }
    }
}

impl NoiseWindow {
    pub fn range(&self, n: usize) -> Result<std::ops::Range<usize>> {
        let ok = (0.0..=1.0).contains(&self.start_fraction)
            && (0.0..=1.0).contains(&self.end_fraction);
        if !ok {
            return Err(Error::invalid("noise window fractions must lie in [0, 1]"));
        }
        let start = (self.start_fraction * n as f64).round() as usize;
        let end = ((self.end_fraction * n as f64).round() as usize).min(n);
        if start >= end {
            return Err(Error::invalid("noise window is empty"));
        }
        Ok(start..end)
    }
}

/// Median of linear powers inside the window, in dB.
pub fn noise_floor_of(powers: &[f64], window: &NoiseWindow) -> Result<f64> {
    let range = window.range(powers.len())?;
    let mut guard: Vec<f64> = powers[range].to_vec();
    guard.sort_by(f64::total_cmp);
    let m = guard.len();
    let median = if m % 2 == 1 {
        guard[m / 2]
    } else {
        0.5 * (guard[m / 2 - 1] + guard[m / 2])
    };
    Ok(pow_to_db(median))
}

/// Peak tap power minus the CIR's own noise floor, dB.
pub fn cir_snr_db(cir: &Cir, window: &NoiseWindow) -> Result<f64> {
    if cir.is_empty() {
        return Err(Error::invalid("empty CIR"));
    }
    let powers = cir.powers();
    let peak = powers.iter().copied().fold(0.0, f64::max);
    Ok(pow_to_db(peak) - noise_floor_of(&powers, window)?)
}

/// Keeps the CIRs whose SNR reaches `min_snr_db`, using the default window.
pub fn snr_gate(cirs: &[Cir], min_snr_db: f64) -> Result<Vec<Cir>> {
    snr_gate_with(cirs, min_snr_db, &NoiseWindow::default())
}

pub fn snr_gate_with(cirs: &[Cir], min_snr_db: f64, window: &NoiseWindow) -> Result<Vec<Cir>> {
    let mut kept = Vec::with_capacity(cirs.len());
    for cir in cirs {
        if cir_snr_db(cir, window)? >= min_snr_db {
            kept.push(cir.clone());
        }
    }
    if kept.is_empty() {
        return Err(Error::AllSnapshotsRejected);
    }
    Ok(kept)
}

/// Average power delay profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Apdp {
    pub power_db: Vec<f64>,
    pub delay_bin_s: f64,
    /// Set by [`estimate_noise_floor`].
    pub noise_floor_db: Option<f64>,
    pub n_averaged: usize,
}

impl Apdp {
    pub fn len(&self) -> usize {
        self.power_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power_db.is_empty()
    }

    pub fn max_db(&self) -> f64 {
        self.power_db.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn linear(&self) -> Vec<f64> {
        self.power_db.iter().map(|&p| db_to_pow(p)).collect()
    }
}

/// Per-bin mean of `|h_n(τ)|²` over the supplied CIRs.
pub fn average_apdp(cirs: &[Cir]) -> Result<Apdp> {
    let first = cirs
        .first()
        .ok_or_else(|| Error::invalid("no CIRs to average"))?;
    let n = first.len();
    if n == 0 {
        return Err(Error::invalid("empty CIR"));
    }
    let mut acc = vec![0.0; n];
    for cir in cirs {
        if cir.len() != n {
            return Err(Error::invalid(format!(
                "CIR length mismatch: {} vs {n}",
                cir.len()
            )));
        }
        if (cir.delay_bin_s - first.delay_bin_s).abs() > 1e-9 * first.delay_bin_s {
            return Err(Error::invalid("CIR delay bins differ"));
        }
        for (a, t) in acc.iter_mut().zip(&cir.taps) {
            *a += t.norm_sqr();
        }
    }
    let count = cirs.len() as f64;
    Ok(Apdp {
        power_db: acc.into_iter().map(|a| pow_to_db(a / count)).collect(),
        delay_bin_s: first.delay_bin_s,
        noise_floor_db: None,
        n_averaged: cirs.len(),
    })
}

/// Estimates the noise floor over the guard window and stores it on the APDP.
pub fn estimate_noise_floor(apdp: &mut Apdp, guard: &NoiseWindow) -> Result<f64> {
    let floor = noise_floor_of(&apdp.linear(), guard)?;
    // The median of a window can never exceed the global maximum, but
    // dB/linear round trips may nudge it by an ulp.
    let floor = floor.min(apdp.max_db());
    apdp.noise_floor_db = Some(floor);
    Ok(floor)
}

/// A single multipath component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mpc {
    pub delay_s: f64,
    pub power_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcList {
    pub components: Vec<Mpc>,
    pub threshold_db: f64,
}

impl MpcList {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// Threshold settings for [`extract_mpcs_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakThresholds {
    /// Margin above the noise floor.
    pub floor_margin_db: f64,
    /// Dynamic range below the strongest bin.
    pub peak_window_db: f64,
}

impl Default for PeakThresholds {
    fn default() -> Self {
        Self {
            floor_margin_db: DEFAULT_FLOOR_MARGIN_DB,
            peak_window_db: DEFAULT_PEAK_WINDOW_DB,
        }
    }
}

/// `max(floor + 6, peak - 25)` with the default settings.
pub fn mpc_threshold_db(noise_floor_db: f64, peak_db: f64, t: &PeakThresholds) -> f64 {
    (noise_floor_db + t.floor_margin_db).max(peak_db - t.peak_window_db)
}

/// Indices of local maxima. A run of equal values counts as one peak,
/// reported at its earliest bin, when it is strictly above both neighbours.
/// Out-of-range neighbours count as `-inf`.
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    let n = values.len();
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[j] == values[i] {
            j += 1;
        }
        let left = if i == 0 { f64::NEG_INFINITY } else { values[i - 1] };
        let right = if j == n { f64::NEG_INFINITY } else { values[j] };
        if values[i] > left && values[i] > right {
            peaks.push(i);
        }
        i = j;
    }
    peaks
}

pub fn extract_mpcs(apdp: &Apdp) -> Result<MpcList> {
    extract_mpcs_with(apdp, &PeakThresholds::default())
}

pub fn extract_mpcs_with(apdp: &Apdp, t: &PeakThresholds) -> Result<MpcList> {
    let floor = apdp
        .noise_floor_db
        .ok_or_else(|| Error::invalid("APDP noise floor has not been estimated"))?;
    if apdp.is_empty() {
        return Err(Error::EmptyMpcSet);
    }
    let threshold_db = mpc_threshold_db(floor, apdp.max_db(), t);
    let components: Vec<Mpc> = local_maxima(&apdp.power_db)
        .into_iter()
        .filter(|&i| apdp.power_db[i] >= threshold_db)
        .map(|i| Mpc {
            delay_s: i as f64 * apdp.delay_bin_s,
            power_db: apdp.power_db[i],
        })
        .collect();
    if components.is_empty() {
        return Err(Error::EmptyMpcSet);
    }
    Ok(MpcList {
        components,
        threshold_db,
    })
}
