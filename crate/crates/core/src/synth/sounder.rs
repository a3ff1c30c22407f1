//! Baseband model of a periodic-PN time-domain sounder.
//!
//! The reference waveform `u` is convolved (circularly, one record is one
//! PN period) with the system response `g_th` to give the calibration
//! record. Over-the-air snapshots are the calibration waveform convolved
//! with a tap realization plus circular complex Gaussian noise.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::db::db_to_pow;
use crate::error::{Error, Result};
use crate::record::{ComplexRecord, RecordKind};
use crate::synth::geometry::{Tap, TapSet};
use crate::synth::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ReferenceWaveform {
    /// Zadoff–Chu polyphase sequence: constant envelope and a flat periodic
    /// spectrum, so no bin is lost to the division floor.
    ZadoffChu { root: u64 },
    /// ±1 chips from a 15-stage maximal-length LFSR.
    BinaryPn { lfsr_seed: u16 },
}

impl Default for ReferenceWaveform {
    fn default() -> Self {
        ReferenceWaveform::ZadoffChu { root: 1 }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl ReferenceWaveform {
    pub fn chips(&self, n: usize) -> Result<Vec<Complex64>> {
        if n == 0 {
            return Err(Error::invalid("record length must be positive"));
        }
        match *self {
            ReferenceWaveform::ZadoffChu { root } => {
                let nn = n as u64;
                if root == 0 || gcd(root, nn) != 1 {
                    return Err(Error::invalid(format!(
                        "Zadoff-Chu root {root} is not coprime with length {n}"
                    )));
                }
                // u·k·(k + c_f) / N with c_f = N mod 2; reduced modulo 2N
                // in integers to keep the phase exact for long sequences.
                let cf = nn % 2;
                Ok((0..nn)
                    .map(|k| {
                        let m = ((root % (2 * nn)) * ((k * (k + cf)) % (2 * nn))) % (2 * nn);
                        Complex64::from_polar(1.0, -PI * m as f64 / nn as f64)
                    })
                    .collect())
            }
            ReferenceWaveform::BinaryPn { lfsr_seed } => {
                // x^15 + x^14 + 1
                let mut state: u16 = if lfsr_seed & 0x7fff == 0 { 1 } else { lfsr_seed & 0x7fff };
                Ok((0..n)
                    .map(|_| {
                        let bit = ((state >> 14) ^ (state >> 13)) & 1;
                        state = ((state << 1) | bit) & 0x7fff;
                        Complex64::new(if bit == 1 { 1.0 } else { -1.0 }, 0.0)
                    })
                    .collect())
            }
        }
    }
}

/// Record layout and reference waveform of the simulated sounder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SounderConfig {
    pub record_len: usize,
    /// Chip rate; one sample per chip, so also the sample rate.
    pub bandwidth_hz: f64,
    pub waveform: ReferenceWaveform,
    /// Back-to-back system impulse response `g_th`, as `[re, im]` pairs.
    pub system_response: Vec<[f64; 2]>,
}

impl Default for SounderConfig {
    fn default() -> Self {
        Self {
            record_len: 4800,
            bandwidth_hz: 320e6,
            waveform: ReferenceWaveform::default(),
            system_response: vec![[1.0, 0.0]],
        }
    }
}

impl SounderConfig {
    pub fn delay_bin_s(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    pub fn validate(&self) -> Result<()> {
        if self.record_len == 0 {
            return Err(Error::invalid("record length must be positive"));
        }
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return Err(Error::invalid("bandwidth must be positive"));
        }
        if self.system_response.is_empty() || self.system_response.len() > self.record_len {
            return Err(Error::invalid("system response must be 1..=record_len taps"));
        }
        Ok(())
    }

    /// Calibration waveform `u * g_th` (circular).
    pub fn reference(&self) -> Result<Vec<Complex64>> {
        self.validate()?;
        let u = self.waveform.chips(self.record_len)?;
        let g: Vec<(usize, Complex64)> = self
            .system_response
            .iter()
            .enumerate()
            .map(|(i, c)| (i, Complex64::new(c[0], c[1])))
            .collect();
        Ok(circular_sparse_conv(&u, &g))
    }

    pub fn calibration_record(&self, center_frequency_hz: f64) -> Result<ComplexRecord> {
        ComplexRecord::new(
            self.reference()?,
            self.bandwidth_hz,
            center_frequency_hz,
            RecordKind::Calibration,
        )
    }

    /// Delay bin of a tap, rounded to the nearest sample.
    pub fn tap_bin(&self, tap: &Tap) -> Result<usize> {
        let bin = (tap.delay_s * self.bandwidth_hz).round();
        if bin >= self.record_len as f64 {
            return Err(Error::invalid(format!(
                "tap delay {:.3} ns exceeds the record span",
                tap.delay_s * 1e9
            )));
        }
        Ok(bin as usize)
    }
}

/// `y[n] = Σ_l a_l · x[(n - b_l) mod N]` for sparse taps `(b_l, a_l)`.
pub(crate) fn circular_sparse_conv(x: &[Complex64], taps: &[(usize, Complex64)]) -> Vec<Complex64> {
    let n = x.len();
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for &(b, a) in taps {
        let b = b % n;
        for (i, out) in y.iter_mut().enumerate() {
            *out += a * x[(i + n - b) % n];
        }
    }
    y
}

pub(crate) fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, power: f64) -> Complex64 {
    let s = (power / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// One Ricean draw of a tap's complex gain.
pub(crate) fn draw_tap<R: Rng + ?Sized>(rng: &mut R, tap: &Tap) -> Complex64 {
    let p = db_to_pow(tap.mean_power_db);
    let specular = Complex64::from_polar(1.0, tap.phase_rad);
    if tap.k_linear.is_infinite() {
        return specular * p.sqrt();
    }
    let k = tap.k_linear;
    let los = specular * (p * k / (k + 1.0)).sqrt();
    los + complex_gaussian(rng, p / (k + 1.0))
}

/// Bin-quantized gains of one fading realization. Taps landing in the same
/// bin add coherently.
pub(crate) fn realize<R: Rng + ?Sized>(
    rng: &mut R,
    taps: &TapSet,
    cfg: &SounderConfig,
) -> Result<Vec<(usize, Complex64)>> {
    let mut out: Vec<(usize, Complex64)> = Vec::with_capacity(taps.taps.len());
    for tap in &taps.taps {
        let bin = cfg.tap_bin(tap)?;
        let a = draw_tap(rng, tap);
        match out.iter_mut().find(|(b, _)| *b == bin) {
            Some((_, acc)) => *acc += a,
            None => out.push((bin, a)),
        }
    }
    Ok(out)
}

pub(crate) fn add_noise<R: Rng + ?Sized>(rng: &mut R, y: &mut [Complex64], noise_power_db: f64, scale: f64) {
    if noise_power_db == f64::NEG_INFINITY {
        return;
    }
    let s = (db_to_pow(noise_power_db) / 2.0).sqrt() * scale;
    for v in y.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *v += Complex64::new(re * s, im * s);
    }
}

/// Independent snapshots, each with its own fading realization and noise.
///
/// Snapshot `i` draws from the stream `(seed, i)`.
pub fn generate_snapshots(
    taps: &TapSet,
    n_snapshots: usize,
    cfg: &SounderConfig,
    center_frequency_hz: f64,
    seed: u64,
) -> Result<Vec<ComplexRecord>> {
    taps.validate()?;
    let reference = cfg.reference()?;
    // reject out-of-span taps before drawing anything
    for t in &taps.taps {
        cfg.tap_bin(t)?;
    }
    (0..n_snapshots)
        .map(|i| {
            let mut r = rng::stream(seed, &[i as u64]);
            let gains = realize(&mut r, taps, cfg)?;
            let mut y = circular_sparse_conv(&reference, &gains);
            add_noise(&mut r, &mut y, taps.noise_power_db, 1.0);
            ComplexRecord::new(y, cfg.bandwidth_hz, center_frequency_hz, RecordKind::Measurement)
        })
        .collect()
}
