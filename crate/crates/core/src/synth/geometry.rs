//! Two-path corridor model: the direct path plus a specular reflection off
//! the corridor end behind the receiver.
//!
//! Positions are measured along the corridor axis. Delays use the axial
//! separation; antenna heights only enter the reported 3D distance.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::largescale::eval_ci;
use crate::SPEED_OF_LIGHT;

/// A value attached to one frequency band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandValue {
    pub band_ghz: f64,
    pub value: f64,
}

pub(crate) fn lookup_band(values: &[BandValue], band_ghz: f64) -> Option<f64> {
    values
        .iter()
        .find(|b| (b.band_ghz - band_ghz).abs() < 1e-6)
        .map(|b| b.value)
}

/// Extra loss of the end reflection per band, dB.
///
/// With the default 37-position layout and the LOS floating-intercept slopes
/// (1.25, 1.75, 2.03) these values put the reflection within 25 dB of the
/// direct path from position 4, 9 and 17 onwards at 2.4, 5 and 6 GHz.
pub fn default_end_reflection_loss() -> Vec<BandValue> {
    vec![
        BandValue { band_ghz: 2.4, value: 7.0 },
        BandValue { band_ghz: 5.0, value: 7.4 },
        BandValue { band_ghz: 6.0, value: 10.6 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorGeometry {
    pub length_m: f64,
    pub tx_pos_m: f64,
    pub rx_pos_m: f64,
    pub tx_height_m: f64,
    pub rx_height_m: f64,
    pub end_reflection_loss_db: Vec<BandValue>,
}

impl Default for CorridorGeometry {
    fn default() -> Self {
        Self {
            length_m: 41.0,
            tx_pos_m: 0.0,
            rx_pos_m: 10.0,
            tx_height_m: 1.95,
            rx_height_m: 1.45,
            end_reflection_loss_db: default_end_reflection_loss(),
        }
    }
}

impl CorridorGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_m.is_finite() && self.length_m > 0.0) {
            return Err(Error::invalid("corridor length must be positive"));
        }
        for (name, p) in [("tx", self.tx_pos_m), ("rx", self.rx_pos_m)] {
            if !(0.0..=self.length_m).contains(&p) {
                return Err(Error::invalid(format!(
                    "{name} position {p} m is outside the corridor [0, {}] m",
                    self.length_m
                )));
            }
        }
        if !(self.tx_height_m > 0.0 && self.rx_height_m > 0.0) {
            return Err(Error::invalid("antenna heights must be positive"));
        }
        if self.tx_pos_m == self.rx_pos_m {
            return Err(Error::invalid("Tx and Rx coincide"));
        }
        Ok(())
    }

    pub fn direct_length_m(&self) -> f64 {
        (self.rx_pos_m - self.tx_pos_m).abs()
    }

    /// Direct distance including the antenna height offset.
    pub fn direct_length_3d_m(&self) -> f64 {
        let dh = self.tx_height_m - self.rx_height_m;
        self.direct_length_m().hypot(dh)
    }

    /// Unfolded length of the path reflected by the corridor end behind the
    /// receiver (image of the transmitter mirrored in that end wall).
    pub fn reflected_length_m(&self) -> f64 {
        if self.rx_pos_m > self.tx_pos_m {
            2.0 * self.length_m - self.tx_pos_m - self.rx_pos_m
        } else {
            self.tx_pos_m + self.rx_pos_m
        }
    }
}

/// One delay tap of the oracle channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub delay_s: f64,
    pub mean_power_db: f64,
    /// Specular-to-diffuse power ratio; `inf` for a deterministic tap.
    #[serde(with = "crate::db::serde_inf")]
    pub k_linear: f64,
    /// Phase of the specular component, radians.
    pub phase_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapSet {
    pub taps: Vec<Tap>,
    /// Per-sample noise power at the receiver, dB. `-inf` disables noise.
    #[serde(with = "crate::db::serde_inf")]
    pub noise_power_db: f64,
}

impl TapSet {
    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.taps.iter().enumerate() {
            if !(t.delay_s.is_finite() && t.delay_s >= 0.0) {
                return Err(Error::invalid(format!("tap {i}: negative or non-finite delay")));
            }
            if t.k_linear.is_nan() || t.k_linear < 0.0 {
                return Err(Error::invalid(format!("tap {i}: K must be non-negative")));
            }
            if !t.mean_power_db.is_finite() {
                return Err(Error::invalid(format!("tap {i}: power must be finite")));
            }
            if self.taps[..i].iter().any(|u| u.delay_s == t.delay_s) {
                return Err(Error::invalid(format!("tap {i}: duplicate delay")));
            }
        }
        Ok(())
    }

    /// Sum of linear mean tap powers.
    pub fn total_power(&self) -> f64 {
        self.taps.iter().map(|t| crate::db::db_to_pow(t.mean_power_db)).sum()
    }

    /// Shifts every tap power by `offset_db`.
    pub fn scale_db(&mut self, offset_db: f64) {
        for t in &mut self.taps {
            t.mean_power_db += offset_db;
        }
    }
}

/// Excess delay of the end reflection over the direct path.
pub fn reflection_excess_delay_s(geom: &CorridorGeometry) -> f64 {
    (geom.reflected_length_m() - geom.direct_length_m()) / SPEED_OF_LIGHT
}

fn carrier_phase(band_ghz: f64, delay_s: f64) -> f64 {
    (-2.0 * PI * band_ghz * 1e9 * delay_s).rem_euclid(2.0 * PI)
}

/// Direct and end-reflection taps for one band.
///
/// Both taps decay as `eval_ci(length, band, ple)`; the reflection carries
/// the band's extra end-wall loss. Both are returned deterministic
/// (`k = inf`) and noiseless; fading and noise are applied by the caller.
/// When the receiver sits at the corridor end the two paths coincide and
/// are merged into one tap carrying their summed power.
pub fn corridor_taps(geom: &CorridorGeometry, band_ghz: f64, ple: f64) -> Result<TapSet> {
    geom.validate()?;
    let loss = lookup_band(&geom.end_reflection_loss_db, band_ghz).ok_or_else(|| {
        Error::invalid(format!("no end-reflection loss configured for {band_ghz} GHz"))
    })?;
    let d = geom.direct_length_m();
    let r = geom.reflected_length_m();
    let los_delay = d / SPEED_OF_LIGHT;
    let los_power = -eval_ci(d, band_ghz, ple)?;
    let refl_delay = r / SPEED_OF_LIGHT;
    let refl_power = -eval_ci(r, band_ghz, ple)? - loss;

    let mut taps = vec![Tap {
        delay_s: los_delay,
        mean_power_db: los_power,
        k_linear: f64::INFINITY,
        phase_rad: carrier_phase(band_ghz, los_delay),
    }];
    if refl_delay > los_delay {
        taps.push(Tap {
            delay_s: refl_delay,
            mean_power_db: refl_power,
            k_linear: f64::INFINITY,
            phase_rad: carrier_phase(band_ghz, refl_delay),
        });
    } else {
        let merged = crate::db::db_to_pow(los_power) + crate::db::db_to_pow(refl_power);
        taps[0].mean_power_db = crate::db::pow_to_db(merged);
    }
    Ok(TapSet {
        taps,
        noise_power_db: f64::NEG_INFINITY,
    })
}
