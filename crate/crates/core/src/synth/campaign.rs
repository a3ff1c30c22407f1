//! Full synthetic campaigns with a ground-truth sidecar.
//!
//! The channel is static during a repetition: each repetition draws one
//! fading realization of the corridor taps, and its `snapshots_per_rep`
//! snapshots differ only in receiver noise. The stored record is the
//! average of those snapshots, i.e. the averaged CIR of one measurement.

use std::path::Path;

use num_complex::Complex64;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capture::{calibration_path, measurement_path, write_capture};
use crate::db::{db_to_pow, pow_to_db};
use crate::error::{Error, Result};
use crate::largescale::{eval_ci, eval_fi, PlSample, Scenario};
use crate::manifest::{CampaignManifest, Position};
use crate::record::{ComplexRecord, RecordKind};
use crate::synth::geometry::{corridor_taps, default_end_reflection_loss, lookup_band, BandValue, CorridorGeometry, TapSet};
use crate::synth::rng;
use crate::synth::sounder::{add_noise, circular_sparse_conv, realize, ReferenceWaveform, SounderConfig};

const TAG_SF: u64 = 1;
const TAG_FADING: u64 = 2;
const TAG_NOISE: u64 = 3;

/// Ground-truth path-loss model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum PlTruth {
    #[serde(rename = "CI")]
    Ci { n: f64 },
    #[serde(rename = "FI")]
    Fi { alpha: f64, beta_db: f64 },
}

impl PlTruth {
    pub fn eval(&self, d_m: f64, f_ghz: f64) -> Result<f64> {
        match *self {
            PlTruth::Ci { n } => eval_ci(d_m, f_ghz, n),
            PlTruth::Fi { alpha, beta_db } => eval_fi(d_m, alpha, beta_db),
        }
    }

    pub fn ple(&self) -> f64 {
        match *self {
            PlTruth::Ci { n } => n,
            PlTruth::Fi { alpha, .. } => alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTruth {
    pub path_loss: PlTruth,
    /// Standard deviation of log-normal shadow fading, dB.
    pub sf_sigma_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandTruth {
    pub band_ghz: f64,
    pub los: ScenarioTruth,
    pub nlos: ScenarioTruth,
}

impl BandTruth {
    pub fn scenario(&self, s: Scenario) -> &ScenarioTruth {
        match s {
            Scenario::Los => &self.los,
            Scenario::Nlos => &self.nlos,
        }
    }
}

/// Everything the generator needs beyond the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruthModel {
    pub bands: Vec<BandTruth>,
    /// Receiver noise per sample and snapshot, dB on the CIR power scale.
    pub noise_power_db: f64,
    /// K of the end-reflection tap.
    #[serde(with = "crate::db::serde_inf")]
    pub reflection_k_linear: f64,
    /// K of the first-arrival tap at NLOS positions (LOS positions use a
    /// deterministic direct path).
    #[serde(with = "crate::db::serde_inf")]
    pub nlos_direct_k_linear: f64,
    pub end_reflection_loss_db: Vec<BandValue>,
    pub waveform: ReferenceWaveform,
    /// Back-to-back system response as `[re, im]` taps.
    pub system_response: Vec<[f64; 2]>,
    /// Positions generated without any channel taps (noise only).
    pub blank_positions: Vec<u32>,
}

fn fi(alpha: f64, beta_db: f64, sf_sigma_db: f64) -> ScenarioTruth {
    ScenarioTruth {
        path_loss: PlTruth::Fi { alpha, beta_db },
        sf_sigma_db,
    }
}

impl Default for TruthModel {
    /// Floating-intercept parameters and shadow-fading σ of the measured
    /// corridor, per band and scenario.
    fn default() -> Self {
        Self {
            bands: vec![
                BandTruth {
                    band_ghz: 2.4,
                    los: fi(1.25, 41.23, 2.96),
                    nlos: fi(1.17, 57.46, 2.99),
                },
                BandTruth {
                    band_ghz: 5.0,
                    los: fi(1.75, 48.93, 3.18),
                    nlos: fi(1.27, 67.22, 1.85),
                },
                BandTruth {
                    band_ghz: 6.0,
                    los: fi(2.03, 48.33, 2.39),
                    nlos: fi(1.66, 67.91, 1.87),
                },
            ],
            noise_power_db: -70.0,
            reflection_k_linear: 10.0,
            nlos_direct_k_linear: 1.0,
            end_reflection_loss_db: default_end_reflection_loss(),
            waveform: ReferenceWaveform::default(),
            system_response: vec![[1.0, 0.0]],
            blank_positions: Vec::new(),
        }
    }
}

impl TruthModel {
    pub fn band(&self, band_ghz: f64) -> Result<&BandTruth> {
        self.bands
            .iter()
            .find(|b| (b.band_ghz - band_ghz).abs() < 1e-6)
            .ok_or_else(|| Error::invalid(format!("truth model has no entry for {band_ghz} GHz")))
    }

    /// Same model in every band and scenario, without shadow fading.
    pub fn uniform(path_loss: PlTruth, sf_sigma_db: f64, bands: &[f64]) -> Self {
        let s = ScenarioTruth {
            path_loss,
            sf_sigma_db,
        };
        Self {
            bands: bands
                .iter()
                .map(|&band_ghz| BandTruth {
                    band_ghz,
                    los: s,
                    nlos: s,
                })
                .collect(),
            ..Default::default()
        }
    }

    pub fn sounder(&self, manifest: &CampaignManifest) -> SounderConfig {
        SounderConfig {
            record_len: manifest.record_len,
            bandwidth_hz: manifest.bandwidth_hz,
            waveform: self.waveform,
            system_response: self.system_response.clone(),
        }
    }

    pub fn validate(&self, manifest: &CampaignManifest) -> Result<()> {
        for &b in &manifest.bands_ghz {
            let t = self.band(b)?;
            for s in [&t.los, &t.nlos] {
                if !(s.sf_sigma_db.is_finite() && s.sf_sigma_db >= 0.0) {
                    return Err(Error::invalid("shadow-fading sigma must be non-negative"));
                }
            }
            if lookup_band(&self.end_reflection_loss_db, b).is_none() {
                return Err(Error::invalid(format!("no end-reflection loss for {b} GHz")));
            }
        }
        if self.noise_power_db.is_nan() || self.noise_power_db == f64::INFINITY {
            return Err(Error::invalid("noise power must be finite or -inf"));
        }
        for k in [self.reflection_k_linear, self.nlos_direct_k_linear] {
            if k.is_nan() || k < 0.0 {
                return Err(Error::invalid("K factors must be non-negative"));
            }
        }
        self.sounder(manifest).validate()
    }
}

/// Ground truth of one (position, band) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionTruth {
    pub position_id: u32,
    pub band_ghz: f64,
    pub scenario: Scenario,
    pub distance_m: f64,
    /// Model path loss before shadow fading.
    pub model_pl_db: f64,
    pub sf_db: f64,
    /// `model_pl_db + sf_db`; the taps' mean powers sum to the matching
    /// received power.
    pub pl_db: f64,
    pub pr_db: f64,
    pub taps: TapSet,
    pub tap_bins: Vec<usize>,
    /// Delay spread of the mean tap powers, ns.
    pub nominal_ds_ns: f64,
    /// Strongest specular power over all remaining power, dB.
    #[serde(with = "crate::db::serde_inf")]
    pub nominal_kf_db: f64,
    pub blank: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub seed: u64,
    pub reflection_convention: String,
    pub sounder: SounderConfig,
    pub truth: TruthModel,
    pub cells: Vec<PositionTruth>,
}

fn nominal_ds_ns(taps: &TapSet, bins: &[usize], delay_bin_s: f64) -> f64 {
    let p: Vec<f64> = taps.taps.iter().map(|t| db_to_pow(t.mean_power_db)).collect();
    let total: f64 = p.iter().sum();
    if taps.taps.len() < 2 || total <= 0.0 {
        return 0.0;
    }
    let tau: Vec<f64> = bins.iter().map(|&b| b as f64 * delay_bin_s * 1e9).collect();
    let mean = p.iter().zip(&tau).map(|(p, t)| p * t).sum::<f64>() / total;
    (p.iter().zip(&tau).map(|(p, t)| p * (t - mean).powi(2)).sum::<f64>() / total).sqrt()
}

fn nominal_kf_db(taps: &TapSet) -> f64 {
    let parts: Vec<(f64, f64)> = taps
        .taps
        .iter()
        .map(|t| {
            let p = db_to_pow(t.mean_power_db);
            if t.k_linear.is_infinite() {
                (p, 0.0)
            } else {
                (p * t.k_linear / (t.k_linear + 1.0), p / (t.k_linear + 1.0))
            }
        })
        .collect();
    let Some(best) = (0..parts.len()).max_by(|&a, &b| parts[a].0.total_cmp(&parts[b].0)) else {
        return f64::NEG_INFINITY;
    };
    let rest: f64 = parts
        .iter()
        .enumerate()
        .map(|(i, (s, d))| if i == best { *d } else { s + d })
        .sum();
    if rest == 0.0 {
        f64::INFINITY
    } else {
        pow_to_db(parts[best].0 / rest)
    }
}

/// Tap set of one cell, scaled so its mean powers sum to `pr_db`.
fn cell_taps(
    manifest: &CampaignManifest,
    truth: &TruthModel,
    pos: &Position,
    band_ghz: f64,
    ple: f64,
    pr_db: f64,
) -> Result<TapSet> {
    if truth.blank_positions.contains(&pos.position_id) {
        return Ok(TapSet {
            taps: Vec::new(),
            noise_power_db: truth.noise_power_db,
        });
    }
    let geom = CorridorGeometry {
        length_m: manifest.layout.length_m,
        tx_pos_m: pos.tx_pos_m,
        rx_pos_m: pos.rx_pos_m,
        tx_height_m: manifest.layout.tx_height_m,
        rx_height_m: manifest.layout.rx_height_m,
        end_reflection_loss_db: truth.end_reflection_loss_db.clone(),
    };
    let mut taps = corridor_taps(&geom, band_ghz, ple)?;
    let offset = pr_db - pow_to_db(taps.total_power());
    taps.scale_db(offset);
    if let Some(first) = taps.taps.first_mut() {
        if pos.scenario == Scenario::Nlos {
            first.k_linear = truth.nlos_direct_k_linear;
        }
    }
    for t in taps.taps.iter_mut().skip(1) {
        t.k_linear = truth.reflection_k_linear;
    }
    taps.noise_power_db = truth.noise_power_db;
    Ok(taps)
}

/// One repetition: a static fading draw, averaged over noisy snapshots.
fn averaged_record(
    taps: &TapSet,
    cfg: &SounderConfig,
    reference: &[Complex64],
    snapshots: usize,
    center_frequency_hz: f64,
    seed: u64,
    cell: [u64; 3],
) -> Result<ComplexRecord> {
    let [pos, band, rep] = cell;
    let mut fading = rng::stream(seed, &[TAG_FADING, pos, band, rep]);
    let gains = realize(&mut fading, taps, cfg)?;
    let mut y = circular_sparse_conv(reference, &gains);
    let mut noise = vec![Complex64::new(0.0, 0.0); y.len()];
    for snap in 0..snapshots as u64 {
        let mut r = rng::stream(seed, &[TAG_NOISE, pos, band, rep, snap]);
        add_noise(&mut r, &mut noise, taps.noise_power_db, 1.0);
    }
    let inv = 1.0 / snapshots as f64;
    for (v, n) in y.iter_mut().zip(&noise) {
        *v += n * inv;
    }
    ComplexRecord::new(y, cfg.bandwidth_hz, center_frequency_hz, RecordKind::Measurement)
}

/// Writes calibration and measurement captures under `out_dir` plus a
/// `truth.json` sidecar, and returns the sidecar.
pub fn generate_campaign(
    manifest: &CampaignManifest,
    truth: &TruthModel,
    seed: u64,
    out_dir: &Path,
) -> Result<TruthSidecar> {
    manifest.validate()?;
    truth.validate(manifest)?;
    let cfg = truth.sounder(manifest);
    let reference = cfg.reference()?;

    for &band in &manifest.bands_ghz {
        let cal = cfg.calibration_record(band * 1e9)?;
        write_capture(calibration_path(out_dir, band), &cal)?;
    }

    let work: Vec<(usize, &Position)> = manifest
        .bands_ghz
        .iter()
        .enumerate()
        .flat_map(|(b, _)| manifest.positions.iter().map(move |p| (b, p)))
        .collect();

    let cells = work
        .par_iter()
        .map(|&(band_idx, pos)| -> Result<PositionTruth> {
            let band = manifest.bands_ghz[band_idx];
            let st = truth.band(band)?.scenario(pos.scenario);
            let distance_m = manifest.distance(pos);
            let model_pl_db = st.path_loss.eval(distance_m, band)?;
            let sf_db = if st.sf_sigma_db > 0.0 {
                let mut r = rng::stream(seed, &[TAG_SF, pos.position_id as u64, band_idx as u64]);
                Normal::new(0.0, st.sf_sigma_db)
                    .map_err(|e| Error::invalid(e.to_string()))?
                    .sample(&mut r)
            } else {
                0.0
            };
            let pl_db = model_pl_db + sf_db;
            let pr_db = manifest.link_budget.constant_db() - pl_db;
            let taps = cell_taps(manifest, truth, pos, band, st.path_loss.ple(), pr_db)?;
            let tap_bins = taps
                .taps
                .iter()
                .map(|t| cfg.tap_bin(t))
                .collect::<Result<Vec<_>>>()?;

            for rep in 0..manifest.reps_per_position {
                let rec = averaged_record(
                    &taps,
                    &cfg,
                    &reference,
                    manifest.snapshots_per_rep,
                    band * 1e9,
                    seed,
                    [pos.position_id as u64, band_idx as u64, rep as u64],
                )?;
                write_capture(measurement_path(out_dir, band, pos.scenario, pos.position_id, rep), &rec)?;
            }

            Ok(PositionTruth {
                position_id: pos.position_id,
                band_ghz: band,
                scenario: pos.scenario,
                distance_m,
                model_pl_db,
                sf_db,
                pl_db,
                pr_db,
                nominal_ds_ns: nominal_ds_ns(&taps, &tap_bins, cfg.delay_bin_s()),
                nominal_kf_db: nominal_kf_db(&taps),
                blank: taps.taps.is_empty(),
                taps,
                tap_bins,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let sidecar = TruthSidecar {
        seed,
        reflection_convention: "specular reflection off the corridor end behind the receiver; \
                                delays from axial separation, quantized to the nearest delay bin"
            .into(),
        sounder: cfg,
        truth: truth.clone(),
        cells,
    };
    let path = out_dir.join("truth.json");
    std::fs::write(&path, serde_json::to_string_pretty(&sidecar)?).map_err(|e| Error::io(&path, e))?;
    Ok(sidecar)
}

/// Path-loss samples drawn directly from a model with Gaussian shadow
/// fading; sample `i` uses the stream `(seed, i)`.
pub fn pl_samples(
    model: &PlTruth,
    frequency_ghz: f64,
    scenario: Scenario,
    distances_m: &[f64],
    sf_sigma_db: f64,
    seed: u64,
) -> Result<Vec<PlSample>> {
    let normal = Normal::new(0.0, sf_sigma_db).map_err(|e| Error::invalid(e.to_string()))?;
    distances_m
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let mut r = rng::stream(seed, &[TAG_SF, i as u64]);
            Ok(PlSample {
                position_id: i as u32 + 1,
                distance_m: d,
                frequency_ghz,
                pl_db: model.eval(d, frequency_ghz)? + normal.sample(&mut r),
                scenario,
            })
        })
        .collect()
}
