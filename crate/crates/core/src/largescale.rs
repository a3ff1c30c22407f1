//! Received power, link budget and path-loss models.
//!
//! Frequencies are in GHz and distances in metres, matching the 32.4 dB
//! intercept of the close-in and free-space models. The CI model is anchored
//! at a 1 m reference distance.

use serde::{Deserialize, Serialize};

use crate::apdp::MpcList;
use crate::db::{db_to_pow, pow_to_db};
use crate::error::{Error, Result};

/// Free-space intercept at 1 m and 1 GHz, dB.
pub const FSPL_INTERCEPT_DB: f64 = 32.4;
pub const DEFAULT_ANTENNA_GAIN_DBI: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    /// Transmit power during the measurement.
    pub pt_dbm: f64,
    /// Transmit power during back-to-back calibration.
    pub ptht_dbm: f64,
    /// Received power during back-to-back calibration.
    pub pthr_dbm: f64,
    pub gt_dbi: f64,
    pub gr_dbi: f64,
    /// Attenuator inserted during calibration.
    pub gatt_db: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            pt_dbm: 20.0,
            ptht_dbm: 20.0,
            pthr_dbm: -10.0,
            gt_dbi: DEFAULT_ANTENNA_GAIN_DBI,
            gr_dbi: DEFAULT_ANTENNA_GAIN_DBI,
            gatt_db: 30.0,
        }
    }
}

impl LinkBudget {
    /// Everything in the path-loss sum except `-P_r`.
    pub fn constant_db(&self) -> f64 {
        self.pt_dbm + self.gt_dbi + self.gr_dbi + self.pthr_dbm - self.ptht_dbm + self.gatt_db
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.pt_dbm,
            self.ptht_dbm,
            self.pthr_dbm,
            self.gt_dbi,
            self.gr_dbi,
            self.gatt_db,
        ];
        if all.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid("link budget terms must be finite"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "LOS")]
    Los,
    #[serde(rename = "NLOS")]
    Nlos,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Los => "LOS",
            Scenario::Nlos => "NLOS",
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "LOS" | "los" => Ok(Scenario::Los),
            "NLOS" | "nlos" => Ok(Scenario::Nlos),
            other => Err(Error::invalid(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlSample {
    pub position_id: u32,
    pub distance_m: f64,
    pub frequency_ghz: f64,
    pub pl_db: f64,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlModel {
    #[serde(rename = "CI")]
    Ci,
    #[serde(rename = "FI")]
    Fi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlFit {
    pub model: PlModel,
    /// `n` for CI, `α` for FI.
    pub ple: f64,
    /// `β`, FI only.
    pub offset_db: Option<f64>,
    pub sigma_db: f64,
    pub n_samples: usize,
}

impl PlFit {
    /// Model prediction (shadow fading excluded).
    pub fn predict(&self, d_m: f64, f_ghz: f64) -> Result<f64> {
        match self.model {
            PlModel::Ci => eval_ci(d_m, f_ghz, self.ple),
            PlModel::Fi => eval_fi(d_m, self.ple, self.offset_db.unwrap_or(0.0)),
        }
    }
}

/// `P_r`: dB value of the linear sum of MPC powers.
pub fn received_power(mpcs: &MpcList) -> Result<f64> {
    if mpcs.is_empty() {
        return Err(Error::EmptyMpcSet);
    }
    let total: f64 = mpcs.components.iter().map(|m| db_to_pow(m.power_db)).sum();
    Ok(pow_to_db(total))
}

/// `PL = -P_r + P_t + G_t + G_r + P_thr - P_tht + G_att`.
pub fn path_loss(pr_db: f64, budget: &LinkBudget) -> f64 {
    -pr_db + budget.pt_dbm + budget.gt_dbi + budget.gr_dbi + budget.pthr_dbm - budget.ptht_dbm
        + budget.gatt_db
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive, got {v}")))
    }
}

pub fn eval_ci(d_m: f64, f_ghz: f64, n: f64) -> Result<f64> {
    check_positive("distance", d_m)?;
    check_positive("frequency", f_ghz)?;
    Ok(FSPL_INTERCEPT_DB + 20.0 * f_ghz.log10() + 10.0 * n * d_m.log10())
}

pub fn eval_fi(d_m: f64, alpha: f64, beta_db: f64) -> Result<f64> {
    check_positive("distance", d_m)?;
    Ok(10.0 * alpha * d_m.log10() + beta_db)
}

pub fn eval_fspl(d_m: f64, f_ghz: f64) -> Result<f64> {
    check_positive("distance", d_m)?;
    check_positive("frequency", f_ghz)?;
    Ok(FSPL_INTERCEPT_DB + 20.0 * f_ghz.log10() + 20.0 * d_m.log10())
}

fn check_samples(samples: &[PlSample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::InsufficientSamples { needed: 2, got: 0 });
    }
    for s in samples {
        check_positive("distance", s.distance_m)?;
        check_positive("frequency", s.frequency_ghz)?;
        if !s.pl_db.is_finite() {
            return Err(Error::invalid(format!(
                "position {}: path loss is not finite",
                s.position_id
            )));
        }
    }
    let d0 = samples[0].distance_m;
    if samples.iter().all(|s| s.distance_m == d0) {
        return Err(Error::DegenerateGeometry);
    }
    Ok(())
}

fn population_sigma(residuals: impl Iterator<Item = f64>) -> f64 {
    let r: Vec<f64> = residuals.collect();
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    (r.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n).sqrt()
}

/// Least-squares close-in fit.
///
/// With `A = PL - 32.4 - 20 log10 f` and `B = 10 log10 d`, the minimiser is
/// `n = ΣAB / ΣB²`. The shadow-fading σ is the population standard deviation
/// of the residuals.
pub fn fit_ci(samples: &[PlSample]) -> Result<PlFit> {
    check_samples(samples)?;
    let f0 = samples[0].frequency_ghz;
    if samples.iter().any(|s| (s.frequency_ghz - f0).abs() > 1e-9 * f0) {
        return Err(Error::invalid("CI fit requires a single frequency band"));
    }
    let (mut sab, mut sbb) = (0.0, 0.0);
    for s in samples {
        let a = s.pl_db - FSPL_INTERCEPT_DB - 20.0 * s.frequency_ghz.log10();
        let b = 10.0 * s.distance_m.log10();
        sab += a * b;
        sbb += b * b;
    }
    if sbb == 0.0 {
        // every sample sits at the 1 m reference distance
        return Err(Error::DegenerateGeometry);
    }
    let n = sab / sbb;
    let sigma = population_sigma(
        samples
            .iter()
            .map(|s| s.pl_db - (FSPL_INTERCEPT_DB + 20.0 * s.frequency_ghz.log10() + 10.0 * n * s.distance_m.log10())),
    );
    Ok(PlFit {
        model: PlModel::Ci,
        ple: n,
        offset_db: None,
        sigma_db: sigma,
        n_samples: samples.len(),
    })
}

/// Ordinary least squares of PL against `10 log10 d`.
pub fn fit_fi(samples: &[PlSample]) -> Result<PlFit> {
    check_samples(samples)?;
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|s| 10.0 * s.distance_m.log10()).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = samples.iter().map(|s| s.pl_db).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, s) in xs.iter().zip(samples) {
        sxy += (x - x_mean) * (s.pl_db - y_mean);
        sxx += (x - x_mean) * (x - x_mean);
    }
    if sxx == 0.0 {
        return Err(Error::DegenerateGeometry);
    }
    let alpha = sxy / sxx;
    let beta = y_mean - alpha * x_mean;
    let sigma = population_sigma(xs.iter().zip(samples).map(|(x, s)| s.pl_db - (alpha * x + beta)));
    Ok(PlFit {
        model: PlModel::Fi,
        ple: alpha,
        offset_db: Some(beta),
        sigma_db: sigma,
        n_samples: samples.len(),
    })
}

/// Residual sum of squares of a fit over a sample set.
pub fn residual_ss(fit: &PlFit, samples: &[PlSample]) -> Result<f64> {
    samples.iter().try_fold(0.0, |acc, s| {
        let e = s.pl_db - fit.predict(s.distance_m, s.frequency_ghz)?;
        Ok(acc + e * e)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apdp::Mpc;

    fn mpcs(p: &[f64]) -> MpcList {
        MpcList {
            components: p
                .iter()
                .enumerate()
                .map(|(i, &power_db)| Mpc {
                    delay_s: i as f64 * 1e-9,
                    power_db,
                })
                .collect(),
            threshold_db: -100.0,
        }
    }

    fn sample(d: f64, f: f64, pl: f64) -> PlSample {
        PlSample {
            position_id: 0,
            distance_m: d,
            frequency_ghz: f,
            pl_db: pl,
            scenario: Scenario::Los,
        }
    }

    #[test]
    fn received_power_sums_linearly() {
        assert!((received_power(&mpcs(&[-60.0])).unwrap() + 60.0).abs() < 1e-12);
        assert!((received_power(&mpcs(&[-60.0, -60.0])).unwrap() + 56.9897).abs() < 1e-4);
        assert!((received_power(&mpcs(&[-50.0, -60.0, -70.0])).unwrap() + 49.5468).abs() < 1e-4);
        assert!(matches!(received_power(&mpcs(&[])), Err(Error::EmptyMpcSet)));
    }

    #[test]
    fn link_budget_sum() {
        let b = LinkBudget {
            pt_dbm: 20.0,
            ptht_dbm: 20.0,
            pthr_dbm: -10.0,
            gt_dbi: 2.0,
            gr_dbi: 2.0,
            gatt_db: 30.0,
        };
        assert!((path_loss(-60.0, &b) - 84.0).abs() < 1e-12);
        assert!((path_loss(-70.0, &b) - path_loss(-60.0, &b) - 10.0).abs() < 1e-12);
        let zero = LinkBudget {
            pt_dbm: 0.0,
            ptht_dbm: 0.0,
            pthr_dbm: 0.0,
            gt_dbi: 0.0,
            gr_dbi: 0.0,
            gatt_db: 0.0,
        };
        assert_eq!(path_loss(0.0, &zero), 0.0);
    }

    #[test]
    fn model_evaluations() {
        for n in [0.5, 2.0, 3.7] {
            assert!((eval_ci(1.0, 2.4, n).unwrap() - 40.0042).abs() < 1e-3);
        }
        assert!((eval_ci(10.0, 6.0, 3.37).unwrap() - 81.663).abs() < 5e-3);
        assert!((eval_fi(1.0, 1.3, 45.5).unwrap() - 45.5).abs() < 1e-12);
        assert!((eval_fi(10.0, 1.25, 41.23).unwrap() - 53.73).abs() < 1e-9);
        assert!((eval_fi(10.0, 1.66, 67.91).unwrap() - 84.51).abs() < 1e-9);
        assert!((eval_fspl(1.0, 1.0).unwrap() - 32.4).abs() < 1e-12);
        assert!((eval_fspl(10.0, 5.0).unwrap() - 66.379).abs() < 1e-3);
        let diff = eval_fspl(7.0, 5.0).unwrap() - eval_fspl(7.0, 2.5).unwrap();
        assert!((diff - 6.0206).abs() < 1e-4);
    }

    #[test]
    fn model_errors() {
        assert!(eval_ci(0.0, 2.4, 2.0).is_err());
        assert!(eval_ci(1.0, -1.0, 2.0).is_err());
        assert!(eval_fi(-1.0, 2.0, 40.0).is_err());
        assert!(eval_fspl(1.0, 0.0).is_err());
    }

    #[test]
    fn noiseless_ci_fit() {
        let s: Vec<_> = [1.5, 3.0, 8.0, 20.0]
            .iter()
            .map(|&d| sample(d, 5.0, eval_ci(d, 5.0, 2.0).unwrap()))
            .collect();
        let fit = fit_ci(&s).unwrap();
        assert!((fit.ple - 2.0).abs() < 1e-9);
        assert!(fit.sigma_db < 1e-9);
        assert_eq!(fit.offset_db, None);

        let two = [
            sample(1.0, 2.4, eval_ci(1.0, 2.4, 1.45).unwrap()),
            sample(10.0, 2.4, eval_ci(10.0, 2.4, 1.45).unwrap()),
        ];
        let fit = fit_ci(&two).unwrap();
        assert!((fit.ple - 1.45).abs() < 1e-12);
        assert!(fit.sigma_db < 1e-9);
    }

    #[test]
    fn noiseless_fi_fit_and_offset_shift() {
        let s: Vec<_> = [1.0, 2.0, 5.0, 11.0, 30.0]
            .iter()
            .map(|&d| sample(d, 5.0, eval_fi(d, 1.5, 45.0).unwrap()))
            .collect();
        let fit = fit_fi(&s).unwrap();
        assert!((fit.ple - 1.5).abs() < 1e-9);
        assert!((fit.offset_db.unwrap() - 45.0).abs() < 1e-9);
        assert!(fit.sigma_db < 1e-9);

        let shifted: Vec<_> = s.iter().map(|x| sample(x.distance_m, 5.0, x.pl_db + 3.25)).collect();
        let g = fit_fi(&shifted).unwrap();
        assert!((g.offset_db.unwrap() - fit.offset_db.unwrap() - 3.25).abs() < 1e-9);
        assert!((g.ple - fit.ple).abs() < 1e-12);
    }

    #[test]
    fn degenerate_geometry() {
        let s = vec![sample(4.0, 5.0, 60.0), sample(4.0, 5.0, 62.0)];
        assert!(matches!(fit_ci(&s), Err(Error::DegenerateGeometry)));
        assert!(matches!(fit_fi(&s), Err(Error::DegenerateGeometry)));
        assert!(matches!(fit_fi(&s[..1]), Err(Error::DegenerateGeometry)));
        assert!(matches!(fit_ci(&[]), Err(Error::InsufficientSamples { .. })));
        let mixed = vec![sample(2.0, 5.0, 60.0), sample(4.0, 6.0, 62.0)];
        assert!(fit_ci(&mixed).is_err());
    }
}
