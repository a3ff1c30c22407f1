//! RMS delay spread from extracted multipath components.

use serde::{Deserialize, Serialize};

use crate::apdp::{Apdp, MpcList};
use crate::db::{db_to_pow, mean_std};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DsResult {
    /// Power-weighted mean delay measured from the first component.
    pub mean_excess_delay_s: f64,
    pub rms_ds_s: f64,
    pub n_mpcs: usize,
}

/// Selects which delay bins enter the delay-spread moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DsSource {
    /// Threshold-extracted MPCs.
    #[default]
    Mpcs,
    /// Every APDP bin at or above the MPC threshold, peaks or not.
    RawBins,
}

fn weighted_moments(paths: impl Iterator<Item = (f64, f64)>) -> Result<DsResult> {
    let paths: Vec<(f64, f64)> = paths.collect();
    let first = paths.first().ok_or(Error::EmptyMpcSet)?.0;
    if paths.len() == 1 {
        return Ok(DsResult {
            mean_excess_delay_s: 0.0,
            rms_ds_s: 0.0,
            n_mpcs: 1,
        });
    }
    // Delays relative to the first arrival keep the sums well conditioned.
    let total: f64 = paths.iter().map(|(_, p)| p).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::invalid("multipath powers sum to zero"));
    }
    let mean = paths.iter().map(|(t, p)| p * (t - first)).sum::<f64>() / total;
    let var = paths
        .iter()
        .map(|(t, p)| p * (t - first - mean).powi(2))
        .sum::<f64>()
        / total;
    Ok(DsResult {
        mean_excess_delay_s: mean,
        rms_ds_s: var.max(0.0).sqrt(),
        n_mpcs: paths.len(),
    })
}

/// Power-weighted mean delay and RMS delay spread of an MPC list.
pub fn delay_spread(mpcs: &MpcList) -> Result<DsResult> {
    if mpcs.is_empty() {
        return Err(Error::EmptyMpcSet);
    }
    weighted_moments(
        mpcs.components
            .iter()
            .map(|m| (m.delay_s, db_to_pow(m.power_db))),
    )
}

/// Delay spread over every APDP bin at or above `threshold_db`.
pub fn delay_spread_raw(apdp: &Apdp, threshold_db: f64) -> Result<DsResult> {
    weighted_moments(
        apdp.power_db
            .iter()
            .enumerate()
            .filter(|(_, &p)| p >= threshold_db)
            .map(|(i, &p)| (i as f64 * apdp.delay_bin_s, db_to_pow(p))),
    )
}

/// Mean and population standard deviation of RMS DS values, in ns.
pub fn aggregate_ds(results: &[DsResult]) -> Result<(f64, f64)> {
    if results.is_empty() {
        return Err(Error::invalid("no delay-spread results to aggregate"));
    }
    let ns: Vec<f64> = results.iter().map(|r| r.rms_ds_s * 1e9).collect();
    Ok(mean_std(&ns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apdp::Mpc;
    use crate::db::pow_to_db;

    fn list(paths: &[(f64, f64)]) -> MpcList {
        MpcList {
            components: paths
                .iter()
                .map(|&(ns, lin)| Mpc {
                    delay_s: ns * 1e-9,
                    power_db: pow_to_db(lin),
                })
                .collect(),
            threshold_db: -300.0,
        }
    }

    #[test]
    fn single_path_is_zero() {
        let r = delay_spread(&list(&[(123.0, 0.7)])).unwrap();
        assert_eq!(r.rms_ds_s, 0.0);
        assert_eq!(r.n_mpcs, 1);
    }

    #[test]
    fn two_equal_paths() {
        let r = delay_spread(&list(&[(0.0, 1.0), (100.0, 1.0)])).unwrap();
        assert!((r.mean_excess_delay_s * 1e9 - 50.0).abs() < 1e-9);
        assert!((r.rms_ds_s * 1e9 - 50.0).abs() < 1e-9);
    }

    #[test]
    fn three_paths_hand_evaluated() {
        // τ̄ = 0.3·50 + 0.2·100 = 35; E[τ²] = 0.3·2500 + 0.2·10000 = 2750;
        // DS = sqrt(2750 - 35²) = sqrt(1525)
        let r = delay_spread(&list(&[(0.0, 0.5), (50.0, 0.3), (100.0, 0.2)])).unwrap();
        assert!((r.mean_excess_delay_s * 1e9 - 35.0).abs() < 1e-6);
        assert!((r.rms_ds_s * 1e9 - 1525f64.sqrt()).abs() < 1e-6);
        assert!((r.rms_ds_s * 1e9 - 39.05).abs() < 5e-3);
    }

    #[test]
    fn empty_list() {
        assert!(matches!(delay_spread(&list(&[])), Err(Error::EmptyMpcSet)));
    }

    #[test]
    fn aggregate() {
        let mk = |ns: f64| DsResult {
            mean_excess_delay_s: 0.0,
            rms_ds_s: ns * 1e-9,
            n_mpcs: 2,
        };
        let (m, s) = aggregate_ds(&[mk(10.0), mk(20.0), mk(30.0)]).unwrap();
        assert!((m - 20.0).abs() < 1e-9);
        assert!((s - 8.16497).abs() < 1e-5);
        let (_, s) = aggregate_ds(&[mk(12.5); 4]).unwrap();
        assert!(s.abs() < 1e-12);
        assert!(aggregate_ds(&[]).is_err());
    }

    #[test]
    fn raw_bins_include_non_peaks() {
        let apdp = Apdp {
            power_db: vec![0.0, -3.0, -100.0, -100.0, -3.0],
            delay_bin_s: 1e-9,
            noise_floor_db: Some(-100.0),
            n_averaged: 1,
        };
        let r = delay_spread_raw(&apdp, -10.0).unwrap();
        assert_eq!(r.n_mpcs, 3);
        assert!(delay_spread_raw(&apdp, 10.0).is_err());
    }
}
