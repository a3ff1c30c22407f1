//! Ricean K factor from frequency-domain moments.
//!
//! With `I` narrowband samples `H_i` of a static wideband channel,
//! `G_a = mean |H_i|²` and `G_v` is the unbiased variance of `|H_i|²`. The
//! estimate is `K = sqrt(G_a² - G_v) / (G_a - sqrt(G_a² - G_v))`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KfEstimate {
    /// Linear K; `+inf` for a spectrum without diffuse variation.
    pub k_linear: f64,
    pub k_db: f64,
    pub n_samples: usize,
}

impl KfEstimate {
    fn from_linear(k_linear: f64, n_samples: usize) -> Self {
        let k_db = if k_linear.is_infinite() {
            f64::INFINITY
        } else {
            10.0 * k_linear.log10()
        };
        Self {
            k_linear,
            k_db,
            n_samples,
        }
    }
}

/// `(G_a, G_v)` of a spectrum.
///
/// `G_v` is evaluated as `Σ(|H_i|² - G_a)² / (I - 1)`, which equals
/// `(Σ|H_i|⁴ - I·G_a²) / (I - 1)` without the cancellation.
pub fn moments(spectrum: &[Complex64]) -> Result<(f64, f64)> {
    let i = spectrum.len();
    if i < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: i });
    }
    let p: Vec<f64> = spectrum.iter().map(|h| h.norm_sqr()).collect();
    let g_a = p.iter().sum::<f64>() / i as f64;
    let g_v = p.iter().map(|x| (x - g_a) * (x - g_a)).sum::<f64>() / (i - 1) as f64;
    Ok((g_a, g_v))
}

pub fn estimate_kf(spectrum: &[Complex64]) -> Result<KfEstimate> {
    let (g_a, g_v) = moments(spectrum)?;
    let n = spectrum.len();
    if !(g_a > 0.0) || !g_a.is_finite() {
        return Err(Error::invalid("spectrum has no power"));
    }
    // Rounding in |H|² leaves a residue of order ε²·G_a² even for a
    // perfectly flat magnitude response.
    if g_v <= 16.0 * f64::EPSILON * f64::EPSILON * g_a * g_a {
        return Ok(KfEstimate::from_linear(f64::INFINITY, n));
    }
    let disc = g_a * g_a - g_v;
    if disc <= 0.0 {
        return Ok(KfEstimate::from_linear(0.0, n));
    }
    let root = disc.sqrt();
    Ok(KfEstimate::from_linear(root / (g_a - root), n))
}

/// Normal fit of per-position KF values (dB).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalFit {
    pub mu: f64,
    pub sigma: f64,
    /// Largest gap between the empirical and fitted CDF.
    pub max_cdf_deviation: f64,
    pub n_used: usize,
    /// Infinite estimates left out of the fit.
    pub n_infinite: usize,
}

impl NormalFit {
    pub fn cdf(&self, x: f64) -> f64 {
        if self.sigma > 0.0 {
            Normal::new(self.mu, self.sigma)
                .map(|n| n.cdf(x))
                .unwrap_or(f64::NAN)
        } else if x >= self.mu {
            1.0
        } else {
            0.0
        }
    }
}

fn finite_sorted(values_db: &[f64]) -> Result<(Vec<f64>, usize)> {
    let mut finite = Vec::with_capacity(values_db.len());
    let mut infinite = 0;
    for &v in values_db {
        if v.is_nan() {
            return Err(Error::invalid("KF value is NaN"));
        }
        if v == f64::INFINITY {
            infinite += 1;
        } else if v.is_finite() {
            finite.push(v);
        } else {
            return Err(Error::invalid("KF value is -inf"));
        }
    }
    finite.sort_by(f64::total_cmp);
    Ok((finite, infinite))
}

/// Sample mean and population σ of the finite values.
pub fn fit_normal(values_db: &[f64]) -> Result<NormalFit> {
    let (finite, n_infinite) = finite_sorted(values_db)?;
    if finite.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: finite.len(),
        });
    }
    let (mu, sigma) = crate::db::mean_std(&finite);
    let mut fit = NormalFit {
        mu,
        sigma,
        max_cdf_deviation: 0.0,
        n_used: finite.len(),
        n_infinite,
    };
    let n = finite.len() as f64;
    let mut dev: f64 = 0.0;
    for (i, &x) in finite.iter().enumerate() {
        let f = fit.cdf(x);
        dev = dev.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    fit.max_cdf_deviation = dev;
    Ok(fit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub kf_db: f64,
    pub empirical: f64,
    pub fitted: f64,
}

/// Empirical and fitted CDF at each finite value, ascending.
pub fn cdf_table(values_db: &[f64], fit: &NormalFit) -> Result<Vec<CdfPoint>> {
    let (finite, _) = finite_sorted(values_db)?;
    let n = finite.len() as f64;
    Ok(finite
        .iter()
        .enumerate()
        .map(|(i, &x)| CdfPoint {
            kf_db: x,
            empirical: (i as f64 + 1.0) / n,
            fitted: fit.cdf(x),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn constant_magnitude() {
        let s = vec![c(0.6, 0.8); 10];
        let (ga, gv) = moments(&s).unwrap();
        assert!((ga - 1.0).abs() < 1e-15);
        assert_eq!(gv, 0.0);
        let k = estimate_kf(&s).unwrap();
        assert_eq!(k.k_linear, f64::INFINITY);
        assert_eq!(k.k_db, f64::INFINITY);
    }

    #[test]
    fn two_sample_moments() {
        let s = [c(1.0, 0.0), c(3f64.sqrt(), 0.0)];
        let (ga, gv) = moments(&s).unwrap();
        assert!((ga - 2.0).abs() < 1e-12);
        assert!((gv - 2.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            moments(&[c(1.0, 0.0)]),
            Err(Error::InsufficientSamples { needed: 2, got: 1 })
        ));
        assert!(estimate_kf(&[]).is_err());
        assert!(estimate_kf(&[c(0.0, 0.0); 4]).is_err());
    }

    #[test]
    fn negative_discriminant_clamps() {
        // |H|² = 0, 0, 0, 4: G_a = 1, G_v = 4
        let s = [c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)];
        let k = estimate_kf(&s).unwrap();
        assert_eq!(k.k_linear, 0.0);
        assert_eq!(k.k_db, f64::NEG_INFINITY);
    }

    #[test]
    fn two_ray_spectrum() {
        // |a1/a0|² = 0.1 gives K = sqrt(1 + r⁴) / (1 + r² - sqrt(1 + r⁴)).
        let n = 1024;
        let s: Vec<_> = (0..n)
            .map(|k| {
                let ph = -2.0 * std::f64::consts::PI * k as f64 * 37.0 / n as f64;
                c(1.0, 0.0) + Complex64::from_polar(0.1f64.sqrt(), ph)
            })
            .collect();
        let r2: f64 = 0.1;
        let d = (1.0 + r2 * r2).sqrt();
        let expect = d / (1.0 + r2 - d);
        let k = estimate_kf(&s).unwrap();
        // G_v uses I-1, so the match is only to O(1/I)
        assert!((k.k_linear - expect).abs() / expect < 5e-3, "{} vs {expect}", k.k_linear);
    }

    #[test]
    fn normal_fit_basics() {
        let f = fit_normal(&[7.19; 6]).unwrap();
        assert!((f.mu - 7.19).abs() < 1e-12);
        assert_eq!(f.sigma, 0.0);
        let f = fit_normal(&[6.0, 8.0, f64::INFINITY]).unwrap();
        assert!((f.mu - 7.0).abs() < 1e-12);
        assert!((f.sigma - 1.0).abs() < 1e-12);
        assert_eq!(f.n_infinite, 1);
        assert_eq!(f.n_used, 2);
        assert!(matches!(
            fit_normal(&[1.0, f64::INFINITY]),
            Err(Error::InsufficientSamples { .. })
        ));
        assert!(fit_normal(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn cdf_table_is_monotone() {
        let v = [3.0, 9.0, 5.0, 7.0];
        let f = fit_normal(&v).unwrap();
        let t = cdf_table(&v, &f).unwrap();
        assert_eq!(t.len(), 4);
        assert!(t.windows(2).all(|w| w[0].kf_db < w[1].kf_db && w[0].fitted < w[1].fitted));
        assert_eq!(t[3].empirical, 1.0);
    }
}
