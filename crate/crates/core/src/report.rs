//! Campaign summary and plot-data tables.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::db::{round2, round4};
use crate::dispersion::{aggregate_ds, DsResult};
use crate::error::{Error, Result};
use crate::kfactor::{cdf_table, fit_normal};
use crate::largescale::{eval_fspl, PlFit, Scenario};
use crate::manifest::CampaignManifest;
use crate::pipeline::{
    fit_reports, parse_profile_csv, read_positions_csv, FitGroup, FitReport, PositionReport, PositionStatus,
    ProfileRow, APDP_CSV, MPCS_CSV, POSITIONS_CSV,
};

pub const SUMMARY_JSON: &str = "summary.json";
pub const PL_SCATTER_CSV: &str = "pl_scatter.csv";
pub const PL_MODELS_CSV: &str = "pl_models.csv";
pub const KF_CDF_CSV: &str = "kf_cdf.csv";
pub const APDP_HEATMAP_CSV: &str = "apdp_heatmap.csv";

const CURVE_POINTS: usize = 50;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportOptions {
    /// Fit KF distributions for NLOS groups too.
    pub kf_all_scenarios: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiParams {
    pub n: f64,
    pub sigma_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiParams {
    pub alpha: f64,
    pub beta_db: f64,
    pub sigma_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlRow {
    pub band_ghz: f64,
    pub scenario: Scenario,
    pub n_samples: usize,
    pub ci: Option<CiParams>,
    pub fi: Option<FiParams>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsRow {
    pub band_ghz: f64,
    pub scenario: Scenario,
    pub n_positions: usize,
    pub mean_ns: f64,
    pub std_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KfCdfPoint {
    pub kf_db: f64,
    pub empirical: f64,
    pub fitted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KfRow {
    pub band_ghz: f64,
    pub scenario: Scenario,
    pub mu_db: Option<f64>,
    pub sigma_db: Option<f64>,
    pub max_cdf_deviation: Option<f64>,
    pub n_used: usize,
    /// Positions whose estimate had no diffuse part.
    pub n_infinite: usize,
    /// Positions whose estimate was clamped to `K = 0`.
    pub n_zero: usize,
    pub cdf: Vec<KfCdfPoint>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub manifest: CampaignManifest,
    pub status_counts: BTreeMap<String, usize>,
    pub path_loss: Vec<PlRow>,
    pub delay_spread: Vec<DsRow>,
    pub k_factor: Vec<KfRow>,
    pub warnings: Vec<String>,
}

impl Summary {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn pl_row(g: &FitGroup) -> PlRow {
    PlRow {
        band_ghz: g.band_ghz,
        scenario: g.scenario,
        n_samples: g.n_samples,
        ci: g.ci.as_ref().map(|f| CiParams {
            n: round4(f.ple),
            sigma_db: round2(f.sigma_db),
        }),
        fi: g.fi.as_ref().map(|f| FiParams {
            alpha: round4(f.ple),
            beta_db: round2(f.offset_db.unwrap_or(0.0)),
            sigma_db: round2(f.sigma_db),
        }),
        error: g.error.clone(),
    }
}

/// Reports grouped by (band, scenario) in ascending order.
fn groups(reports: &[PositionReport]) -> BTreeMap<(u64, Scenario), Vec<&PositionReport>> {
    let mut out: BTreeMap<(u64, Scenario), Vec<&PositionReport>> = BTreeMap::new();
    for r in reports {
        out.entry((r.band_ghz.to_bits(), r.scenario)).or_default().push(r);
    }
    out
}

fn ds_rows(reports: &[PositionReport], warnings: &mut Vec<String>) -> Vec<DsRow> {
    let mut rows = Vec::new();
    for ((b, scenario), rs) in groups(reports) {
        let ds: Vec<DsResult> = rs
            .iter()
            .filter_map(|r| {
                Some(DsResult {
                    mean_excess_delay_s: 0.0,
                    rms_ds_s: r.ds_ns? * 1e-9,
                    n_mpcs: r.n_mpcs?,
                })
            })
            .collect();
        match aggregate_ds(&ds) {
            Ok((mean, std)) => rows.push(DsRow {
                band_ghz: f64::from_bits(b),
                scenario,
                n_positions: ds.len(),
                mean_ns: round2(mean),
                std_ns: round2(std),
            }),
            Err(_) => warnings.push(format!(
                "{} GHz {scenario}: no delay-spread values",
                f64::from_bits(b)
            )),
        }
    }
    rows
}

fn kf_rows(reports: &[PositionReport], opts: &ReportOptions) -> Vec<KfRow> {
    let mut rows = Vec::new();
    for ((b, scenario), rs) in groups(reports) {
        if scenario != Scenario::Los && !opts.kf_all_scenarios {
            continue;
        }
        let all: Vec<f64> = rs.iter().filter_map(|r| r.kf_db).collect();
        let n_zero = all.iter().filter(|&&k| k == f64::NEG_INFINITY).count();
        let values: Vec<f64> = all.into_iter().filter(|&k| k != f64::NEG_INFINITY).collect();
        let n_infinite = values.iter().filter(|k| k.is_infinite()).count();
        let mut row = KfRow {
            band_ghz: f64::from_bits(b),
            scenario,
            mu_db: None,
            sigma_db: None,
            max_cdf_deviation: None,
            n_used: values.len() - n_infinite,
            n_infinite,
            n_zero,
            cdf: Vec::new(),
            error: None,
        };
        match fit_normal(&values).and_then(|fit| Ok((cdf_table(&values, &fit)?, fit))) {
            Ok((cdf, fit)) => {
                row.mu_db = Some(round2(fit.mu));
                row.sigma_db = Some(round2(fit.sigma));
                row.max_cdf_deviation = Some(round4(fit.max_cdf_deviation));
                row.cdf = cdf
                    .into_iter()
                    .map(|p| KfCdfPoint {
                        kf_db: round2(p.kf_db),
                        empirical: round4(p.empirical),
                        fitted: round4(p.fitted),
                    })
                    .collect();
            }
            Err(e) => row.error = Some(e.kind().to_string()),
        }
        rows.push(row);
    }
    rows
}

/// Table-shaped summary of a processed campaign.
pub fn build_summary(
    manifest: &CampaignManifest,
    reports: &[PositionReport],
    fits: &FitReport,
    opts: &ReportOptions,
) -> Summary {
    let mut warnings = Vec::new();
    let mut status_counts = BTreeMap::new();
    for s in [
        PositionStatus::Ok,
        PositionStatus::AllSnapshotsRejected,
        PositionStatus::EmptyMpcSet,
    ] {
        status_counts.insert(s.as_str().to_string(), 0);
    }
    for r in reports {
        *status_counts.entry(r.status.as_str().to_string()).or_default() += 1;
        if r.status != PositionStatus::Ok {
            warnings.push(format!(
                "{} GHz {} position {}: {}",
                r.band_ghz,
                r.scenario,
                r.position_id,
                r.status.as_str()
            ));
        }
    }
    let short = manifest.below_reference_distance();
    if !short.is_empty() {
        warnings.push(format!(
            "positions {short:?} lie closer than the 1 m CI reference distance"
        ));
    }
    for g in &fits.groups {
        if let Some(e) = &g.error {
            warnings.push(format!("{} GHz {}: path-loss fit failed ({e})", g.band_ghz, g.scenario));
        }
    }
    let delay_spread = ds_rows(reports, &mut warnings);
    let k_factor = kf_rows(reports, opts);
    for k in &k_factor {
        if let Some(e) = &k.error {
            warnings.push(format!("{} GHz {}: KF fit failed ({e})", k.band_ghz, k.scenario));
        }
    }
    Summary {
        manifest: manifest.clone(),
        status_counts,
        path_loss: fits.groups.iter().map(pl_row).collect(),
        delay_spread,
        k_factor,
        warnings,
    }
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

pub fn pl_scatter_csv(reports: &[PositionReport]) -> Result<String> {
    csv_text(
        &["band_ghz", "scenario", "position_id", "distance_m", "pl_db"],
        reports.iter().filter_map(|r| {
            Some(vec![
                r.band_ghz.to_string(),
                r.scenario.to_string(),
                r.position_id.to_string(),
                format!("{:.4}", r.distance_m),
                format!("{:.2}", r.pl_db?),
            ])
        }),
    )
}

/// CI, FI and free-space curves over the measured distance span of each
/// fitted group, log-spaced.
pub fn pl_models_csv(reports: &[PositionReport], fits: &FitReport) -> Result<String> {
    let mut rows = Vec::new();
    for g in &fits.groups {
        let (Some(ci), Some(fi)) = (&g.ci, &g.fi) else {
            continue;
        };
        let ds: Vec<f64> = reports
            .iter()
            .filter(|r| r.band_ghz == g.band_ghz && r.scenario == g.scenario && r.pl_db.is_some())
            .map(|r| r.distance_m)
            .collect();
        let lo = ds.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for i in 0..CURVE_POINTS {
            let d = lo * (hi / lo).powf(i as f64 / (CURVE_POINTS - 1) as f64);
            let curves: [(&str, &PlFit); 2] = [("CI", ci), ("FI", fi)];
            for (name, fit) in curves {
                rows.push(curve_row(g, name, d, fit.predict(d, g.band_ghz)?));
            }
            rows.push(curve_row(g, "FSPL", d, eval_fspl(d, g.band_ghz)?));
        }
    }
    csv_text(&["band_ghz", "scenario", "model", "distance_m", "pl_db"], rows)
}

fn curve_row(g: &FitGroup, model: &str, d: f64, pl: f64) -> Vec<String> {
    vec![
        g.band_ghz.to_string(),
        g.scenario.to_string(),
        model.to_string(),
        format!("{d:.4}"),
        format!("{pl:.2}"),
    ]
}

pub fn kf_cdf_csv(summary: &Summary) -> Result<String> {
    csv_text(
        &["band_ghz", "scenario", "kf_db", "empirical", "fitted"],
        summary.k_factor.iter().flat_map(|k| {
            k.cdf.iter().map(move |p| {
                vec![
                    k.band_ghz.to_string(),
                    k.scenario.to_string(),
                    format!("{:.2}", p.kf_db),
                    format!("{:.4}", p.empirical),
                    format!("{:.4}", p.fitted),
                ]
            })
        }),
    )
}

/// APDP rows with delays relative to the first extracted MPC of the same
/// cell, so the LOS arrivals line up across positions.
pub fn apdp_heatmap_csv(reports: &[PositionReport], apdp: &[ProfileRow], mpcs: &[ProfileRow]) -> Result<String> {
    let key = |r: &ProfileRow| (r.band_ghz.to_bits(), r.scenario, r.position_id);
    let mut first: BTreeMap<(u64, Scenario, u32), f64> = BTreeMap::new();
    for m in mpcs {
        let e = first.entry(key(m)).or_insert(f64::INFINITY);
        *e = e.min(m.delay_ns);
    }
    let distance: BTreeMap<(u64, Scenario, u32), f64> = reports
        .iter()
        .map(|r| ((r.band_ghz.to_bits(), r.scenario, r.position_id), r.distance_m))
        .collect();
    let rows = apdp.iter().filter_map(|a| {
        let t0 = *first.get(&key(a))?;
        let d = distance.get(&key(a)).copied()?;
        Some(vec![
            a.band_ghz.to_string(),
            a.scenario.to_string(),
            a.position_id.to_string(),
            format!("{d:.4}"),
            format!("{:.2}", a.delay_ns - t0),
            format!("{:.2}", a.power_db),
        ])
    });
    csv_text(
        &["band_ghz", "scenario", "position_id", "distance_m", "excess_delay_ns", "power_db"],
        rows,
    )
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads the process outputs in `dir` and writes the summary and plot data
/// next to them.
pub fn write_report(manifest: &CampaignManifest, dir: &Path, opts: &ReportOptions) -> Result<Summary> {
    let reports = read_positions_csv(&dir.join(POSITIONS_CSV))?;
    let apdp = parse_profile_csv(&read_text(&dir.join(APDP_CSV))?)?;
    let mpcs = parse_profile_csv(&read_text(&dir.join(MPCS_CSV))?)?;
    let fits = fit_reports(&reports);
    let summary = build_summary(manifest, &reports, &fits, opts);
    for (name, text) in [
        (SUMMARY_JSON, summary.to_json()?),
        (PL_SCATTER_CSV, pl_scatter_csv(&reports)?),
        (PL_MODELS_CSV, pl_models_csv(&reports, &fits)?),
        (KF_CDF_CSV, kf_cdf_csv(&summary)?),
        (APDP_HEATMAP_CSV, apdp_heatmap_csv(&reports, &apdp, &mpcs)?),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::DistanceMode;

    fn ok(id: u32, band: f64, scenario: Scenario, d: f64, pl: f64, ds: f64, kf: f64) -> PositionReport {
        PositionReport {
            position_id: id,
            band_ghz: band,
            scenario,
            status: PositionStatus::Ok,
            distance_m: d,
            pl_db: Some(pl),
            ds_ns: Some(ds),
            kf_db: Some(kf),
            n_mpcs: Some(2),
        }
    }

    fn sample() -> Vec<PositionReport> {
        vec![
            ok(1, 5.0, Scenario::Los, 1.0, 48.93, 10.0, 6.0),
            ok(2, 5.0, Scenario::Los, 10.0, 66.43, 20.0, 8.0),
            ok(3, 5.0, Scenario::Los, 20.0, 71.70, 30.0, f64::INFINITY),
            ok(3, 5.0, Scenario::Nlos, 20.0, 90.0, 15.0, 2.0),
            PositionReport {
                status: PositionStatus::EmptyMpcSet,
                pl_db: None,
                ds_ns: None,
                kf_db: None,
                n_mpcs: None,
                ..ok(4, 5.0, Scenario::Los, 21.0, 0.0, 0.0, 0.0)
            },
        ]
    }

    #[test]
    fn summary_tables() {
        let m = CampaignManifest::default_corridor(DistanceMode::D2);
        let r = sample();
        let s = build_summary(&m, &r, &fit_reports(&r), &ReportOptions::default());
        assert_eq!(s.status_counts["OK"], 4);
        assert_eq!(s.status_counts["EmptyMpcSet"], 1);
        let los = s.delay_spread.iter().find(|d| d.scenario == Scenario::Los).unwrap();
        assert_eq!((los.mean_ns, los.std_ns), (20.0, 8.16));
        assert_eq!(s.k_factor.len(), 1);
        let kf = &s.k_factor[0];
        assert_eq!((kf.mu_db, kf.sigma_db, kf.n_infinite), (Some(7.0), Some(1.0), 1));
        let nlos = s.path_loss.iter().find(|p| p.scenario == Scenario::Nlos).unwrap();
        assert_eq!(nlos.error.as_deref(), Some("DegenerateGeometry"));
        assert!(s.warnings.iter().any(|w| w.contains("EmptyMpcSet")));
        let back: Summary = serde_json::from_str(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn kf_for_all_scenarios_on_request() {
        let m = CampaignManifest::default_corridor(DistanceMode::D2);
        let r = sample();
        let opts = ReportOptions {
            kf_all_scenarios: true,
        };
        let s = build_summary(&m, &r, &fit_reports(&r), &opts);
        assert_eq!(s.k_factor.len(), 2);
        assert_eq!(s.k_factor[1].error.as_deref(), Some("InsufficientSamples"));
    }

    #[test]
    fn model_curves_span_measured_distances() {
        let r = sample();
        let text = pl_models_csv(&r, &fit_reports(&r)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 3 * CURVE_POINTS);
        assert_eq!(lines[1], "5,LOS,CI,1.0000,46.38");
        assert_eq!(lines[3], "5,LOS,FSPL,1.0000,46.38");
        assert!(lines.last().unwrap().starts_with("5,LOS,FSPL,20.0000,"));
    }

    #[test]
    fn heatmap_is_relative_to_first_mpc() {
        let r = sample();
        let row = |d: f64, p: f64| ProfileRow {
            band_ghz: 5.0,
            scenario: Scenario::Los,
            position_id: 2,
            delay_ns: d,
            power_db: p,
        };
        let text = apdp_heatmap_csv(&r, &[row(31.25, -60.0), row(40.0, -80.0)], &[row(31.25, -60.0)]).unwrap();
        assert!(text.contains("5,LOS,2,10.0000,0.00,-60.00\n"));
        assert!(text.contains("5,LOS,2,10.0000,8.75,-80.00\n"));
    }
}
