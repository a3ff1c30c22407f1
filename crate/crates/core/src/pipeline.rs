//! Batch processing of a capture tree into per-position results and fits.
//!
//! Work fans out over (band, position) cells; results are merged back in
//! manifest order, so the output does not depend on the worker count.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apdp::{average_apdp, cir_snr_db, estimate_noise_floor, extract_mpcs_with, Apdp, Mpc};
use crate::calib::{deconvolve, kept_bins, to_cir, to_frequency_domain, FrequencyResponse};
use crate::capture::{calibration_path, measurement_path, read_capture};
use crate::db::{pow_to_db, round2, round4};
use crate::dispersion::{delay_spread, delay_spread_raw, DsSource};
use crate::error::{Error, Result};
use crate::kfactor::estimate_kf;
use crate::largescale::{fit_ci, fit_fi, path_loss, received_power, PlFit, PlSample, Scenario};
use crate::manifest::{CampaignManifest, Position};
use crate::record::{ComplexRecord, RecordKind};

pub const POSITIONS_CSV: &str = "positions.csv";
pub const APDP_CSV: &str = "apdp.csv";
pub const MPCS_CSV: &str = "mpcs.csv";
pub const FIT_JSON: &str = "fit.json";

pub const POSITION_HEADER: [&str; 9] = [
    "position_id",
    "band_ghz",
    "scenario",
    "status",
    "distance_m",
    "pl_db",
    "ds_ns",
    "kf_db",
    "n_mpcs",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PositionStatus {
    #[serde(rename = "OK")]
    Ok,
    AllSnapshotsRejected,
    EmptyMpcSet,
}

impl PositionStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            PositionStatus::Ok => "OK",
            PositionStatus::AllSnapshotsRejected => "AllSnapshotsRejected",
            PositionStatus::EmptyMpcSet => "EmptyMpcSet",
        }
    }
}

impl std::str::FromStr for PositionStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "OK" => Ok(PositionStatus::Ok),
            "AllSnapshotsRejected" => Ok(PositionStatus::AllSnapshotsRejected),
            "EmptyMpcSet" => Ok(PositionStatus::EmptyMpcSet),
            other => Err(Error::invalid(format!("unknown status {other:?}"))),
        }
    }
}

/// One row of the position table. Metric fields are set iff `status` is OK;
/// dB values and delays carry two decimals.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionReport {
    pub position_id: u32,
    pub band_ghz: f64,
    pub scenario: Scenario,
    pub status: PositionStatus,
    pub distance_m: f64,
    pub pl_db: Option<f64>,
    pub ds_ns: Option<f64>,
    /// May be `+inf` when no diffuse variation was seen.
    pub kf_db: Option<f64>,
    pub n_mpcs: Option<usize>,
}

impl PositionReport {
    fn failed(manifest: &CampaignManifest, band_ghz: f64, pos: &Position, status: PositionStatus) -> Self {
        Self {
            position_id: pos.position_id,
            band_ghz,
            scenario: pos.scenario,
            status,
            distance_m: manifest.distance(pos),
            pl_db: None,
            ds_ns: None,
            kf_db: None,
            n_mpcs: None,
        }
    }
}

/// Everything computed for one (band, position) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutput {
    pub report: PositionReport,
    /// The averaged profile, when at least one repetition passed the gate.
    pub apdp: Option<Apdp>,
    pub mpcs: Vec<Mpc>,
    pub threshold_db: Option<f64>,
    pub snr_db: Vec<f64>,
}

impl CellOutput {
    fn failed(report: PositionReport, snr_db: Vec<f64>, apdp: Option<Apdp>) -> Self {
        Self {
            report,
            apdp,
            mpcs: Vec::new(),
            threshold_db: None,
            snr_db,
        }
    }
}

/// Calibration spectrum of one band.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub band_ghz: f64,
    pub y_th: FrequencyResponse,
}

impl Calibration {
    pub fn from_record(band_ghz: f64, record: &ComplexRecord, manifest: &CampaignManifest) -> Result<Self> {
        if record.kind() != RecordKind::Calibration {
            return Err(Error::invalid(format!("{band_ghz} GHz calibration capture is not a calibration record")));
        }
        check_record(record, manifest)?;
        let y_th = to_frequency_domain(record)?;
        kept_bins(&y_th, manifest.thresholds.deconv_floor_db)?;
        Ok(Self { band_ghz, y_th })
    }

    pub fn load(root: &Path, band_ghz: f64, manifest: &CampaignManifest) -> Result<Self> {
        let path = calibration_path(root, band_ghz);
        if !path.exists() {
            return Err(Error::MissingCalibration { band_ghz });
        }
        Self::from_record(band_ghz, &read_capture(&path)?, manifest)
    }
}

fn check_record(record: &ComplexRecord, manifest: &CampaignManifest) -> Result<()> {
    if record.len() != manifest.record_len {
        return Err(Error::invalid(format!(
            "record length {} does not match manifest record_len {}",
            record.len(),
            manifest.record_len
        )));
    }
    let fs = record.sample_rate_hz();
    if (fs - manifest.bandwidth_hz).abs() > 1e-6 * manifest.bandwidth_hz {
        return Err(Error::invalid(format!(
            "sample rate {fs} Hz does not match manifest bandwidth {} Hz",
            manifest.bandwidth_hz
        )));
    }
    Ok(())
}

/// Per-position chain on already loaded repetitions:
/// deconvolve → CIR → SNR gate → APDP → MPCs → PL, DS, KF.
pub fn process_records(
    manifest: &CampaignManifest,
    cal: &Calibration,
    pos: &Position,
    reps: &[ComplexRecord],
) -> Result<CellOutput> {
    let t = &manifest.thresholds;
    let mut cirs = Vec::with_capacity(reps.len());
    let mut spectra = Vec::with_capacity(reps.len());
    let mut snr_db = Vec::with_capacity(reps.len());
    let kept = kept_bins(&cal.y_th, t.deconv_floor_db)?;
    for rec in reps {
        check_record(rec, manifest)?;
        let h = deconvolve(&to_frequency_domain(rec)?, &cal.y_th, t.deconv_floor_db)?;
        let cir = to_cir(&h)?;
        let snr = cir_snr_db(&cir, &t.noise_window)?;
        snr_db.push(snr);
        if snr >= t.snr_gate_db {
            let occupied: Vec<Complex64> = h.bins.iter().zip(&kept).filter(|(_, &k)| k).map(|(b, _)| *b).collect();
            spectra.push(occupied);
            cirs.push(cir);
        }
    }
    let failed = |status| PositionReport::failed(manifest, cal.band_ghz, pos, status);
    if cirs.is_empty() {
        return Ok(CellOutput::failed(failed(PositionStatus::AllSnapshotsRejected), snr_db, None));
    }

    let mut apdp = average_apdp(&cirs)?;
    estimate_noise_floor(&mut apdp, &t.noise_window)?;
    let mpcs = match extract_mpcs_with(&apdp, &t.peak()) {
        Ok(m) if !m.is_empty() => m,
        Ok(_) | Err(Error::EmptyMpcSet) => {
            return Ok(CellOutput::failed(failed(PositionStatus::EmptyMpcSet), snr_db, Some(apdp)));
        }
        Err(e) => return Err(e),
    };

    let pl_db = path_loss(received_power(&mpcs)?, &manifest.link_budget);
    let ds = match manifest.ds_source {
        DsSource::Mpcs => delay_spread(&mpcs)?,
        DsSource::RawBins => delay_spread_raw(&apdp, mpcs.threshold_db)?,
    };
    let kf_db = kf_over_reps(&spectra)?;

    Ok(CellOutput {
        report: PositionReport {
            position_id: pos.position_id,
            band_ghz: cal.band_ghz,
            scenario: pos.scenario,
            status: PositionStatus::Ok,
            distance_m: manifest.distance(pos),
            pl_db: Some(round2(pl_db)),
            ds_ns: Some(round2(ds.rms_ds_s * 1e9)),
            kf_db: Some(round2(kf_db)),
            n_mpcs: Some(mpcs.len()),
        },
        threshold_db: Some(mpcs.threshold_db),
        mpcs: mpcs.components,
        apdp: Some(apdp),
        snr_db,
    })
}

/// Mean linear K over the gated repetitions, in dB. Any repetition without
/// diffuse variation makes the result `+inf`.
fn kf_over_reps(spectra: &[Vec<Complex64>]) -> Result<f64> {
    let mut sum = 0.0;
    for s in spectra {
        let k = estimate_kf(s)?.k_linear;
        if k.is_infinite() {
            return Ok(f64::INFINITY);
        }
        sum += k;
    }
    let mean = sum / spectra.len() as f64;
    Ok(if mean > 0.0 { pow_to_db(mean) } else { f64::NEG_INFINITY })
}

fn process_cell(manifest: &CampaignManifest, root: &Path, cal: &Calibration, pos: &Position) -> Result<CellOutput> {
    let reps = (0..manifest.reps_per_position)
        .map(|r| read_capture(measurement_path(root, cal.band_ghz, pos.scenario, pos.position_id, r)))
        .collect::<Result<Vec<_>>>()?;
    process_records(manifest, cal, pos, &reps)
}

/// All cells of a campaign, band-major in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessOutput {
    pub cells: Vec<CellOutput>,
}

impl ProcessOutput {
    pub fn reports(&self) -> Vec<PositionReport> {
        self.cells.iter().map(|c| c.report.clone()).collect()
    }
}

pub fn run_pipeline(manifest: &CampaignManifest, capture_root: &Path) -> Result<ProcessOutput> {
    manifest.validate()?;
    let cals = manifest
        .bands_ghz
        .iter()
        .map(|&b| Calibration::load(capture_root, b, manifest))
        .collect::<Result<Vec<_>>>()?;
    let work: Vec<(&Calibration, &Position)> = cals
        .iter()
        .flat_map(|c| manifest.positions.iter().map(move |p| (c, p)))
        .collect();
    let cells = work
        .par_iter()
        .map(|(cal, pos)| process_cell(manifest, capture_root, cal, pos))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProcessOutput { cells })
}

fn opt(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(x) if x == f64::INFINITY => "inf".into(),
        Some(x) if x == f64::NEG_INFINITY => "-inf".into(),
        Some(x) => format!("{x:.2}"),
    }
}

fn write_csv(rows: Vec<Vec<String>>, header: &[&str]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

pub fn positions_to_csv(reports: &[PositionReport]) -> Result<String> {
    let rows = reports
        .iter()
        .map(|r| {
            vec![
                r.position_id.to_string(),
                r.band_ghz.to_string(),
                r.scenario.to_string(),
                r.status.as_str().to_string(),
                format!("{:.4}", r.distance_m),
                opt(r.pl_db),
                opt(r.ds_ns),
                opt(r.kf_db),
                r.n_mpcs.map(|n| n.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(rows, &POSITION_HEADER)
}

fn parse_f64(field: &str, what: &str, line: u64) -> Result<f64> {
    let v = match field.trim() {
        "inf" | "+inf" => f64::INFINITY,
        "-inf" => f64::NEG_INFINITY,
        s => s
            .parse::<f64>()
            .map_err(|_| Error::invalid(format!("line {line}: bad {what} {s:?}")))?,
    };
    if v.is_nan() {
        return Err(Error::invalid(format!("line {line}: {what} is NaN")));
    }
    Ok(v)
}

fn parse_opt_f64(field: &str, what: &str, line: u64) -> Result<Option<f64>> {
    if field.trim().is_empty() {
        Ok(None)
    } else {
        parse_f64(field, what, line).map(Some)
    }
}

fn finite(v: f64, what: &str, line: u64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::invalid(format!("line {line}: {what} must be finite")))
    }
}

/// Parses a position table. The header must match [`POSITION_HEADER`].
pub fn parse_positions_csv(text: &str) -> Result<Vec<PositionReport>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(POSITION_HEADER.iter().copied()) {
        return Err(Error::invalid(format!("unexpected position CSV header {header:?}")));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let f = |i: usize| rec.get(i).unwrap_or("");
        let position_id = f(0)
            .trim()
            .parse::<u32>()
            .map_err(|_| Error::invalid(format!("line {line}: bad position_id {:?}", f(0))))?;
        let band_ghz = finite(parse_f64(f(1), "band_ghz", line)?, "band_ghz", line)?;
        if band_ghz <= 0.0 {
            return Err(Error::invalid(format!("line {line}: band must be positive")));
        }
        let scenario: Scenario = f(2).trim().parse()?;
        let status: PositionStatus = f(3).trim().parse()?;
        // values are held at the precision they are written with
        let distance_m = round4(finite(parse_f64(f(4), "distance_m", line)?, "distance_m", line)?);
        if distance_m <= 0.0 {
            return Err(Error::invalid(format!("line {line}: distance must be positive")));
        }
        let pl_db = parse_opt_f64(f(5), "pl_db", line)?.map(round2);
        let ds_ns = parse_opt_f64(f(6), "ds_ns", line)?.map(round2);
        let kf_db = parse_opt_f64(f(7), "kf_db", line)?.map(round2);
        let n_mpcs = match f(8).trim() {
            "" => None,
            s => Some(
                s.parse::<usize>()
                    .map_err(|_| Error::invalid(format!("line {line}: bad n_mpcs {s:?}")))?,
            ),
        };
        let metrics = [pl_db.is_some(), ds_ns.is_some(), kf_db.is_some(), n_mpcs.is_some()];
        let ok = status == PositionStatus::Ok;
        if metrics.iter().any(|&m| m != ok) {
            return Err(Error::invalid(format!(
                "line {line}: metric columns must be filled exactly when status is OK"
            )));
        }
        if let Some(pl) = pl_db {
            finite(pl, "pl_db", line)?;
        }
        if let Some(ds) = ds_ns {
            if !(ds.is_finite() && ds >= 0.0) {
                return Err(Error::invalid(format!("line {line}: ds_ns must be non-negative")));
            }
        }
        out.push(PositionReport {
            position_id,
            band_ghz,
            scenario,
            status,
            distance_m,
            pl_db,
            ds_ns,
            kf_db,
            n_mpcs,
        });
    }
    Ok(out)
}

pub fn read_positions_csv(path: &Path) -> Result<Vec<PositionReport>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_positions_csv(&text)
}

/// A delay-bin row of `apdp.csv` or `mpcs.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub band_ghz: f64,
    pub scenario: Scenario,
    pub position_id: u32,
    pub delay_ns: f64,
    pub power_db: f64,
}

/// APDP bins above `floor + margin`, and the extracted MPCs.
pub fn profile_rows(manifest: &CampaignManifest, out: &ProcessOutput) -> (Vec<ProfileRow>, Vec<ProfileRow>) {
    let mut apdp_rows = Vec::new();
    let mut mpc_rows = Vec::new();
    for c in &out.cells {
        let r = &c.report;
        let row = |delay_s: f64, power_db: f64| ProfileRow {
            band_ghz: r.band_ghz,
            scenario: r.scenario,
            position_id: r.position_id,
            delay_ns: round2(delay_s * 1e9),
            power_db: round2(power_db),
        };
        if let Some(a) = &c.apdp {
            let cut = a.noise_floor_db.unwrap_or(f64::NEG_INFINITY) + manifest.thresholds.floor_margin_db;
            for (i, &p) in a.power_db.iter().enumerate() {
                if p >= cut {
                    apdp_rows.push(row(i as f64 * a.delay_bin_s, p));
                }
            }
        }
        mpc_rows.extend(c.mpcs.iter().map(|m| row(m.delay_s, m.power_db)));
    }
    (apdp_rows, mpc_rows)
}

pub fn profile_to_csv(rows: &[ProfileRow]) -> Result<String> {
    let rows = rows
        .iter()
        .map(|r| {
            vec![
                r.band_ghz.to_string(),
                r.scenario.to_string(),
                r.position_id.to_string(),
                format!("{:.2}", r.delay_ns),
                format!("{:.2}", r.power_db),
            ]
        })
        .collect();
    write_csv(rows, &["band_ghz", "scenario", "position_id", "delay_ns", "power_db"])
}

pub fn parse_profile_csv(text: &str) -> Result<Vec<ProfileRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: ProfileRow = row?;
        if !(row.delay_ns.is_finite() && row.power_db.is_finite() && row.band_ghz > 0.0) {
            return Err(Error::invalid("profile rows need finite values"));
        }
        out.push(row);
    }
    Ok(out)
}

/// Writes `positions.csv`, `apdp.csv` and `mpcs.csv` into `dir`.
pub fn write_process_outputs(manifest: &CampaignManifest, out: &ProcessOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (apdp_rows, mpc_rows) = profile_rows(manifest, out);
    for (name, text) in [
        (POSITIONS_CSV, positions_to_csv(&out.reports())?),
        (APDP_CSV, profile_to_csv(&apdp_rows)?),
        (MPCS_CSV, profile_to_csv(&mpc_rows)?),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Path-loss samples of the OK rows.
pub fn pl_samples_from_reports(reports: &[PositionReport]) -> Vec<PlSample> {
    reports
        .iter()
        .filter_map(|r| {
            Some(PlSample {
                position_id: r.position_id,
                distance_m: r.distance_m,
                frequency_ghz: r.band_ghz,
                pl_db: r.pl_db?,
                scenario: r.scenario,
            })
        })
        .collect()
}

/// CI and FI fits of one (band, scenario) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitGroup {
    pub band_ghz: f64,
    pub scenario: Scenario,
    pub n_samples: usize,
    pub ci: Option<PlFit>,
    pub fi: Option<PlFit>,
    /// Error kind when a fit could not be made.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub groups: Vec<FitGroup>,
}

impl FitReport {
    pub fn n_fitted(&self) -> usize {
        self.groups.iter().filter(|g| g.error.is_none()).count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn band_key(b: f64) -> u64 {
    // positive finite bands order like their bit patterns
    b.to_bits()
}

fn fit_groups(keys: impl IntoIterator<Item = (f64, Scenario)>, samples: Vec<PlSample>) -> FitReport {
    let mut groups: BTreeMap<(u64, Scenario), Vec<PlSample>> = BTreeMap::new();
    for (b, s) in keys {
        groups.entry((band_key(b), s)).or_default();
    }
    for s in samples {
        groups.entry((band_key(s.frequency_ghz), s.scenario)).or_default().push(s);
    }
    let groups = groups
        .into_iter()
        .map(|((b, scenario), samples)| {
            let fits = fit_ci(&samples).and_then(|ci| Ok((ci, fit_fi(&samples)?)));
            let (ci, fi, error) = match fits {
                Ok((ci, fi)) => (Some(ci), Some(fi), None),
                Err(e) => (None, None, Some(e.kind().to_string())),
            };
            FitGroup {
                band_ghz: f64::from_bits(b),
                scenario,
                n_samples: samples.len(),
                ci,
                fi,
                error,
            }
        })
        .collect();
    FitReport { groups }
}

/// Fits every (band, scenario) group present in the reports, ordered by
/// band then scenario. Groups without OK rows are listed with an error.
pub fn fit_reports(reports: &[PositionReport]) -> FitReport {
    fit_groups(
        reports.iter().map(|r| (r.band_ghz, r.scenario)),
        pl_samples_from_reports(reports),
    )
}

pub fn fit_samples(samples: &[PlSample]) -> FitReport {
    fit_groups(std::iter::empty(), samples.to_vec())
}

#[derive(Deserialize)]
struct PlSampleRow {
    position_id: u32,
    scenario: Scenario,
    band_ghz: f64,
    distance_m: f64,
    pl_db: f64,
}

/// Parses a bare path-loss table with columns `position_id, scenario,
/// band_ghz, distance_m, pl_db` in any order; other columns are ignored.
pub fn parse_pl_samples_csv(text: &str) -> Result<Vec<PlSample>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: PlSampleRow = row?;
        if !(r.band_ghz.is_finite() && r.band_ghz > 0.0) {
            return Err(Error::invalid(format!("position {}: band must be positive", r.position_id)));
        }
        if !(r.distance_m.is_finite() && r.distance_m > 0.0) {
            return Err(Error::invalid(format!("position {}: distance must be positive", r.position_id)));
        }
        if !r.pl_db.is_finite() {
            return Err(Error::invalid(format!("position {}: path loss must be finite", r.position_id)));
        }
        out.push(PlSample {
            position_id: r.position_id,
            distance_m: r.distance_m,
            frequency_ghz: r.band_ghz,
            pl_db: r.pl_db,
            scenario: r.scenario,
        });
    }
    Ok(out)
}

/// Fits either a position table or a bare path-loss table, told apart by
/// the header.
pub fn fit_csv(text: &str) -> Result<FitReport> {
    let first = text.lines().next().unwrap_or("");
    if first.split(',').map(str::trim).eq(POSITION_HEADER.iter().copied()) {
        Ok(fit_reports(&parse_positions_csv(text)?))
    } else {
        Ok(fit_samples(&parse_pl_samples_csv(text)?))
    }
}
