use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sounder_core::dispersion::DsSource;
use sounder_core::manifest::{CampaignManifest, DistanceMode};
use sounder_core::pipeline::{fit_csv, run_pipeline, write_process_outputs, FIT_JSON, POSITIONS_CSV};
use sounder_core::report::{write_report, ReportOptions};
use sounder_core::synth::{generate_campaign, TruthModel};

const MANIFEST_JSON: &str = "manifest.json";
const TRUTH_MODEL_JSON: &str = "truth_model.json";

#[derive(Parser)]
#[command(name = "sounder", version, about = "Channel-sounder campaign processing")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a default manifest and truth model to start from.
    Init {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_mode)]
        distance_mode: DistanceMode,
        /// Add NLOS positions 3-37.
        #[arg(long)]
        with_nlos: bool,
    },
    /// Generate a synthetic capture tree from a manifest and truth model.
    Simulate {
        #[command(flatten)]
        manifest: ManifestArgs,
        /// Truth model JSON (default: built-in corridor model).
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn captures into per-position results.
    Process {
        #[command(flatten)]
        manifest: ManifestArgs,
        /// Capture tree root (default: --out).
        #[arg(long)]
        captures: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit CI and FI models to a position table.
    Fit {
        /// Position CSV or bare path-loss CSV (default: <out>/positions.csv).
        #[arg(long)]
        positions: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the campaign summary and plot tables.
    Report {
        #[command(flatten)]
        manifest: ManifestArgs,
        #[arg(long)]
        out: PathBuf,
        /// Fit KF distributions for NLOS groups as well.
        #[arg(long)]
        kf_all_scenarios: bool,
    },
}

/// Manifest source plus per-field overrides.
#[derive(Args)]
struct ManifestArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Required without --manifest; overrides it otherwise.
    #[arg(long, value_parser = parse_mode)]
    distance_mode: Option<DistanceMode>,
    #[arg(long, value_delimiter = ',')]
    bands_ghz: Option<Vec<f64>>,
    #[arg(long)]
    bandwidth_hz: Option<f64>,
    #[arg(long)]
    record_len: Option<usize>,
    #[arg(long)]
    reps_per_position: Option<usize>,
    #[arg(long)]
    snapshots_per_rep: Option<usize>,
    #[arg(long)]
    snr_gate_db: Option<f64>,
    #[arg(long)]
    peak_window_db: Option<f64>,
    #[arg(long)]
    floor_margin_db: Option<f64>,
    #[arg(long)]
    deconv_floor_db: Option<f64>,
    #[arg(long, value_parser = parse_ds_source)]
    ds_source: Option<DsSource>,
}

fn parse_mode(s: &str) -> Result<DistanceMode, String> {
    s.parse().map_err(|e: sounder_core::Error| e.to_string())
}

fn parse_ds_source(s: &str) -> Result<DsSource, String> {
    match s {
        "mpcs" => Ok(DsSource::Mpcs),
        "raw_bins" | "raw-bins" => Ok(DsSource::RawBins),
        other => Err(format!("unknown DS source {other:?} (mpcs, raw_bins)")),
    }
}

impl ManifestArgs {
    fn resolve(&self) -> Result<CampaignManifest> {
        let mut m = match (&self.manifest, self.distance_mode) {
            (Some(path), _) => CampaignManifest::load(path).with_context(|| format!("loading {}", path.display()))?,
            (None, Some(mode)) => CampaignManifest::default_corridor(mode),
            (None, None) => bail!("either --manifest or --distance-mode is required"),
        };
        if let Some(v) = self.distance_mode {
            m.distance_mode = v;
        }
        if let Some(v) = &self.bands_ghz {
            m.bands_ghz = v.clone();
        }
        if let Some(v) = self.bandwidth_hz {
            m.bandwidth_hz = v;
        }
        if let Some(v) = self.record_len {
            m.record_len = v;
        }
        if let Some(v) = self.reps_per_position {
            m.reps_per_position = v;
        }
        if let Some(v) = self.snapshots_per_rep {
            m.snapshots_per_rep = v;
        }
        if let Some(v) = self.snr_gate_db {
            m.thresholds.snr_gate_db = v;
        }
        if let Some(v) = self.peak_window_db {
            m.thresholds.peak_window_db = v;
        }
        if let Some(v) = self.floor_margin_db {
            m.thresholds.floor_margin_db = v;
        }
        if let Some(v) = self.deconv_floor_db {
            m.thresholds.deconv_floor_db = v;
        }
        if let Some(v) = self.ds_source {
            m.ds_source = v;
        }
        m.validate()?;
        Ok(m)
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring worker pool")?;
    }
    match cli.command {
        Command::Init {
            out,
            distance_mode,
            with_nlos,
        } => {
            let m = if with_nlos {
                CampaignManifest::default_corridor_with_nlos(distance_mode)
            } else {
                CampaignManifest::default_corridor(distance_mode)
            };
            write(&out.join(MANIFEST_JSON), &m.to_json()?)?;
            write(
                &out.join(TRUTH_MODEL_JSON),
                &serde_json::to_string_pretty(&TruthModel::default())?,
            )?;
        }
        Command::Simulate {
            manifest,
            truth,
            seed,
            out,
        } => {
            let m = manifest.resolve()?;
            let truth = match truth {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
                }
                None => TruthModel::default(),
            };
            generate_campaign(&m, &truth, seed, &out)?;
            write(&out.join(MANIFEST_JSON), &m.to_json()?)?;
        }
        Command::Process { manifest, captures, out } => {
            let m = manifest.resolve()?;
            let root = captures.unwrap_or_else(|| out.clone());
            let result = run_pipeline(&m, &root)?;
            write_process_outputs(&m, &result, &out)?;
            let ok = result
                .cells
                .iter()
                .filter(|c| c.report.status == sounder_core::pipeline::PositionStatus::Ok)
                .count();
            eprintln!("processed {} cells, {ok} OK", result.cells.len());
        }
        Command::Fit { positions, out } => {
            let path = positions.unwrap_or_else(|| out.join(POSITIONS_CSV));
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let fits = fit_csv(&text).with_context(|| format!("parsing {}", path.display()))?;
            write(&out.join(FIT_JSON), &fits.to_json()?)?;
            for g in &fits.groups {
                if let Some(e) = &g.error {
                    eprintln!("{} GHz {}: {e}", g.band_ghz, g.scenario);
                }
            }
            if fits.n_fitted() == 0 {
                bail!("no (band, scenario) group could be fitted");
            }
        }
        Command::Report {
            manifest,
            out,
            kf_all_scenarios,
        } => {
            let m = manifest.resolve()?;
            let summary = write_report(&m, &out, &ReportOptions { kf_all_scenarios })?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
