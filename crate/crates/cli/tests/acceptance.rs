//! Acceptance criteria, one line per criterion. Exits nonzero if any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sounder_core::apdp::{
    average_apdp, estimate_noise_floor, extract_mpcs, mpc_threshold_db, snr_gate, Apdp, Mpc, MpcList,
    NoiseWindow, PeakThresholds,
};
use sounder_core::calib::{deconvolve, to_cir, to_frequency_domain, DEFAULT_FLOOR_DB};
use sounder_core::dispersion::delay_spread;
use sounder_core::kfactor::estimate_kf;
use sounder_core::largescale::{eval_ci, eval_fi, eval_fspl, fit_ci, fit_fi, Scenario};
use sounder_core::manifest::{CampaignManifest, DistanceMode};
use sounder_core::synth::{
    corridor_taps, generate_snapshots, pl_samples, reflection_excess_delay_s, CorridorGeometry, PlTruth,
    SounderConfig, Tap, TapSet,
};
use sounder_core::{Complex64, Error};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

/// SNR is signal power over noise power per received sample, before the
/// correlation gain of the reference waveform.
fn random_channel(rng: &mut ChaCha8Rng, cfg: &SounderConfig, snr_db: f64) -> (TapSet, Vec<usize>) {
    let n_taps = rng.random_range(1..=10usize);
    let mut bins: Vec<usize> = Vec::new();
    while bins.len() < n_taps {
        let b = rng.random_range(0..400usize);
        if bins.iter().all(|&o| o.abs_diff(b) >= 2) {
            bins.push(b);
        }
    }
    bins.sort_unstable();
    let taps: Vec<Tap> = bins
        .iter()
        .map(|&b| Tap {
            delay_s: b as f64 * cfg.delay_bin_s(),
            mean_power_db: -40.0 - rng.random_range(0.0..20.0),
            k_linear: f64::INFINITY,
            phase_rad: rng.random_range(0.0..std::f64::consts::TAU),
        })
        .collect();
    let mut set = TapSet {
        taps,
        noise_power_db: f64::NEG_INFINITY,
    };
    set.noise_power_db = 10.0 * set.total_power().log10() - snr_db;
    (set, bins)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let cfg = SounderConfig::default();
    let cal = to_frequency_domain(&cfg.calibration_record(5e9).map_err(|e| e.to_string())?).unwrap();
    let mut worst_db: f64 = 0.0;
    let mut misaligned = 0;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let (taps, bins) = random_channel(&mut rng, &cfg, 40.0);
        let rec = generate_snapshots(&taps, 1, &cfg, 5e9, trial).unwrap().remove(0);
        let h = deconvolve(&to_frequency_domain(&rec).unwrap(), &cal, DEFAULT_FLOOR_DB).unwrap();
        let cirs = snr_gate(&[to_cir(&h).unwrap()], 25.0).map_err(|e| format!("trial {trial}: {e}"))?;
        let mut apdp = average_apdp(&cirs).unwrap();
        estimate_noise_floor(&mut apdp, &NoiseWindow::default()).unwrap();
        let mpcs = extract_mpcs(&apdp).unwrap();
        if mpcs.len() != bins.len() {
            misaligned += 1;
            continue;
        }
        for ((m, &b), t) in mpcs.components.iter().zip(&bins).zip(&taps.taps) {
            let pos = m.delay_s / apdp.delay_bin_s;
            if (pos - b as f64).abs() > 1e-9 {
                misaligned += 1;
            }
            worst_db = worst_db.max((m.power_db - t.mean_power_db).abs());
        }
    }
    let elapsed = start.elapsed();
    check(
        misaligned == 0 && worst_db <= 0.5 && elapsed < Duration::from_secs(10),
        format!(
            "100 channels, misaligned {misaligned}, worst power error {worst_db:.2e} dB, {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let d: Vec<f64> = (0..200).map(|i| 1.0 + 39.0 * i as f64 / 199.0).collect();
    let fi_truth = PlTruth::Fi {
        alpha: 1.75,
        beta_db: 48.93,
    };
    let s = pl_samples(&fi_truth, 5.0, Scenario::Los, &d, 3.0, 20_240_601).map_err(|e| e.to_string())?;
    let fi = fit_fi(&s).map_err(|e| e.to_string())?;
    let beta = fi.offset_db.unwrap_or(f64::NAN);
    let ci_truth = PlTruth::Ci { n: 2.0 };
    let s = pl_samples(&ci_truth, 5.0, Scenario::Los, &d, 3.0, 20_240_602).map_err(|e| e.to_string())?;
    let ci = fit_ci(&s).map_err(|e| e.to_string())?;
    check(
        (fi.ple - 1.75).abs() <= 0.15
            && (beta - 48.93).abs() <= 1.5
            && (fi.sigma_db - 3.0).abs() <= 0.5
            && (ci.ple - 2.0).abs() <= 0.1
            && (ci.sigma_db - 3.0).abs() <= 0.5,
        format!(
            "FI alpha {:.3} beta {:.2} sigma {:.2}; CI n {:.3} sigma {:.2}",
            fi.ple, beta, fi.sigma_db, ci.ple, ci.sigma_db
        ),
    )
}

fn criterion_3() -> Outcome {
    let fi = eval_fi(10.0, 1.25, 41.23).unwrap();
    let ci = eval_ci(10.0, 6.0, 3.37).unwrap();
    let fs = eval_fspl(1.0, 1.0).unwrap();
    check(
        (fi - 53.73).abs() <= 0.01 && (ci - 81.66).abs() <= 0.01 && (fs - 32.40).abs() <= 0.01,
        format!("FI {fi:.4}, CI {ci:.4}, FSPL {fs:.4} dB"),
    )
}

fn mpc_list(paths: &[(f64, f64)]) -> MpcList {
    MpcList {
        components: paths
            .iter()
            .map(|&(ns, lin)| Mpc {
                delay_s: ns * 1e-9,
                power_db: 10.0 * lin.log10(),
            })
            .collect(),
        threshold_db: f64::NEG_INFINITY,
    }
}

fn mpc_sets() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0..1000.0f64, 1e-6..1.0f64), 1..20).prop_map(|mut v| {
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v.dedup_by(|a, b| a.0 == b.0);
        v
    })
}

fn criterion_4() -> Outcome {
    let ds = delay_spread(&mpc_list(&[(0.0, 0.5), (50.0, 0.3), (100.0, 0.2)])).unwrap();
    let mean_ns = ds.mean_excess_delay_s * 1e9;
    let rms_ns = ds.rms_ds_s * 1e9;
    let oracle = 1525f64.sqrt();
    let single = delay_spread(&mpc_list(&[(73.0, 0.4)])).unwrap().rms_ds_s;

    let mut r = runner(1000);
    let props = r.run(&(mpc_sets(), 0.0..500.0f64, 1e-3..1e3f64), |(v, shift, scale)| {
        let base = delay_spread(&mpc_list(&v)).unwrap().rms_ds_s * 1e9;
        let shifted: Vec<_> = v.iter().map(|&(t, p)| (t + shift, p)).collect();
        let scaled: Vec<_> = v.iter().map(|&(t, p)| (t, p * scale)).collect();
        let a = delay_spread(&mpc_list(&shifted)).unwrap().rms_ds_s * 1e9;
        let b = delay_spread(&mpc_list(&scaled)).unwrap().rms_ds_s * 1e9;
        let tol = 1e-9 * base.max(1.0);
        prop_assert!((a - base).abs() <= tol, "shift: {a} vs {base}");
        prop_assert!((b - base).abs() <= tol, "scale: {b} vs {base}");
        Ok(())
    });
    check(
        (mean_ns - 35.0).abs() <= 1e-6 && (rms_ns - oracle).abs() <= 1e-6 && single == 0.0 && props.is_ok(),
        format!(
            "mean {mean_ns:.9} ns, DS {rms_ns:.9} ns, single-path DS {single}, 1000-set invariance {}",
            match props {
                Ok(()) => "ok".to_string(),
                Err(e) => e.to_string(),
            }
        ),
    )
}

fn rician_spectrum(rng: &mut ChaCha8Rng, k: f64, n: usize) -> Vec<Complex64> {
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let los = Complex64::from_polar((k / (k + 1.0)).sqrt(), phi);
    let s = (0.5 / (k + 1.0)).sqrt();
    (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            los + Complex64::new(re * s, im * s)
        })
        .collect()
}

fn criterion_5() -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for k_db in [3.0, 10.0, 20.0] {
        let k = 10f64.powf(k_db / 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(k_db as u64 + 77);
        let mean = (0..100)
            .map(|_| estimate_kf(&rician_spectrum(&mut rng, k, 512)).unwrap().k_db)
            .sum::<f64>()
            / 100.0;
        ok &= (mean - k_db).abs() <= 1.0;
        detail.push(format!("K {k_db} dB -> {mean:.2}"));
    }
    let flat = estimate_kf(&vec![Complex64::new(0.3, -0.4); 512]).unwrap().k_linear;
    ok &= flat == f64::INFINITY;

    let spectra = prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 2..600);
    let mut r = runner(1000);
    let props = r.run(&(spectra, 1e-3..1e3f64, 0.0..6.3f64, -20i32..20), |(v, mag, ph, exp)| {
        let h: Vec<Complex64> = v.iter().map(|&(re, im)| Complex64::new(re, im)).collect();
        prop_assume!(h.iter().any(|c| c.norm_sqr() > 0.0));
        let base = estimate_kf(&h).unwrap().k_linear;
        let a = Complex64::from_polar(mag, ph);
        let scaled: Vec<Complex64> = h.iter().map(|c| c * a).collect();
        let k = estimate_kf(&scaled).unwrap().k_linear;
        let same = k == base || (k - base).abs() <= 1e-9 * base.abs().max(1e-300);
        prop_assert!(same, "scaled {k} vs {base}");
        let p2 = 2f64.powi(exp);
        let exact: Vec<Complex64> = h.iter().map(|c| c * p2).collect();
        prop_assert_eq!(estimate_kf(&exact).unwrap().k_linear.to_bits(), base.to_bits());
        Ok(())
    });
    ok &= props.is_ok();
    detail.push(format!("constant spectrum {flat}"));
    detail.push(format!(
        "1000-spectrum scale invariance {}",
        match props {
            Ok(()) => "ok".to_string(),
            Err(e) => e.to_string(),
        }
    ));
    check(ok, detail.join(", "))
}

fn random_apdps() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (50usize..600, -110.0..-70.0f64, prop::collection::vec((0usize..600, 0.0..60.0f64), 0..12), any::<u64>())
        .prop_map(|(n, floor, peaks, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut p: Vec<f64> = (0..n)
                .map(|_| {
                    let e: f64 = rng.sample(rand_distr::Exp1);
                    floor + 10.0 * e.max(1e-12).log10()
                })
                .collect();
            for (i, h) in peaks {
                let i = i % n;
                p[i] = p[i].max(floor + h);
            }
            (p, floor)
        })
}

fn criterion_6() -> Outcome {
    let t = PeakThresholds::default();
    let case_a = mpc_threshold_db(-90.0, -50.0, &t);
    let case_b = mpc_threshold_db(-70.0, -50.0, &t);

    let mut r = runner(1000);
    let props = r.run(&random_apdps(), |(power_db, floor)| {
        let apdp = Apdp {
            power_db,
            delay_bin_s: 3.125e-9,
            noise_floor_db: Some(floor),
            n_averaged: 5,
        };
        let peak = apdp.max_db();
        let threshold = mpc_threshold_db(floor, peak, &t);
        match extract_mpcs(&apdp) {
            Ok(m) => {
                prop_assert_eq!(m.threshold_db, threshold);
                for c in &m.components {
                    prop_assert!(c.power_db >= threshold);
                }
                prop_assert!(m.components.iter().any(|c| c.power_db == peak), "global peak missing");
            }
            Err(Error::EmptyMpcSet) => prop_assert!(peak < threshold),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
        Ok(())
    });
    check(
        case_a == -75.0 && case_b == -64.0 && props.is_ok(),
        format!(
            "worked cases {case_a} / {case_b} dB, 1000 random APDPs {}",
            match props {
                Ok(()) => "ok".to_string(),
                Err(e) => e.to_string(),
            }
        ),
    )
}

fn sounder(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_sounder"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("sounder {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn full_run(dir: &Path) -> Result<Duration, String> {
    let d = dir.to_str().ok_or("non-UTF-8 temp path")?;
    let manifest = dir.join("manifest.json");
    let m = manifest.to_str().ok_or("non-UTF-8 temp path")?;
    let start = Instant::now();
    sounder(&["simulate", "--distance-mode", "2d", "--seed", "2024", "--out", d])?;
    sounder(&["process", "--manifest", m, "--out", d])?;
    sounder(&["fit", "--out", d])?;
    sounder(&["report", "--manifest", m, "--out", d])?;
    Ok(start.elapsed())
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn criterion_7() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ta = full_run(a.path())?;
    let tb = full_run(b.path())?;
    let (fa, fb) = (tree(a.path()), tree(b.path()));
    let captures = fa.keys().filter(|p| p.extension().is_some_and(|e| e == "cap")).count();
    let identical = fa == fb;
    let slowest = ta.max(tb);
    check(
        identical && captures == 3 + 37 * 3 * 5 && slowest < Duration::from_secs(60),
        format!(
            "{} files ({captures} captures) identical: {identical}; runs {:.1} s and {:.1} s",
            fa.len(),
            ta.as_secs_f64(),
            tb.as_secs_f64()
        ),
    )
}

fn criterion_8() -> Outcome {
    let m = CampaignManifest::default_corridor(DistanceMode::D2);
    let mut excess = Vec::new();
    for p in &m.positions {
        let g = CorridorGeometry {
            rx_pos_m: p.rx_pos_m,
            tx_pos_m: p.tx_pos_m,
            ..CorridorGeometry::default()
        };
        corridor_taps(&g, 5.0, 1.75).map_err(|e| e.to_string())?;
        excess.push(reflection_excess_delay_s(&g) * 1e9);
    }
    let strictly = excess.windows(2).all(|w| w[1] < w[0]);
    check(
        strictly && excess.len() == 37,
        format!(
            "37 positions, excess delay {:.2} ns down to {:.2} ns, strictly decreasing: {strictly}",
            excess[0],
            excess[excess.len() - 1]
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("deconvolution round trip", criterion_1),
        ("CI/FI fit recovery", criterion_2),
        ("model fixtures", criterion_3),
        ("delay-spread oracle", criterion_4),
        ("KF estimator", criterion_5),
        ("MPC threshold rule", criterion_6),
        ("end-to-end determinism and runtime", criterion_7),
        ("reflection geometry", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(d) => println!("criterion {} {name}: PASS ({d})", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({d})", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} acceptance criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} acceptance criteria passed", criteria.len());
}
