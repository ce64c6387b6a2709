//! End-to-end runs of the `plrdiff` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use plrdiff_cli::array_file::{load_array, save_array, Dtype};
use plrdiff_cli::config::RunConfig;
use plrdiff_core::degrade::{wald_generate, DegradationModel};
use plrdiff_core::sampler::sample_unconditional;
use plrdiff_core::schedule::linear_schedule;
use plrdiff_core::subspace::{estimate_coefficients, reconstruct};
use plrdiff_core::synth::low_rank_scene;
use plrdiff_core::{BandSelection, GaussianPrior, MetricReport, Tensor3};
use tempfile::TempDir;

fn plrdiff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plrdiff"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = plrdiff(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A 32x32x8 rank-3 scene and its degraded observations under the default model.
struct Fixture {
    dir: TempDir,
    hrms: PathBuf,
    lrms: PathBuf,
    pan: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let hrms = dir.path().join("hrms.arr");
    save_array(&hrms, &low_rank_scene(32, 32, 8, 3, 1).hrms, Dtype::F64).unwrap();
    let obs = dir.path().join("obs");
    ok(&["degrade", "--hrms", s(&hrms), "--output", s(&obs)]);
    Fixture {
        lrms: obs.join("lrms.arr"),
        pan: obs.join("pan.arr"),
        hrms,
        dir,
    }
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn degrade_writes_observations_and_replayable_provenance() {
    let f = fixture();
    let obs = f.dir.path().join("obs");
    assert_eq!(load_array(&f.lrms).unwrap().shape(), (8, 8, 8));
    assert_eq!(load_array(&f.pan).unwrap().shape(), (32, 32, 1));

    let model = DegradationModel::standard(8).unwrap();
    let (lrms, pan) = wald_generate(&load_array(&f.hrms).unwrap(), &model).unwrap();
    assert!(load_array(&f.lrms).unwrap() == lrms);
    assert!(load_array(&f.pan).unwrap() == pan);

    let mut cfg = RunConfig::from_file(&obs.join("provenance.json")).unwrap();
    let again = f.dir.path().join("again");
    cfg.paths.output = Some(again.clone());
    let replay = f.dir.path().join("replay.json");
    fs::write(&replay, serde_json::to_string(&cfg).unwrap()).unwrap();
    ok(&["degrade", "--config", s(&replay)]);
    assert_eq!(fs::read(again.join("lrms.arr")).unwrap(), fs::read(&f.lrms).unwrap());
    assert_eq!(fs::read(again.join("pan.arr")).unwrap(), fs::read(&f.pan).unwrap());
}

#[test]
fn pansharpen_writes_outputs_and_metrics() {
    let f = fixture();
    let out = f.dir.path().join("run");
    let res = ok(&[
        "pansharpen",
        "--lrms",
        s(&f.lrms),
        "--pan",
        s(&f.pan),
        "--reference",
        s(&f.hrms),
        "--output",
        s(&out),
        "--steps",
        "40",
    ]);
    assert_eq!(load_array(&out.join("hrms.arr")).unwrap().shape(), (32, 32, 8));
    assert_eq!(load_array(&out.join("a0.arr")).unwrap().shape(), (32, 32, 3));
    for name in [
        "coefficients.csv",
        "trace.csv",
        "provenance.json",
        "metrics.json",
        "metrics.csv",
    ] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let printed: MetricReport = serde_json::from_slice(&res.stdout).unwrap();
    let saved: MetricReport = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(printed, saved);
    assert!(saved.mse.is_finite() && saved.mse >= 0.0);
}

#[test]
fn missing_pan_is_a_config_error() {
    let f = fixture();
    let res = plrdiff(&[
        "pansharpen",
        "--lrms",
        s(&f.lrms),
        "--output",
        s(&f.dir.path().join("x")),
    ]);
    assert_eq!(res.status.code(), Some(2));
    let res = plrdiff(&[
        "pansharpen",
        "--lrms",
        s(&f.lrms),
        "--pan",
        s(&f.dir.path().join("absent.arr")),
        "--output",
        s(&f.dir.path().join("x")),
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[sampler]\nstepz = 3\n").unwrap();
    let res = plrdiff(&["degrade", "--config", s(&cfg)]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn guidance_off_output_is_the_unconditional_sample() {
    let f = fixture();
    let out = f.dir.path().join("off");
    ok(&[
        "pansharpen",
        "--lrms",
        s(&f.lrms),
        "--pan",
        s(&f.pan),
        "--output",
        s(&out),
        "--steps",
        "30",
        "--eta1",
        "0",
        "--eta2",
        "0",
        "--seed",
        "9",
        "--prior-mean-value",
        "0.4",
        "--prior-variance",
        "0.2",
    ]);
    let lrms = load_array(&f.lrms).unwrap();
    let sel = BandSelection::equal_interval(8, 3).unwrap();
    let prior = GaussianPrior::constant(32, 32, 3, 0.4, 0.2).unwrap();
    let base = sample_unconditional((32, 32, 3), &prior, &linear_schedule(30).unwrap(), 9).unwrap();
    let expected = reconstruct(&base, &estimate_coefficients(&lrms, &sel).unwrap()).unwrap();
    assert!(load_array(&out.join("hrms.arr")).unwrap() == expected);
}

#[test]
fn sweeps_write_one_row_per_point() {
    let f = fixture();
    let common = [
        "--lrms",
        s(&f.lrms),
        "--pan",
        s(&f.pan),
        "--reference",
        s(&f.hrms),
        "--steps",
        "40",
    ];

    let out = f.dir.path().join("eta");
    let mut args = vec![
        "sweep-eta",
        "--output",
        s(&out),
        "--eta1-grid",
        "1,2",
        "--eta2-grid",
        "0.5",
    ];
    args.extend(common);
    ok(&args);
    let (header, rows) = csv_rows(&out.join("sweep_eta.csv"));
    assert_eq!(header, ["eta1", "eta2", "seed", "mse"]);
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().any(|r| r[0] == "0.0" && r[1] == "0.0"));

    let out = f.dir.path().join("steps");
    let mut args = vec!["sweep-steps", "--output", s(&out), "--steps-list", "30,40"];
    args.extend(common);
    ok(&args);
    let (header, rows) = csv_rows(&out.join("sweep_steps.csv"));
    assert_eq!(header, ["T", "mse", "seconds"]);
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["30", "40"]);

    let out = f.dir.path().join("bands");
    let mut args = vec![
        "sweep-bands",
        "--output",
        s(&out),
        "--indices",
        "1,4,8",
        "--indices",
        "3,3,5",
    ];
    args.extend(common);
    ok(&args);
    let (header, rows) = csv_rows(&out.join("sweep_bands.csv"));
    assert_eq!(header, ["indices", "seed", "mse"]);
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap().is_finite()));
}

#[test]
fn trained_weights_drive_pansharpening() {
    let f = fixture();
    let out = f.dir.path().join("train");
    ok(&[
        "train-denoiser",
        "--output",
        s(&out),
        "--steps",
        "40",
        "--train-steps",
        "30",
        "--hidden",
        "4",
        "--synthetic-count",
        "3",
        "--synthetic-size",
        "16",
    ]);
    for name in ["weights.bin", "losses.csv", "train_report.json", "provenance.json"] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let run = f.dir.path().join("tiny");
    ok(&[
        "pansharpen",
        "--lrms",
        s(&f.lrms),
        "--pan",
        s(&f.pan),
        "--output",
        s(&run),
        "--steps",
        "40",
        "--predictor",
        "tiny",
        "--weights",
        s(&out.join("weights.bin")),
    ]);
    assert!(load_array(&run.join("hrms.arr")).unwrap().is_finite());
}

#[test]
fn metrics_of_identical_images() {
    let f = fixture();
    let res = ok(&[
        "metrics",
        "--reference",
        s(&f.hrms),
        "--input",
        s(&f.hrms),
        "--q2n-block",
        "16",
    ]);
    let report: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(report["mse"], 0.0);
    // JSON has no infinity; an exact match prints PSNR as null.
    assert!(report["psnr"].is_null());
    assert!((report["ssim"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn export_band_stretches_and_checks_range() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.arr");
    save_array(
        &input,
        &Tensor3::from_fn(4, 5, 2, |i, _, b| if b == 0 { 0.3 } else { i as f64 }),
        Dtype::F64,
    )
    .unwrap();
    let pgm = dir.path().join("b0.pgm");
    ok(&["export-band", "--input", s(&input), "--band", "0", "--output", s(&pgm)]);
    let bytes = fs::read(&pgm).unwrap();
    let header = b"P5\n5 4\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert!(bytes[header.len()..].iter().all(|&v| v == 128));

    let pgm = dir.path().join("b1.pgm");
    ok(&["export-band", "--input", s(&input), "--band", "1", "--output", s(&pgm)]);
    let bytes = fs::read(&pgm).unwrap();
    assert_eq!(bytes[header.len()], 0);
    assert_eq!(*bytes.last().unwrap(), 255);

    let res = plrdiff(&["export-band", "--input", s(&input), "--band", "2", "--output", s(&pgm)]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn gaussian_run_at_300_steps_is_quick() {
    let f = fixture();
    let start = Instant::now();
    ok(&[
        "pansharpen",
        "--lrms",
        s(&f.lrms),
        "--pan",
        s(&f.pan),
        "--output",
        s(&f.dir.path().join("smoke")),
        "--steps",
        "300",
    ]);
    assert!(start.elapsed().as_secs_f64() < 60.0);
}
