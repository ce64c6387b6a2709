//! One function per CLI verb. Each writes its artifacts into
//! `paths.output` together with a `provenance.json` holding the fully
//! resolved configuration, which can be passed back with `--config`.

use std::fs;
use std::path::{Path, PathBuf};

use plrdiff_core::degrade::wald_generate;
use plrdiff_core::denoiser::{train_denoiser, TrainOptions};
use plrdiff_core::sampler::StepTrace;
use plrdiff_core::synth::{low_rank_scene, texture};
use plrdiff_core::{Mat, MetricReport, Tensor3, TinyDenoiser, TinyDenoiserConfig};
use serde::Serialize;

use crate::array_file::{load_array, save_array, Dtype};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::pgm::export_band_image;
use crate::run::{pansharpen, Observations};
use crate::sweeps::{sweep_bands, sweep_eta, sweep_steps};
use crate::weights::save_weights;

fn output_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.require("output", &cfg.paths.output)?;
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn write_provenance(dir: &Path, cfg: &RunConfig) -> Result<()> {
    let mut resolved = cfg.clone();
    resolved.degradation.sigma = Some(cfg.sigma());
    write_json(&dir.join("provenance.json"), &resolved)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes serializable rows with a header.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::io(path, e))?;
    }
    finish(w, path)
}

pub fn write_matrix(path: &Path, m: &Mat) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| CliError::io(path, e))?;
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        w.write_record(&row).map_err(|e| CliError::io(path, e))?;
    }
    finish(w, path)
}

#[derive(Serialize)]
struct TraceRow {
    t: usize,
    residual_lrms: f64,
    residual_pan: f64,
    eps_norm: f64,
    iterate_norm: f64,
}

pub fn write_trace(path: &Path, trace: &[StepTrace]) -> Result<()> {
    let rows: Vec<TraceRow> = trace
        .iter()
        .map(|s| TraceRow {
            t: s.t,
            residual_lrms: s.residual_lrms,
            residual_pan: s.residual_pan,
            eps_norm: s.eps_norm,
            iterate_norm: s.iterate_norm,
        })
        .collect();
    write_rows(path, &rows)
}

pub fn write_metrics(dir: &Path, report: &MetricReport) -> Result<()> {
    write_json(&dir.join("metrics.json"), report)?;
    let path = dir.join("metrics.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(MetricReport::COLUMNS)
        .map_err(|e| CliError::io(&path, e))?;
    let row: Vec<String> = report.csv_row().iter().map(|v| v.to_string()).collect();
    w.write_record(&row).map_err(|e| CliError::io(&path, e))?;
    finish(w, &path)
}

/// Wald-protocol observations from a full-resolution image.
pub fn cmd_degrade(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let input = cfg.require_file("hrms", &cfg.paths.hrms)?;
    let dir = output_dir(cfg)?;
    let hrms = load_array(&input)?;
    let model = cfg.degradation_model(hrms.bands())?;
    let (lrms, pan) = wald_generate(&hrms, &model)?;
    save_array(&dir.join("lrms.arr"), &lrms, Dtype::F64)?;
    save_array(&dir.join("pan.arr"), &pan, Dtype::F64)?;
    write_provenance(&dir, cfg)?;
    log::info!(
        "degraded {:?} -> LRMS {:?}, PAN {:?}",
        hrms.shape(),
        lrms.shape(),
        pan.shape()
    );
    Ok(())
}

/// Guided sampling; writes the restored image, base tensor, coefficients,
/// per-step trace and (given a reference) the metric report.
pub fn cmd_pansharpen(cfg: &RunConfig) -> Result<Option<MetricReport>> {
    cfg.validate()?;
    let lrms = cfg.require_file("lrms", &cfg.paths.lrms)?;
    let pan = cfg.require_file("pan", &cfg.paths.pan)?;
    let reference = match &cfg.paths.reference {
        Some(_) => Some(cfg.require_file("reference", &cfg.paths.reference)?),
        None => None,
    };
    let dir = output_dir(cfg)?;
    let obs = Observations::load(&lrms, &pan)?;
    let reference = reference.map(|p| load_array(&p)).transpose()?;

    let out = pansharpen(cfg, &obs, cfg.sampler.seed)?;
    save_array(&dir.join("hrms.arr"), &out.hrms, Dtype::F64)?;
    save_array(&dir.join("a0.arr"), &out.base, Dtype::F64)?;
    write_matrix(&dir.join("coefficients.csv"), &out.coefficients)?;
    write_trace(&dir.join("trace.csv"), &out.trace)?;
    write_provenance(&dir, cfg)?;

    let report = match reference {
        Some(r) => {
            let rep = MetricReport::compute(&r, &out.hrms, &cfg.metric_options())?;
            write_metrics(&dir, &rep)?;
            Some(rep)
        }
        None => None,
    };
    Ok(report)
}

fn sweep_inputs(cfg: &RunConfig) -> Result<(Observations, Tensor3, PathBuf)> {
    cfg.validate()?;
    let lrms = cfg.require_file("lrms", &cfg.paths.lrms)?;
    let pan = cfg.require_file("pan", &cfg.paths.pan)?;
    let reference = cfg.require_file("reference", &cfg.paths.reference)?;
    let dir = output_dir(cfg)?;
    Ok((Observations::load(&lrms, &pan)?, load_array(&reference)?, dir))
}

pub fn cmd_sweep_eta(cfg: &RunConfig, eta1: &[f64], eta2: &[f64]) -> Result<()> {
    if eta1.is_empty() || eta2.is_empty() {
        return Err(CliError::config(
            "`--eta1-grid` and `--eta2-grid` need at least one value",
        ));
    }
    if let Some(v) = eta1.iter().chain(eta2).find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(CliError::config(format!("eta grid values must be >= 0, got {v}")));
    }
    let (obs, reference, dir) = sweep_inputs(cfg)?;
    let grid: Vec<(f64, f64)> = eta1.iter().flat_map(|&a| eta2.iter().map(move |&b| (a, b))).collect();
    let rows = sweep_eta(cfg, &obs, &reference, &grid)?;
    write_rows(&dir.join("sweep_eta.csv"), &rows)?;
    write_provenance(&dir, cfg)
}

#[derive(Serialize)]
struct BandCsvRow {
    indices: String,
    seed: u64,
    mse: f64,
}

pub fn cmd_sweep_bands(cfg: &RunConfig, lists: &[Vec<usize>]) -> Result<()> {
    let (obs, reference, dir) = sweep_inputs(cfg)?;
    if let Some(l) = lists.iter().find(|l| l.len() != cfg.subspace.rank) {
        return Err(CliError::config(format!(
            "index list {l:?} has {} entries, subspace.rank is {}",
            l.len(),
            cfg.subspace.rank
        )));
    }
    let rows = sweep_bands(cfg, &obs, &reference, lists)?;
    let csv_rows: Vec<BandCsvRow> = rows
        .iter()
        .map(|r| BandCsvRow {
            indices: r.indices.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" "),
            seed: r.seed,
            mse: r.mse,
        })
        .collect();
    write_rows(&dir.join("sweep_bands.csv"), &csv_rows)?;
    write_provenance(&dir, cfg)
}

pub fn cmd_sweep_steps(cfg: &RunConfig, steps: &[usize]) -> Result<()> {
    if steps.is_empty() || steps.contains(&0) {
        return Err(CliError::config("`--steps-list` needs positive step counts"));
    }
    let (obs, reference, dir) = sweep_inputs(cfg)?;
    let rows = sweep_steps(cfg, &obs, &reference, steps)?;
    write_rows(&dir.join("sweep_steps.csv"), &rows)?;
    write_provenance(&dir, cfg)
}

#[derive(Serialize)]
struct TrainSummary {
    param_count: usize,
    train_images: usize,
    holdout_images: usize,
    holdout_loss: f64,
    holdout_zero_loss: f64,
    final_step_loss: f64,
}

#[derive(Serialize)]
struct EpochRow {
    epoch: usize,
    loss: f64,
}

/// Trains a TinyDenoiser on array files or synthetic textures.
pub fn cmd_train_denoiser(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let t = &cfg.train;
    let dir = output_dir(cfg)?;
    let data: Vec<Tensor3> = if t.data.is_empty() {
        if t.synthetic_count == 0 || t.synthetic_size == 0 {
            return Err(CliError::config(
                "`train.synthetic_count` and `train.synthetic_size` must be positive",
            ));
        }
        let bands = t.synthetic_bands.unwrap_or(cfg.subspace.rank);
        (0..t.synthetic_count as u64)
            .map(|k| {
                texture(
                    t.synthetic_size,
                    t.synthetic_size,
                    bands,
                    cfg.sampler.seed.wrapping_add(k),
                )
            })
            .collect()
    } else {
        t.data
            .iter()
            .map(|p| {
                if !p.is_file() {
                    return Err(CliError::config(format!(
                        "`train.data` entry {} does not exist",
                        p.display()
                    )));
                }
                load_array(p)
            })
            .collect::<Result<_>>()?
    };
    let net = TinyDenoiser::new(TinyDenoiserConfig {
        bands: data[0].bands(),
        hidden: t.hidden,
        seed: cfg.sampler.seed,
    })?;
    let opts = TrainOptions {
        steps: t.steps,
        batch_size: t.batch_size,
        learning_rate: t.learning_rate,
        momentum: t.momentum,
        holdout_fraction: t.holdout_fraction,
        seed: cfg.sampler.seed,
        ..TrainOptions::default()
    };
    let sched = cfg.schedule()?;
    let (net, report) = train_denoiser(&net, &data, &sched, &opts)?;
    save_weights(&dir.join("weights.bin"), &net)?;
    let epochs: Vec<EpochRow> = report
        .epoch_losses
        .iter()
        .enumerate()
        .map(|(epoch, &loss)| EpochRow { epoch, loss })
        .collect();
    write_rows(&dir.join("losses.csv"), &epochs)?;
    write_json(
        &dir.join("train_report.json"),
        &TrainSummary {
            param_count: net.param_count(),
            train_images: report.train_images,
            holdout_images: report.holdout_images,
            holdout_loss: report.holdout_loss,
            holdout_zero_loss: report.holdout_zero_loss,
            final_step_loss: report.step_losses.last().copied().unwrap_or(f64::NAN),
        },
    )?;
    write_provenance(&dir, cfg)?;
    log::info!(
        "held-out loss {:.4} (zero predictor {:.4})",
        report.holdout_loss,
        report.holdout_zero_loss
    );
    Ok(())
}

/// Metric report between `paths.reference` and `input`; also written to
/// `paths.output` when set.
pub fn cmd_metrics(cfg: &RunConfig, input: &Path) -> Result<MetricReport> {
    cfg.validate()?;
    let reference = cfg.require_file("reference", &cfg.paths.reference)?;
    if !input.is_file() {
        return Err(CliError::config(format!("input {} does not exist", input.display())));
    }
    let report = MetricReport::compute(&load_array(&reference)?, &load_array(input)?, &cfg.metric_options())?;
    if cfg.paths.output.is_some() {
        write_metrics(&output_dir(cfg)?, &report)?;
    }
    Ok(report)
}

/// Band `band` (0-based) of `input` as an 8-bit PGM.
pub fn cmd_export_band(input: &Path, band: usize, output: &Path) -> Result<()> {
    if !input.is_file() {
        return Err(CliError::config(format!("input {} does not exist", input.display())));
    }
    export_band_image(&load_array(input)?, band, output)?;
    Ok(())
}

/// Writes an exactly low-rank synthetic scene to `output`.
pub fn cmd_synthesize(height: usize, width: usize, bands: usize, rank: usize, seed: u64, output: &Path) -> Result<()> {
    if height == 0 || width == 0 || bands == 0 || rank == 0 || rank > bands {
        return Err(CliError::config("need positive sizes and 1 <= rank <= bands"));
    }
    let scene = low_rank_scene(height, width, bands, rank, seed);
    save_array(output, &scene.hrms, Dtype::F64)
}
