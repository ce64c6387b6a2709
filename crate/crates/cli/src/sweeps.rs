//! Parameter sweeps: guidance weights, band triples and step counts.
//!
//! Points run on a worker pool; each point gets its own seed derived from the
//! base seed and the point's coordinates, and rows are sorted before return.

use std::time::Instant;

use plrdiff_core::metrics::mse;
use plrdiff_core::{BandSelection, Tensor3};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::run::{pansharpen, pansharpen_with, Observations};

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable seed for one sweep point.
pub fn point_seed(base: u64, key: &[u64]) -> u64 {
    key.iter().fold(splitmix(base), |acc, &k| splitmix(acc ^ splitmix(k)))
}

fn seed_for(cfg: &RunConfig, key: &[u64]) -> u64 {
    if cfg.sweep.shared_seed {
        cfg.sampler.seed
    } else {
        point_seed(cfg.sampler.seed, key)
    }
}

fn run_pool<T: Send, R: Send>(
    cfg: &RunConfig,
    items: Vec<T>,
    f: impl Fn(T) -> Result<R> + Sync + Send,
) -> Result<Vec<R>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.sweep.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::config(format!("`sweep.workers`: {e}")))?;
    pool.install(|| items.into_par_iter().map(f).collect())
}

fn check_reference(obs: &Observations, reference: &Tensor3) -> Result<()> {
    let (h, w, _) = obs.pan.shape();
    if reference.shape() != (h, w, obs.lrms.bands()) {
        return Err(CliError::config(format!(
            "reference is {:?}, expected {h}x{w}x{}",
            reference.shape(),
            obs.lrms.bands()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EtaRow {
    pub eta1: f64,
    pub eta2: f64,
    pub seed: u64,
    pub mse: f64,
}

/// Runs every `(eta1, eta2)` point; `(0, 0)` is added when absent.
pub fn sweep_eta(cfg: &RunConfig, obs: &Observations, reference: &Tensor3, grid: &[(f64, f64)]) -> Result<Vec<EtaRow>> {
    check_reference(obs, reference)?;
    let mut points = grid.to_vec();
    if !points.contains(&(0.0, 0.0)) {
        points.push((0.0, 0.0));
    }
    let mut rows = run_pool(cfg, points, |(eta1, eta2)| {
        let mut c = cfg.clone();
        c.sampler.eta1 = eta1;
        c.sampler.eta2 = eta2;
        let seed = seed_for(cfg, &[eta1.to_bits(), eta2.to_bits()]);
        let out = pansharpen(&c, obs, seed)?;
        Ok(EtaRow {
            eta1,
            eta2,
            seed,
            mse: mse(reference, &out.hrms)?,
        })
    })?;
    rows.sort_by(|a, b| a.eta1.total_cmp(&b.eta1).then(a.eta2.total_cmp(&b.eta2)));
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandRow {
    /// 1-based band indices.
    pub indices: Vec<usize>,
    pub seed: u64,
    pub mse: f64,
}

/// Runs every index list plus the equal-interval selection; rows sorted by MSE.
pub fn sweep_bands(
    cfg: &RunConfig,
    obs: &Observations,
    reference: &Tensor3,
    lists: &[Vec<usize>],
) -> Result<Vec<BandRow>> {
    check_reference(obs, reference)?;
    let bands = obs.lrms.bands();
    let mut points = lists.to_vec();
    let default = BandSelection::equal_interval(bands, cfg.subspace.rank)?;
    if !points.iter().any(|p| p.as_slice() == default.indices()) {
        points.push(default.indices().to_vec());
    }
    let selections = points
        .into_iter()
        .map(|ix| BandSelection::from_indices(bands, ix).map_err(CliError::from))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = run_pool(cfg, selections, |sel| {
        let key: Vec<u64> = sel.indices().iter().map(|&i| i as u64).collect();
        let seed = seed_for(cfg, &key);
        let out = pansharpen_with(cfg, obs, &sel, seed)?;
        Ok(BandRow {
            indices: sel.indices().to_vec(),
            seed,
            mse: mse(reference, &out.hrms)?,
        })
    })?;
    rows.sort_by(|a, b| a.mse.total_cmp(&b.mse).then(a.indices.cmp(&b.indices)));
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRow {
    #[serde(rename = "T")]
    pub steps: usize,
    pub mse: f64,
    pub seconds: f64,
}

/// Runs each step count and records MSE and wall-clock time. Timings are only
/// comparable when points do not compete for cores (`sweep.workers = 1`).
pub fn sweep_steps(cfg: &RunConfig, obs: &Observations, reference: &Tensor3, steps: &[usize]) -> Result<Vec<StepRow>> {
    check_reference(obs, reference)?;
    let mut rows = run_pool(cfg, steps.to_vec(), |t| {
        let mut c = cfg.clone();
        c.sampler.steps = t;
        c.validate()?;
        let seed = seed_for(cfg, &[t as u64]);
        let start = Instant::now();
        let out = pansharpen(&c, obs, seed)?;
        let seconds = start.elapsed().as_secs_f64();
        Ok(StepRow {
            steps: t,
            mse: mse(reference, &out.hrms)?,
            seconds,
        })
    })?;
    rows.sort_by_key(|r| r.steps);
    Ok(rows)
}
