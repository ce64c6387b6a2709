//! Builds the predictor and runs the guided sampler from a [`RunConfig`].

use std::path::Path;

use plrdiff_core::degrade::zero_order_hold;
use plrdiff_core::denoiser::NoisePredictor;
use plrdiff_core::sampler::plrdiff_sample;
use plrdiff_core::schedule::NoiseSchedule;
use plrdiff_core::subspace::extract_base;
use plrdiff_core::{BandSelection, GaussianPrior, PlrdiffOutput, Tensor3, TinyDenoiser};

use crate::array_file::load_array;
use crate::config::{PredictorKind, RunConfig};
use crate::error::{CliError, Result};
use crate::weights::load_weights;

/// The predictors selectable from a config.
#[derive(Clone, Debug)]
pub enum Predictor {
    Gaussian(GaussianPrior),
    Tiny(Box<TinyDenoiser>),
}

impl NoisePredictor for Predictor {
    fn predict(&self, a_t: &Tensor3, t: usize, sched: &NoiseSchedule) -> plrdiff_core::Result<Tensor3> {
        match self {
            Predictor::Gaussian(p) => p.predict(a_t, t, sched),
            Predictor::Tiny(p) => p.predict(a_t, t, sched),
        }
    }

    fn supports_vjp(&self) -> bool {
        match self {
            Predictor::Gaussian(p) => p.supports_vjp(),
            Predictor::Tiny(p) => p.supports_vjp(),
        }
    }

    fn vjp(
        &self,
        a_t: &Tensor3,
        t: usize,
        sched: &NoiseSchedule,
        cotangent: &Tensor3,
    ) -> plrdiff_core::Result<Tensor3> {
        match self {
            Predictor::Gaussian(p) => p.vjp(a_t, t, sched, cotangent),
            Predictor::Tiny(p) => p.vjp(a_t, t, sched, cotangent),
        }
    }
}

/// The two observed images.
#[derive(Clone, Debug)]
pub struct Observations {
    pub lrms: Tensor3,
    pub pan: Tensor3,
}

impl Observations {
    pub fn load(lrms: &Path, pan: &Path) -> Result<Self> {
        Ok(Self {
            lrms: load_array(lrms)?,
            pan: load_array(pan)?,
        })
    }

    pub fn check(&self, scale: usize) -> Result<()> {
        let (h, w, p) = self.pan.shape();
        let (lh, lw, _) = self.lrms.shape();
        if p != 1 {
            return Err(CliError::config(format!("PAN must have 1 band, found {p}")));
        }
        if lh * scale != h || lw * scale != w {
            return Err(CliError::config(format!(
                "LRMS {lh}x{lw} times scale {scale} does not match PAN {h}x{w}"
            )));
        }
        Ok(())
    }
}

/// Predictor over `H x W x s` base tensors for the given band selection.
pub fn build_predictor(cfg: &RunConfig, obs: &Observations, sel: &BandSelection) -> Result<Predictor> {
    let (h, w, _) = obs.pan.shape();
    let s = sel.rank();
    match cfg.predictor.kind {
        PredictorKind::Tiny => {
            let path = cfg.require_file("weights", &cfg.paths.weights)?;
            let net = load_weights(&path)?;
            if net.bands() != s {
                return Err(CliError::config(format!(
                    "denoiser in {} has {} bands, subspace rank is {s}",
                    path.display(),
                    net.bands()
                )));
            }
            Ok(Predictor::Tiny(Box::new(net)))
        }
        PredictorKind::Gaussian => {
            let mean = match (&cfg.predictor.mean, cfg.predictor.mean_value) {
                (Some(p), _) => {
                    if !p.is_file() {
                        return Err(CliError::config(format!(
                            "`predictor.mean` = {} does not exist",
                            p.display()
                        )));
                    }
                    let m = load_array(p)?;
                    if m.shape() != (h, w, s) {
                        return Err(CliError::config(format!(
                            "`predictor.mean` is {:?}, expected {h}x{w}x{s}",
                            m.shape()
                        )));
                    }
                    m
                }
                (None, Some(v)) => Tensor3::filled(h, w, s, v),
                (None, None) => extract_base(&zero_order_hold(&obs.lrms, cfg.degradation.scale), sel)?,
            };
            Ok(Predictor::Gaussian(GaussianPrior::new(mean, cfg.predictor.variance)?))
        }
    }
}

/// One guided run with the config's sampler settings and the given seed.
pub fn pansharpen(cfg: &RunConfig, obs: &Observations, seed: u64) -> Result<PlrdiffOutput> {
    let bands = obs.lrms.bands();
    let sel = cfg.band_selection(bands)?;
    pansharpen_with(cfg, obs, &sel, seed)
}

pub fn pansharpen_with(cfg: &RunConfig, obs: &Observations, sel: &BandSelection, seed: u64) -> Result<PlrdiffOutput> {
    obs.check(cfg.degradation.scale)?;
    let model = cfg.degradation_model(obs.lrms.bands())?;
    let sched = cfg.schedule()?;
    let guidance = cfg.guidance()?;
    let predictor = build_predictor(cfg, obs, sel)?;
    Ok(plrdiff_sample(
        &obs.lrms, &obs.pan, sel, &model, &predictor, &sched, &guidance, seed,
    )?)
}
