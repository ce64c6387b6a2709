//! Noise-prediction training for [`TinyDenoiser`].
//!
//! Minimizes `E || eps - eps_theta(sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, t) ||^2`
//! with `t` uniform on `1..=T`, using SGD with momentum and a linearly decayed
//! step size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::schedule::{forward_sample_with, NoiseSchedule};
use crate::tensor3::Tensor3;

use super::tiny::Level;
use super::TinyDenoiser;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Step size at the last step as a fraction of `learning_rate`.
    pub final_lr_fraction: f64,
    /// Gradient norms above this are rescaled; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Fraction of the dataset held out for evaluation.
    pub holdout_fraction: f64,
    /// Noise draws per held-out image.
    pub eval_draws: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 2,
            learning_rate: 0.02,
            momentum: 0.9,
            final_lr_fraction: 0.1,
            clip_norm: Some(1.0),
            holdout_fraction: 0.2,
            eval_draws: 8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Mean per-element training loss for every pass over the training split.
    pub epoch_losses: Vec<f64>,
    /// Per-element loss of every optimizer step.
    pub step_losses: Vec<f64>,
    /// Per-element held-out loss after training (`NaN` without a holdout split).
    pub holdout_loss: f64,
    /// Held-out loss of the all-zero predictor on the same draws.
    pub holdout_zero_loss: f64,
    pub train_images: usize,
    pub holdout_images: usize,
}

/// Trains a copy of `denoiser` and returns it with a loss report.
pub fn train_denoiser(
    denoiser: &TinyDenoiser,
    dataset: &[Tensor3],
    sched: &NoiseSchedule,
    opts: &TrainOptions,
) -> Result<(TinyDenoiser, TrainReport)> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::param("dataset", "training set is empty"))?;
    if let Some(bad) = dataset.iter().position(|x| !x.same_shape(first)) {
        return Err(Error::shape(format!(
            "dataset item {bad} has shape {:?}, expected {:?}",
            dataset[bad].shape(),
            first.shape()
        )));
    }
    if first.bands() != denoiser.bands() {
        return Err(Error::shape(format!(
            "dataset has {} bands, denoiser expects {}",
            first.bands(),
            denoiser.bands()
        )));
    }
    if opts.batch_size == 0 {
        return Err(Error::param("batch_size", "must be positive"));
    }
    if !(0.0..1.0).contains(&opts.holdout_fraction) {
        return Err(Error::param("holdout_fraction", "must lie in [0, 1)"));
    }

    let n_hold = if dataset.len() > 1 {
        ((dataset.len() as f64 * opts.holdout_fraction).round() as usize).min(dataset.len() - 1)
    } else {
        0
    };
    let (holdout, train) = dataset.split_at(n_hold);

    let mut net = denoiser.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut velocity = net.zero_grads();
    let numel = first.len() as f64;
    let mut report = TrainReport {
        train_images: train.len(),
        holdout_images: holdout.len(),
        ..TrainReport::default()
    };
    let mut epoch_acc = (0.0, 0usize);

    for step in 0..opts.steps {
        let mut grads = net.zero_grads();
        let mut loss = 0.0;
        for _ in 0..opts.batch_size {
            let x0 = &train[rng.random_range(0..train.len())];
            let t = rng.random_range(1..=sched.steps());
            let (xt, eps) = forward_sample_with(x0, sched.alpha_bar(t), &mut rng);
            let (pred, cache) = net.forward(&xt, Level::of(t, sched));
            let resid = pred.sub(&eps)?;
            loss += resid.dot(&resid)? / numel;
            let scale = 2.0 / (numel * opts.batch_size as f64);
            net.backward(&cache, &resid.scale(scale), Some(&mut grads));
        }
        loss /= opts.batch_size as f64;
        if !loss.is_finite() {
            return Err(Error::Training { step, loss });
        }
        report.step_losses.push(loss);
        epoch_acc.0 += loss * opts.batch_size as f64;
        epoch_acc.1 += opts.batch_size;
        if epoch_acc.1 >= train.len() {
            report.epoch_losses.push(epoch_acc.0 / epoch_acc.1 as f64);
            epoch_acc = (0.0, 0);
        }

        if let Some(clip) = opts.clip_norm {
            let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
            if norm > clip {
                grads.iter_mut().flatten().for_each(|g| *g *= clip / norm);
            }
        }
        let progress = step as f64 / opts.steps.max(2).saturating_sub(1) as f64;
        let lr = opts.learning_rate * (1.0 - (1.0 - opts.final_lr_fraction) * progress);
        for ((p, v), g) in net.params_mut().into_iter().zip(&mut velocity).zip(&grads) {
            for ((pk, vk), gk) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                *vk = opts.momentum * *vk + gk;
                *pk -= lr * *vk;
            }
        }
        if net.params_mut().iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::Training { step, loss: f64::NAN });
        }
    }
    if epoch_acc.1 > 0 {
        report.epoch_losses.push(epoch_acc.0 / epoch_acc.1 as f64);
    }

    let (hl, zl) = holdout_loss(&net, holdout, sched, opts.eval_draws, opts.seed ^ 0x5eed);
    report.holdout_loss = hl;
    report.holdout_zero_loss = zl;
    Ok((net, report))
}

/// Per-element loss of `net` and of the zero predictor over fixed noise draws.
pub(crate) fn holdout_loss(
    net: &TinyDenoiser,
    images: &[Tensor3],
    sched: &NoiseSchedule,
    draws: usize,
    seed: u64,
) -> (f64, f64) {
    if images.is_empty() || draws == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut acc, mut zero, mut count) = (0.0, 0.0, 0.0);
    for x0 in images {
        for _ in 0..draws {
            let t = rng.random_range(1..=sched.steps());
            let (xt, eps) = forward_sample_with(x0, sched.alpha_bar(t), &mut rng);
            let pred = net.forward(&xt, Level::of(t, sched)).0;
            let r = pred.sub(&eps).expect("same shape");
            acc += r.dot(&r).expect("same shape");
            zero += eps.dot(&eps).expect("same shape");
            count += x0.len() as f64;
        }
    }
    (acc / count, zero / count)
}
