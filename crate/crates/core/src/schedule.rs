//! Variance schedule and the closed-form forward (noising) process.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor3::Tensor3;

/// Reference schedule endpoints at 1000 steps.
pub const BETA_START_1000: f64 = 1e-4;
pub const BETA_END_1000: f64 = 0.02;

/// `{alpha_t}` and `{alpha_bar_t}` for `t = 1..=T`. Indexing is 1-based.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Builds a schedule from `beta_t = 1 - alpha_t`. Every beta must lie in `(0, 1)`.
    pub fn from_betas(betas: &[f64]) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::param("steps", "schedule needs at least one step"));
        }
        if let Some(t) = betas.iter().position(|b| !(*b > 0.0 && *b < 1.0)) {
            return Err(Error::param(
                "beta",
                format!("beta_{} = {} is outside (0, 1)", t + 1, betas[t]),
            ));
        }
        let alpha: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bar = alpha
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(Self { alpha, alpha_bar })
    }

    /// Betas linearly spaced from `beta_start` to `beta_end`.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::param("steps", "must be at least 1"));
        }
        let betas: Vec<f64> = if steps == 1 {
            vec![beta_start]
        } else {
            (0..steps)
                .map(|k| beta_start + (beta_end - beta_start) * k as f64 / (steps - 1) as f64)
                .collect()
        };
        Self::from_betas(&betas)
    }

    /// `steps`
    pub fn steps(&self) -> usize {
        self.alpha.len()
    }

    /// `alpha_t`, `1 <= t <= T`.
    #[inline]
    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    /// `beta_t = 1 - alpha_t`.
    #[inline]
    pub fn beta(&self, t: usize) -> f64 {
        1.0 - self.alpha[t - 1]
    }

    /// `alpha_bar_t`; `alpha_bar_0 = 1`.
    #[inline]
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// Whether `alpha_bar_T` is below `threshold`, i.e. the chain ends close to pure noise.
    pub fn reaches_noise(&self, threshold: f64) -> bool {
        *self.alpha_bar.last().expect("nonempty") < threshold
    }
}

/// DDPM linear schedule rescaled to `T` steps: beta runs from
/// `1e-4 * 1000 / T` to `0.02 * 1000 / T`, so the total injected noise is
/// roughly independent of `T`. Fails when the rescaled betas reach 1
/// (`2 <= T <= 20`).
pub fn linear_schedule(steps: usize) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::param("steps", "must be at least 1"));
    }
    let k = 1000.0 / steps as f64;
    NoiseSchedule::linear(steps, BETA_START_1000 * k, BETA_END_1000 * k)
}

/// Draws `x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps` and returns `(x_t, eps)`.
pub fn forward_sample<R: Rng + ?Sized>(
    x0: &Tensor3,
    t: usize,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<(Tensor3, Tensor3)> {
    if t == 0 || t > sched.steps() {
        return Err(Error::param("t", format!("must be in 1..={}", sched.steps())));
    }
    Ok(forward_sample_with(x0, sched.alpha_bar(t), rng))
}

pub(crate) fn forward_sample_with<R: Rng + ?Sized>(x0: &Tensor3, alpha_bar: f64, rng: &mut R) -> (Tensor3, Tensor3) {
    let eps = standard_normal_like(x0, rng);
    let (sa, sn) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    let xt = x0.zip_map(&eps, |x, e| sa * x + sn * e).expect("same shape");
    (xt, eps)
}

/// A tensor of i.i.d. standard normal draws with the shape of `like`.
pub fn standard_normal_like<R: Rng + ?Sized>(like: &Tensor3, rng: &mut R) -> Tensor3 {
    let (h, w, s) = like.shape();
    standard_normal(h, w, s, rng)
}

pub fn standard_normal<R: Rng + ?Sized>(h: usize, w: usize, s: usize, rng: &mut R) -> Tensor3 {
    Tensor3::from_fn(h, w, s, |_, _, _| rng.sample::<f64, _>(StandardNormal))
}
