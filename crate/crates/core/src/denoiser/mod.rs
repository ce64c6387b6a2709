//! Noise predictors `eps_theta(a_t, t)`.
//!
//! [`GaussianPrior`] is the exact minimum-mean-square predictor when the clean
//! signal is Gaussian, which makes it a closed-form oracle for the sampler.
//! [`TinyDenoiser`] is a small trainable convolutional predictor.

mod gaussian;
mod tiny;
mod train;

pub use gaussian::GaussianPrior;
pub use tiny::{TinyDenoiser, TinyDenoiserConfig, CLOCK_STEPS, TIME_DIM};
pub use train::{train_denoiser, TrainOptions, TrainReport};

use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;
use crate::tensor3::Tensor3;

/// A noise predictor over `s`-band tensors.
pub trait NoisePredictor: Send + Sync {
    /// Predicted noise at step `t` (`1 <= t <= T`); same shape as `a_t`.
    fn predict(&self, a_t: &Tensor3, t: usize, sched: &NoiseSchedule) -> Result<Tensor3>;

    /// Whether [`NoisePredictor::vjp`] is available.
    fn supports_vjp(&self) -> bool {
        false
    }

    /// `(d eps / d a_t)^T * cotangent`.
    fn vjp(&self, _a_t: &Tensor3, _t: usize, _sched: &NoiseSchedule, _cotangent: &Tensor3) -> Result<Tensor3> {
        Err(Error::Capability("vector-Jacobian products"))
    }
}

impl<P: NoisePredictor + ?Sized> NoisePredictor for &P {
    fn predict(&self, a_t: &Tensor3, t: usize, sched: &NoiseSchedule) -> Result<Tensor3> {
        (**self).predict(a_t, t, sched)
    }

    fn supports_vjp(&self) -> bool {
        (**self).supports_vjp()
    }

    fn vjp(&self, a_t: &Tensor3, t: usize, sched: &NoiseSchedule, cotangent: &Tensor3) -> Result<Tensor3> {
        (**self).vjp(a_t, t, sched, cotangent)
    }
}

/// A predictor that always returns zero noise.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroPredictor;

impl NoisePredictor for ZeroPredictor {
    fn predict(&self, a_t: &Tensor3, _t: usize, _sched: &NoiseSchedule) -> Result<Tensor3> {
        let (h, w, s) = a_t.shape();
        Ok(Tensor3::zeros(h, w, s))
    }

    fn supports_vjp(&self) -> bool {
        true
    }

    fn vjp(&self, a_t: &Tensor3, _: usize, _: &NoiseSchedule, _: &Tensor3) -> Result<Tensor3> {
        let (h, w, s) = a_t.shape();
        Ok(Tensor3::zeros(h, w, s))
    }
}

pub(crate) fn check_step(t: usize, sched: &NoiseSchedule) -> Result<()> {
    if t == 0 || t > sched.steps() {
        Err(Error::param("t", format!("step {t} outside 1..={}", sched.steps())))
    } else {
        Ok(())
    }
}
