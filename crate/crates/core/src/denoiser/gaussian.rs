use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;
use crate::tensor3::Tensor3;

use super::{check_step, NoisePredictor};

/// Isotropic Gaussian prior `N(mean, variance * I)` over the clean signal.
///
/// Under `a_t = sqrt(abar) a_0 + sqrt(1 - abar) eps` the posterior mean of the
/// noise is linear in `a_t`:
/// `E[eps | a_t] = sqrt(1 - abar) (a_t - sqrt(abar) mean) / (abar variance + 1 - abar)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPrior {
    mean: Tensor3,
    variance: f64,
}

impl GaussianPrior {
    pub fn new(mean: Tensor3, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::param("variance", format!("must be positive, got {variance}")));
        }
        Ok(Self { mean, variance })
    }

    /// Prior with a spatially constant mean.
    pub fn constant(h: usize, w: usize, s: usize, mean: f64, variance: f64) -> Result<Self> {
        Self::new(Tensor3::filled(h, w, s, mean), variance)
    }

    pub fn mean(&self) -> &Tensor3 {
        &self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// The scalar `sqrt(1 - abar) / (abar variance + 1 - abar)`; also the Jacobian.
    pub fn gain(&self, alpha_bar: f64) -> f64 {
        (1.0 - alpha_bar).sqrt() / (alpha_bar * self.variance + 1.0 - alpha_bar)
    }

    /// Exact `E[a_0 | a_t]` for this prior.
    pub fn posterior_mean(&self, a_t: &Tensor3, alpha_bar: f64) -> Result<Tensor3> {
        let denom = alpha_bar * self.variance + 1.0 - alpha_bar;
        let (ka, km) = (self.variance * alpha_bar.sqrt() / denom, (1.0 - alpha_bar) / denom);
        a_t.zip_map(&self.mean, |a, m| ka * a + km * m)
    }

    fn check(&self, a_t: &Tensor3) -> Result<()> {
        a_t.check_same_shape(&self.mean, "gaussian prior mean vs iterate")
    }
}

impl NoisePredictor for GaussianPrior {
    fn predict(&self, a_t: &Tensor3, t: usize, sched: &NoiseSchedule) -> Result<Tensor3> {
        check_step(t, sched)?;
        self.check(a_t)?;
        let abar = sched.alpha_bar(t);
        let (g, sa) = (self.gain(abar), abar.sqrt());
        a_t.zip_map(&self.mean, |a, m| g * (a - sa * m))
    }

    fn supports_vjp(&self) -> bool {
        true
    }

    fn vjp(&self, a_t: &Tensor3, t: usize, sched: &NoiseSchedule, cotangent: &Tensor3) -> Result<Tensor3> {
        check_step(t, sched)?;
        self.check(a_t)?;
        a_t.check_same_shape(cotangent, "cotangent")?;
        Ok(cotangent.scale(self.gain(sched.alpha_bar(t))))
    }
}
