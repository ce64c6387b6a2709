//! Ancestral sampling over the base tensor and the observation-guided loop.
//!
//! One guided step from `a_t`:
//!
//! 1. `a' = (a_t - beta_t / sqrt(1 - abar_t) * eps(a_t, t)) / sqrt(alpha_t) + sqrt(beta_t) z`
//!    (no noise at `t = 1`);
//! 2. `A0 = (a' - sqrt(1 - abar_{t-1}) eps(a', t-1)) / sqrt(abar_{t-1})`;
//! 3. `n = -grad_{a'} [ eta1 ||D(B(A0 x_3 E)) - Y||_F + eta2 ||A0 x_3 E x_3 r - P||_F ]`;
//! 4. `a_{t-1} = a' + beta_t / sqrt(alpha_t) * n`.
//!
//! The gradient in step 3 is taken at the fresh iterate `a'`, whose noise level
//! is `t - 1`; at `t - 1 = 0` the iterate is its own clean estimate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::degrade::{pan_project, pan_project_adjoint, DegradationModel};
use crate::denoiser::NoisePredictor;
use crate::error::{Error, Result};
use crate::schedule::{standard_normal, standard_normal_like, NoiseSchedule};
use crate::subspace::{estimate_coefficients, reconstruct, BandSelection};
use crate::tensor3::{mode3_mul, mode3_mul_adjoint, Mat, Tensor3};

/// How the guidance gradient treats the clean-estimate Jacobian.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VjpMode {
    /// Differentiate through the noise predictor.
    Full,
    /// Treat the predicted noise as constant: `dA0/da = I / sqrt(abar)`.
    #[default]
    StopGradient,
}

impl std::str::FromStr for VjpMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(VjpMode::Full),
            "stop_gradient" | "stop-gradient" => Ok(VjpMode::StopGradient),
            other => Err(Error::param(
                "vjp_mode",
                format!("expected `full` or `stop_gradient`, got `{other}`"),
            )),
        }
    }
}

/// Guidance step sizes and gradient options.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    /// LRMS fidelity weight.
    pub eta1: f64,
    /// PAN fidelity weight.
    pub eta2: f64,
    pub vjp_mode: VjpMode,
    /// Lower bound on residual norms when normalizing the gradient.
    pub norm_floor: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            eta1: 1.0,
            eta2: 2.0,
            vjp_mode: VjpMode::StopGradient,
            norm_floor: 1e-12,
        }
    }
}

impl GuidanceConfig {
    pub fn new(eta1: f64, eta2: f64, vjp_mode: VjpMode) -> Result<Self> {
        let cfg = Self {
            eta1,
            eta2,
            vjp_mode,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// No guidance at all: the sampler reduces to unconditional sampling.
    pub fn off() -> Self {
        Self {
            eta1: 0.0,
            eta2: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta1 >= 0.0 && self.eta1.is_finite()) {
            return Err(Error::param("eta1", format!("must be >= 0, got {}", self.eta1)));
        }
        if !(self.eta2 >= 0.0 && self.eta2.is_finite()) {
            return Err(Error::param("eta2", format!("must be >= 0, got {}", self.eta2)));
        }
        if self.norm_floor.is_nan() || self.norm_floor <= 0.0 {
            return Err(Error::param("norm_floor", "must be positive"));
        }
        Ok(())
    }

    pub fn is_off(&self) -> bool {
        self.eta1 == 0.0 && self.eta2 == 0.0
    }
}

/// Per-step diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub t: usize,
    /// `||D(B(A0 x_3 E)) - Y||_F`; NaN when guidance is off.
    pub residual_lrms: f64,
    /// `||A0 x_3 E x_3 r - P||_F`; NaN when guidance is off.
    pub residual_pan: f64,
    pub eps_norm: f64,
    pub iterate_norm: f64,
}

/// Running state of one sampling chain.
#[derive(Clone, Debug)]
pub struct SamplerState {
    /// Current iterate `a_t`.
    pub a: Tensor3,
    /// Noise level of `a`; 0 once the chain has finished.
    pub t: usize,
    rng: ChaCha8Rng,
    pub trace: Option<Vec<StepTrace>>,
}

impl SamplerState {
    /// Starts a chain at `a_T ~ N(0, I)` drawn from the seeded stream.
    pub fn from_noise(shape: (usize, usize, usize), sched: &NoiseSchedule, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = standard_normal(shape.0, shape.1, shape.2, &mut rng);
        Self {
            a,
            t: sched.steps(),
            rng,
            trace: None,
        }
    }

    /// Starts from an explicit iterate at level `t`.
    pub fn new(a: Tensor3, t: usize, seed: u64) -> Self {
        Self {
            a,
            t,
            rng: ChaCha8Rng::seed_from_u64(seed),
            trace: None,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }
}

/// `(a - beta / sqrt(1 - abar) * eps) / sqrt(alpha) + sqrt(beta) * z`.
pub fn ancestral_update(
    a: &Tensor3,
    eps: &Tensor3,
    alpha: f64,
    alpha_bar: f64,
    noise: Option<&Tensor3>,
) -> Result<Tensor3> {
    let beta = 1.0 - alpha;
    let k = beta / (1.0 - alpha_bar).sqrt();
    let inv = 1.0 / alpha.sqrt();
    let mut out = a.zip_map(eps, |x, e| (x - k * e) * inv)?;
    if let Some(z) = noise {
        out.axpy(beta.sqrt(), z)?;
    }
    Ok(out)
}

/// One unconditional reverse step `a_t -> a_{t-1}`. Returns the predicted noise.
pub fn ancestral_step<P: NoisePredictor + ?Sized>(
    state: &mut SamplerState,
    predictor: &P,
    sched: &NoiseSchedule,
) -> Result<Tensor3> {
    let t = state.t;
    if t == 0 {
        return Err(Error::param("t", "chain already reached t = 0"));
    }
    let eps = predictor.predict(&state.a, t, sched)?;
    let z = (t > 1).then(|| standard_normal_like(&state.a, &mut state.rng));
    let next = ancestral_update(&state.a, &eps, sched.alpha(t), sched.alpha_bar(t), z.as_ref())?;
    if !next.is_finite() {
        return Err(Error::Divergence { step: t });
    }
    state.a = next;
    state.t = t - 1;
    Ok(eps)
}

/// Runs the unconditional chain from `a_T ~ N(0, I)` down to `a_0`.
pub fn sample_unconditional<P: NoisePredictor + ?Sized>(
    shape: (usize, usize, usize),
    predictor: &P,
    sched: &NoiseSchedule,
    seed: u64,
) -> Result<Tensor3> {
    let mut state = SamplerState::from_noise(shape, sched, seed);
    while state.t > 0 {
        ancestral_step(&mut state, predictor, sched)?;
    }
    Ok(state.a)
}

/// Posterior-mean estimate of the clean base from `a_t`:
/// `(a_t - sqrt(1 - abar_t) eps) / sqrt(abar_t)`. At `t = 0` returns `a_t`.
pub fn tweedie_estimate<P: NoisePredictor + ?Sized>(
    a_t: &Tensor3,
    t: usize,
    predictor: &P,
    sched: &NoiseSchedule,
) -> Result<Tensor3> {
    if t == 0 {
        return Ok(a_t.clone());
    }
    let eps = predictor.predict(a_t, t, sched)?;
    Ok(tweedie_from_eps(a_t, &eps, sched.alpha_bar(t)))
}

fn tweedie_from_eps(a_t: &Tensor3, eps: &Tensor3, alpha_bar: f64) -> Tensor3 {
    let (sn, inv) = ((1.0 - alpha_bar).sqrt(), 1.0 / alpha_bar.sqrt());
    a_t.zip_map(eps, |a, e| (a - sn * e) * inv).expect("same shape")
}

/// The observations and fixed spectral coefficients that guidance pulls toward.
#[derive(Clone, Copy, Debug)]
pub struct Fidelity<'a> {
    /// `h x w x S` low-resolution multispectral image.
    pub lrms: &'a Tensor3,
    /// `H x W x 1` panchromatic image.
    pub pan: &'a Tensor3,
    /// `S x s` coefficient matrix.
    pub coefficients: &'a Mat,
    pub model: &'a DegradationModel,
}

impl Fidelity<'_> {
    pub fn check(&self, base_shape: (usize, usize, usize)) -> Result<()> {
        let (h, w, s) = base_shape;
        let e = self.coefficients;
        if e.cols() != s {
            return Err(Error::shape(format!(
                "coefficients are {}x{}, base has {s} bands",
                e.rows(),
                e.cols()
            )));
        }
        if self.pan.shape() != (h, w, 1) {
            return Err(Error::shape(format!(
                "PAN is {:?}, expected {h}x{w}x1",
                self.pan.shape()
            )));
        }
        let q = self.model.scale;
        if h % q != 0 || w % q != 0 {
            return Err(Error::shape(format!("{h}x{w} is not divisible by scale {q}")));
        }
        if self.lrms.shape() != (h / q, w / q, e.rows()) {
            return Err(Error::shape(format!(
                "LRMS is {:?}, expected {}x{}x{}",
                self.lrms.shape(),
                h / q,
                w / q,
                e.rows()
            )));
        }
        if self.model.response.len() != e.rows() {
            return Err(Error::shape(format!(
                "response has {} entries for {} bands",
                self.model.response.len(),
                e.rows()
            )));
        }
        Ok(())
    }

    /// Residuals `(D(B(A x_3 E)) - Y, A x_3 E x_3 r - P)`.
    pub fn residuals(&self, base: &Tensor3) -> Result<(Tensor3, Tensor3)> {
        let x = mode3_mul(base, self.coefficients)?;
        let r1 = self.model.spatial(&x)?.sub(self.lrms)?;
        let r2 = pan_project(&x, &self.model.response)?.sub(self.pan)?;
        Ok((r1, r2))
    }

    /// `eta1 ||R1||_F + eta2 ||R2||_F` at a clean-base estimate.
    pub fn objective(&self, base: &Tensor3, cfg: &GuidanceConfig) -> Result<f64> {
        let (r1, r2) = self.residuals(base)?;
        Ok(cfg.eta1 * r1.norm() + cfg.eta2 * r2.norm())
    }

    /// Gradient of [`Fidelity::objective`] with respect to the clean base.
    fn objective_gradient(&self, base: &Tensor3, cfg: &GuidanceConfig) -> Result<(Tensor3, f64, f64)> {
        let (r1, r2) = self.residuals(base)?;
        let (n1, n2) = (r1.norm(), r2.norm());
        let u1 = r1.scale(cfg.eta1 / n1.max(cfg.norm_floor));
        let u2 = r2.scale(cfg.eta2 / n2.max(cfg.norm_floor));
        let mut x_grad = self.model.spatial_adjoint(&u1)?;
        x_grad.axpy(1.0, &pan_project_adjoint(&u2, &self.model.response)?)?;
        Ok((mode3_mul_adjoint(&x_grad, self.coefficients)?, n1, n2))
    }
}

/// Guidance direction `n` and the residual norms it was computed from.
#[derive(Clone, Debug)]
pub struct Guidance {
    pub direction: Tensor3,
    pub residual_lrms: f64,
    pub residual_pan: f64,
}

/// `n = -grad_a [eta1 ||R1(A0(a))||_F + eta2 ||R2(A0(a))||_F]` where `A0(a)` is
/// the Tweedie estimate of `a` at noise level `t` (`t = 0` means `a` is clean).
pub fn guidance_gradient<P: NoisePredictor + ?Sized>(
    a: &Tensor3,
    fidelity: &Fidelity<'_>,
    predictor: &P,
    t: usize,
    sched: &NoiseSchedule,
    cfg: &GuidanceConfig,
) -> Result<Guidance> {
    cfg.validate()?;
    if cfg.vjp_mode == VjpMode::Full && !predictor.supports_vjp() {
        return Err(Error::Capability("vector-Jacobian products (full vjp mode)"));
    }
    fidelity.check(a.shape())?;
    let (a0, abar) = if t == 0 {
        (a.clone(), 1.0)
    } else {
        let eps = predictor.predict(a, t, sched)?;
        let abar = sched.alpha_bar(t);
        (tweedie_from_eps(a, &eps, abar), abar)
    };
    let (g, n1, n2) = fidelity.objective_gradient(&a0, cfg)?;
    let inv = 1.0 / abar.sqrt();
    let grad = match cfg.vjp_mode {
        _ if t == 0 => g,
        VjpMode::StopGradient => g.scale(inv),
        VjpMode::Full => {
            let v = predictor.vjp(a, t, sched, &g)?;
            let sn = (1.0 - abar).sqrt();
            g.zip_map(&v, |gi, vi| (gi - sn * vi) * inv)?
        }
    };
    Ok(Guidance {
        direction: grad.scale(-1.0),
        residual_lrms: n1,
        residual_pan: n2,
    })
}

/// Outcome of a guided sampling run.
#[derive(Clone, Debug)]
pub struct PlrdiffOutput {
    /// Restored `H x W x S` image `A0 x_3 E`.
    pub hrms: Tensor3,
    /// Final base tensor `A0` (`H x W x s`).
    pub base: Tensor3,
    pub coefficients: Mat,
    pub trace: Vec<StepTrace>,
}

/// Guided reverse diffusion with a given coefficient matrix. Returns the
/// final base tensor and the step trace (empty unless `trace` is set).
pub fn guided_sample<P: NoisePredictor + ?Sized>(
    fidelity: &Fidelity<'_>,
    predictor: &P,
    sched: &NoiseSchedule,
    cfg: &GuidanceConfig,
    seed: u64,
    trace: bool,
) -> Result<(Tensor3, Vec<StepTrace>)> {
    cfg.validate()?;
    if cfg.vjp_mode == VjpMode::Full && !cfg.is_off() && !predictor.supports_vjp() {
        return Err(Error::Capability("vector-Jacobian products (full vjp mode)"));
    }
    let (h, w, _) = fidelity.pan.shape();
    let shape = (h, w, fidelity.coefficients.cols());
    fidelity.check(shape)?;

    let mut state = SamplerState::from_noise(shape, sched, seed);
    let mut steps = Vec::new();
    while state.t > 0 {
        let t = state.t;
        let eps = ancestral_step(&mut state, predictor, sched)?;
        let (mut r1, mut r2) = (f64::NAN, f64::NAN);
        if !cfg.is_off() {
            let g = guidance_gradient(&state.a, fidelity, predictor, t - 1, sched, cfg)?;
            let k = sched.beta(t) / sched.alpha(t).sqrt();
            state.a.axpy(k, &g.direction)?;
            if !state.a.is_finite() {
                return Err(Error::Divergence { step: t });
            }
            (r1, r2) = (g.residual_lrms, g.residual_pan);
        }
        if trace {
            steps.push(StepTrace {
                t,
                residual_lrms: r1,
                residual_pan: r2,
                eps_norm: eps.norm(),
                iterate_norm: state.a.norm(),
            });
        }
    }
    Ok((state.a, steps))
}

/// End-to-end guided pansharpening: estimates `E` from the LRMS at the
/// selected bands, samples the base tensor and returns `A0 x_3 E`.
#[allow(clippy::too_many_arguments)]
pub fn plrdiff_sample<P: NoisePredictor + ?Sized>(
    lrms: &Tensor3,
    pan: &Tensor3,
    sel: &BandSelection,
    model: &DegradationModel,
    predictor: &P,
    sched: &NoiseSchedule,
    cfg: &GuidanceConfig,
    seed: u64,
) -> Result<PlrdiffOutput> {
    let coefficients = estimate_coefficients(lrms, sel)?;
    let fidelity = Fidelity {
        lrms,
        pan,
        coefficients: &coefficients,
        model,
    };
    let (base, trace) = guided_sample(&fidelity, predictor, sched, cfg, seed, true)?;
    let hrms = reconstruct(&base, &coefficients)?;
    Ok(PlrdiffOutput {
        hrms,
        base,
        coefficients,
        trace,
    })
}
