use plrdiff_core::degrade::{gaussian_kernel, wald_generate, DegradationModel, SpectralResponse};
use plrdiff_core::denoiser::{train_denoiser, GaussianPrior, NoisePredictor, TrainOptions};
use plrdiff_core::sampler::{guidance_gradient, Fidelity, GuidanceConfig, VjpMode};
use plrdiff_core::schedule::{forward_sample, linear_schedule, NoiseSchedule};
use plrdiff_core::synth::texture;
use plrdiff_core::tensor3::{mode3_mul, Mat, Tensor3};
use plrdiff_core::{TinyDenoiser, TinyDenoiserConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Problem {
    lrms: Tensor3,
    pan: Tensor3,
    e: Mat,
    model: DegradationModel,
}

fn problem(rng: &mut ChaCha8Rng) -> Problem {
    let model = DegradationModel::new(
        2,
        gaussian_kernel(3, 0.9).unwrap(),
        SpectralResponse::new(vec![0.2, 0.3, 0.1, 0.25, 0.15]).unwrap(),
    )
    .unwrap();
    let e = Mat::from_fn(5, 3, |_, _| rng.random_range(0.0..1.0));
    let truth = Tensor3::from_fn(8, 8, 3, |_, _, _| rng.random_range(0.0..1.0));
    let (lrms, pan) = wald_generate(&mode3_mul(&truth, &e).unwrap(), &model).unwrap();
    Problem { lrms, pan, e, model }
}

/// Objective at `a` with the clean estimate formed from a given noise prediction.
fn objective_with_eps(fid: &Fidelity<'_>, a: &Tensor3, eps: &Tensor3, abar: f64, cfg: &GuidanceConfig) -> f64 {
    let a0 = a
        .zip_map(eps, |x, e| (x - (1.0 - abar).sqrt() * e) / abar.sqrt())
        .unwrap();
    fid.objective(&a0, cfg).unwrap()
}

/// Central differences of the guidance objective. In stop-gradient mode the
/// noise prediction is frozen at `a`.
fn fd_gradient<P: NoisePredictor>(
    fid: &Fidelity<'_>,
    pred: &P,
    a: &Tensor3,
    t: usize,
    sched: &NoiseSchedule,
    cfg: &GuidanceConfig,
) -> Tensor3 {
    let abar = sched.alpha_bar(t);
    let frozen = pred.predict(a, t, sched).unwrap();
    let f = |x: &Tensor3| match cfg.vjp_mode {
        VjpMode::Full => objective_with_eps(fid, x, &pred.predict(x, t, sched).unwrap(), abar, cfg),
        VjpMode::StopGradient => objective_with_eps(fid, x, &frozen, abar, cfg),
    };
    let h = 1e-6;
    let mut g = a.clone();
    for k in 0..a.len() {
        let mut p = a.clone();
        p.as_mut_slice()[k] += h;
        let mut m = a.clone();
        m.as_mut_slice()[k] -= h;
        g.as_mut_slice()[k] = (f(&p) - f(&m)) / (2.0 * h);
    }
    g
}

fn check_modes<P: NoisePredictor>(pred: &P, trials: usize, seed: u64) {
    let sched = linear_schedule(200).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..trials {
        let p = problem(&mut rng);
        let fid = Fidelity {
            lrms: &p.lrms,
            pan: &p.pan,
            coefficients: &p.e,
            model: &p.model,
        };
        let t = rng.random_range(1..=200);
        let a = Tensor3::from_fn(8, 8, 3, |_, _, _| rng.random_range(-1.0..1.0));
        for mode in [VjpMode::StopGradient, VjpMode::Full] {
            let cfg = GuidanceConfig::new(rng.random_range(0.5..2.0), rng.random_range(0.5..2.0), mode).unwrap();
            let g = guidance_gradient(&a, &fid, pred, t, &sched, &cfg).unwrap();
            let fd = fd_gradient(&fid, pred, &a, t, &sched, &cfg);
            let grad = g.direction.scale(-1.0);
            let rel = grad.sub(&fd).unwrap().norm() / fd.norm();
            assert!(rel < 1e-5, "trial {trial}, {mode:?}, t={t}: rel {rel:e}");
        }
    }
}

#[test]
fn gaussian_prior_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mean = Tensor3::from_fn(8, 8, 3, |_, _, _| rng.random_range(0.0..1.0));
    let prior = GaussianPrior::new(mean, 0.4).unwrap();
    check_modes(&prior, 5, 1);
}

#[test]
fn trained_denoiser_gradients_match_finite_differences() {
    let sched = linear_schedule(200).unwrap();
    let data: Vec<Tensor3> = (0..4).map(|k| texture(8, 8, 3, k)).collect();
    let net = TinyDenoiser::new(TinyDenoiserConfig {
        bands: 3,
        hidden: 6,
        seed: 5,
    })
    .unwrap();
    let opts = TrainOptions {
        steps: 150,
        holdout_fraction: 0.0,
        ..TrainOptions::default()
    };
    let (net, _) = train_denoiser(&net, &data, &sched, &opts).unwrap();
    assert!(net
        .layers()
        .iter()
        .any(|(name, _, w)| *name == "conv_out.weight" && w.iter().any(|v| *v != 0.0)));
    check_modes(&net, 5, 2);
}

#[test]
fn clean_level_gradient_is_plain_objective_gradient() {
    let sched = linear_schedule(50).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = problem(&mut rng);
    let fid = Fidelity {
        lrms: &p.lrms,
        pan: &p.pan,
        coefficients: &p.e,
        model: &p.model,
    };
    let a = Tensor3::from_fn(8, 8, 3, |_, _, _| rng.random_range(-1.0..1.0));
    let prior = GaussianPrior::constant(8, 8, 3, 0.0, 1.0).unwrap();
    let cfg = GuidanceConfig::default();
    let g = guidance_gradient(&a, &fid, &prior, 0, &sched, &cfg).unwrap();
    let h = 1e-6;
    for k in [0, 17, 100, 191] {
        let mut ap = a.clone();
        ap.as_mut_slice()[k] += h;
        let mut am = a.clone();
        am.as_mut_slice()[k] -= h;
        let fd = (fid.objective(&ap, &cfg).unwrap() - fid.objective(&am, &cfg).unwrap()) / (2.0 * h);
        assert!((fd + g.direction.as_slice()[k]).abs() < 1e-6 * fd.abs().max(1.0));
    }
}

#[test]
fn forward_marginal_moments() {
    // T = 10 with hand-picked betas; x0 = 0.5 everywhere
    let sched = NoiseSchedule::from_betas(&[0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5]).unwrap();
    let x0 = Tensor3::filled(40, 50, 1, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let product: f64 = [0.95, 0.9, 0.85, 0.8, 0.75, 0.7, 0.65, 0.6, 0.55, 0.5].iter().product();
    assert!((sched.alpha_bar(10) - product).abs() < 1e-15);
    for t in [1, 5, 10] {
        let abar = sched.alpha_bar(t);
        let (xt, _) = forward_sample(&x0, t, &sched, &mut rng).unwrap();
        let n = xt.len() as f64;
        let mean = xt.mean();
        let var = xt.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = ((1.0 - abar) / n).sqrt();
        assert!((mean - 0.5 * abar.sqrt()).abs() < 4.0 * se, "t={t}");
        assert!((var / (1.0 - abar) - 1.0).abs() < 0.1, "t={t}");
    }
}
