//! A four-layer convolutional noise predictor with hand-written backprop.
//!
//! ```text
//! e  = W_t phi(t) + b_t                     (sinusoidal time features)
//! h1 = silu(conv_in(x) + e)
//! h2 = h1 + silu(conv_mid(h1) + e)
//! h3 = silu(conv_hid(h2))
//! y  = (conv_out(h3) + skip_t(x)) / sigma_t (conv_out and skip zero-initialized)
//! ```
//!
//! `skip_t` is a linear 3x3 convolution whose taps are affine in `phi(t)`, and
//! `sigma_t = sqrt(1 - abar_t)` is the noise level of the input.
//!
//! All convolutions are 3x3 with zero padding. Feature maps are stored
//! channel-major (`c * H * W + i * W + j`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;
use crate::tensor3::Tensor3;

use super::{check_step, NoisePredictor};

/// Length of the sinusoidal time feature vector.
pub const TIME_DIM: usize = 16;
const K: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TinyDenoiserConfig {
    pub bands: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TinyDenoiserConfig {
    fn default() -> Self {
        Self {
            bands: 3,
            hidden: 8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Conv {
    cin: usize,
    cout: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl Conv {
    fn new(cin: usize, cout: usize, std: f64, rng: &mut ChaCha8Rng) -> Self {
        let weight = (0..cout * cin * K * K)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            cin,
            cout,
            weight,
            bias: vec![0.0; cout],
        }
    }

    #[inline]
    fn w(&self, o: usize, c: usize, u: usize, v: usize) -> f64 {
        self.weight[((o * self.cin + c) * K + u) * K + v]
    }

    fn forward(&self, input: &[f64], h: usize, w: usize) -> Vec<f64> {
        let n = h * w;
        let mut out = vec![0.0; self.cout * n];
        for o in 0..self.cout {
            let dst = &mut out[o * n..(o + 1) * n];
            dst.fill(self.bias[o]);
            for c in 0..self.cin {
                let src = &input[c * n..(c + 1) * n];
                for u in 0..K {
                    for v in 0..K {
                        let wt = self.w(o, c, u, v);
                        for_each_tap(h, w, u, v, |di, si, jlo, jhi, sjlo| {
                            let d = &mut dst[di * w + jlo..di * w + jhi];
                            let s = &src[si * w + sjlo..si * w + sjlo + (jhi - jlo)];
                            for (x, y) in d.iter_mut().zip(s) {
                                *x += wt * y;
                            }
                        });
                    }
                }
            }
        }
        out
    }

    /// Returns the input gradient; accumulates parameter gradients when given.
    fn backward(
        &self,
        input: &[f64],
        dout: &[f64],
        h: usize,
        w: usize,
        mut grads: Option<(&mut [f64], &mut [f64])>,
    ) -> Vec<f64> {
        let n = h * w;
        let mut din = vec![0.0; self.cin * n];
        for o in 0..self.cout {
            let g = &dout[o * n..(o + 1) * n];
            if let Some((_, gb)) = grads.as_mut() {
                gb[o] += g.iter().sum::<f64>();
            }
            for c in 0..self.cin {
                let src = &input[c * n..(c + 1) * n];
                let dsrc = &mut din[c * n..(c + 1) * n];
                for u in 0..K {
                    for v in 0..K {
                        let wt = self.w(o, c, u, v);
                        let mut acc = 0.0;
                        for_each_tap(h, w, u, v, |di, si, jlo, jhi, sjlo| {
                            let gr = &g[di * w + jlo..di * w + jhi];
                            let len = jhi - jlo;
                            let s = &src[si * w + sjlo..si * w + sjlo + len];
                            let ds = &mut dsrc[si * w + sjlo..si * w + sjlo + len];
                            for ((gx, sx), dx) in gr.iter().zip(s).zip(ds.iter_mut()) {
                                acc += gx * sx;
                                *dx += wt * gx;
                            }
                        });
                        if let Some((gw, _)) = grads.as_mut() {
                            gw[((o * self.cin + c) * K + u) * K + v] += acc;
                        }
                    }
                }
            }
        }
        din
    }
}

/// Visits the valid rows for tap `(u, v)` of a zero-padded 3x3 convolution:
/// output row `di` reads source row `si = di + u - 1`, output columns
/// `jlo..jhi` read source columns starting at `sjlo`.
#[inline]
fn for_each_tap(h: usize, w: usize, u: usize, v: usize, mut f: impl FnMut(usize, usize, usize, usize, usize)) {
    let (ilo, ihi) = if u == 0 {
        (1, h)
    } else if u == 1 {
        (0, h)
    } else {
        (0, h - 1)
    };
    let (jlo, jhi) = if v == 0 {
        (1, w)
    } else if v == 1 {
        (0, w)
    } else {
        (0, w - 1)
    };
    if jlo >= jhi {
        return;
    }
    let sjlo = jlo + v - 1;
    for di in ilo..ihi {
        f(di, di + u - 1, jlo, jhi, sjlo);
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Steps of the reference clock the network sees time on.
pub const CLOCK_STEPS: f64 = 1000.0;

/// Step `t` of a `steps`-step schedule on the reference clock.
pub(crate) fn clock(t: usize, steps: usize) -> f64 {
    t as f64 * CLOCK_STEPS / steps as f64
}

/// What the network is told about the noise of its input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Level {
    /// Clock time.
    pub tau: f64,
    /// `sqrt(1 - abar_t)`.
    pub sigma: f64,
}

impl Level {
    pub(crate) fn of(t: usize, sched: &NoiseSchedule) -> Self {
        Self {
            tau: clock(t, sched.steps()),
            sigma: (1.0 - sched.alpha_bar(t)).sqrt(),
        }
    }
}

/// Sinusoidal features of the clock time.
pub(crate) fn time_features(tau: f64) -> [f64; TIME_DIM] {
    let half = TIME_DIM / 2;
    let mut phi = [0.0; TIME_DIM];
    for k in 0..half {
        let freq = (-(10_000f64.ln()) * k as f64 / half as f64).exp();
        let arg = tau * freq;
        phi[2 * k] = arg.sin();
        phi[2 * k + 1] = arg.cos();
    }
    phi
}

/// Small convolutional residual noise predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct TinyDenoiser {
    bands: usize,
    hidden: usize,
    conv_in: Conv,
    conv_mid: Conv,
    conv_hid: Conv,
    conv_out: Conv,
    time_w: Vec<f64>,
    time_b: Vec<f64>,
    skip_w: Vec<f64>,
    skip_b: Vec<f64>,
}

pub(crate) struct Cache {
    h: usize,
    w: usize,
    sigma: f64,
    phi: [f64; TIME_DIM],
    x: Vec<f64>,
    z1: Vec<f64>,
    h1: Vec<f64>,
    z2: Vec<f64>,
    h2: Vec<f64>,
    z3: Vec<f64>,
    h3: Vec<f64>,
}

const LAYERS: usize = 12;

const LAYER_NAMES: [&str; LAYERS] = [
    "conv_in.weight",
    "conv_in.bias",
    "conv_mid.weight",
    "conv_mid.bias",
    "conv_hid.weight",
    "conv_hid.bias",
    "conv_out.weight",
    "conv_out.bias",
    "time.weight",
    "time.bias",
    "skip.weight",
    "skip.bias",
];

impl TinyDenoiser {
    /// He-initialized hidden layers and zero output and skip layers, so a
    /// fresh network predicts zero noise everywhere.
    pub fn new(cfg: TinyDenoiserConfig) -> Result<Self> {
        if cfg.bands == 0 || cfg.hidden == 0 {
            return Err(Error::param("hidden", "bands and hidden width must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (s, c) = (cfg.bands, cfg.hidden);
        let he = |cin: usize| (2.0 / (cin * K * K) as f64).sqrt();
        let conv_in = Conv::new(s, c, he(s), &mut rng);
        let conv_mid = Conv::new(c, c, he(c), &mut rng);
        let conv_hid = Conv::new(c, c, he(c), &mut rng);
        let conv_out = Conv::new(c, s, 0.0, &mut rng);
        let time_w = (0..c * TIME_DIM)
            .map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(Self {
            bands: s,
            hidden: c,
            conv_in,
            conv_mid,
            conv_hid,
            conv_out,
            time_w,
            time_b: vec![0.0; c],
            skip_w: vec![0.0; s * s * K * K * TIME_DIM],
            skip_b: vec![0.0; s * s * K * K],
        })
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Named parameter arrays with their shapes, in serialization order.
    pub fn layers(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        let (s, c) = (self.bands, self.hidden);
        let shapes = self.shapes();
        let data: [&[f64]; LAYERS] = [
            &self.conv_in.weight,
            &self.conv_in.bias,
            &self.conv_mid.weight,
            &self.conv_mid.bias,
            &self.conv_hid.weight,
            &self.conv_hid.bias,
            &self.conv_out.weight,
            &self.conv_out.bias,
            &self.time_w,
            &self.time_b,
            &self.skip_w,
            &self.skip_b,
        ];
        debug_assert_eq!(shapes[0], vec![c, s, K, K]);
        LAYER_NAMES
            .iter()
            .zip(shapes)
            .zip(data)
            .map(|((n, sh), d)| (*n, sh, d))
            .collect()
    }

    fn shapes(&self) -> Vec<Vec<usize>> {
        Self::shapes_for(self.bands, self.hidden)
    }

    fn shapes_for(s: usize, c: usize) -> Vec<Vec<usize>> {
        vec![
            vec![c, s, K, K],
            vec![c],
            vec![c, c, K, K],
            vec![c],
            vec![c, c, K, K],
            vec![c],
            vec![s, c, K, K],
            vec![s],
            vec![c, TIME_DIM],
            vec![c],
            vec![s, s, K, K, TIME_DIM],
            vec![s, s, K, K],
        ]
    }

    /// Rebuilds a network from `(shape, values)` pairs in [`TinyDenoiser::layers`] order.
    pub fn from_layers(layers: Vec<(Vec<usize>, Vec<f64>)>) -> Result<Self> {
        if layers.len() != LAYER_NAMES.len() {
            return Err(Error::shape(format!(
                "expected {} parameter arrays, got {}",
                LAYER_NAMES.len(),
                layers.len()
            )));
        }
        let first = &layers[0].0;
        if first.len() != 4 {
            return Err(Error::shape("first layer must be a 4-d convolution weight"));
        }
        let (c, s) = (first[0], first[1]);
        let expected = Self::shapes_for(s, c);
        for (k, ((shape, data), want)) in layers.iter().zip(&expected).enumerate() {
            if shape != want {
                return Err(Error::shape(format!(
                    "{}: shape {shape:?}, expected {want:?}",
                    LAYER_NAMES[k]
                )));
            }
            if data.len() != want.iter().product::<usize>() {
                return Err(Error::shape(format!("{}: wrong value count", LAYER_NAMES[k])));
            }
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::param(
                    "weights",
                    format!("{} has non-finite values", LAYER_NAMES[k]),
                ));
            }
        }
        let mut it = layers.into_iter().map(|(_, d)| d);
        let mut next = || it.next().expect("checked length");
        let mut conv = |cin, cout| Conv {
            cin,
            cout,
            weight: next(),
            bias: next(),
        };
        let conv_in = conv(s, c);
        let conv_mid = conv(c, c);
        let conv_hid = conv(c, c);
        let conv_out = conv(c, s);
        let time_w = next();
        let time_b = next();
        let skip_w = next();
        let skip_b = next();
        Ok(Self {
            bands: s,
            hidden: c,
            conv_in,
            conv_mid,
            conv_hid,
            conv_out,
            time_w,
            time_b,
            skip_w,
            skip_b,
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|(_, _, d)| d.len()).sum()
    }

    pub(crate) fn params_mut(&mut self) -> [&mut Vec<f64>; LAYERS] {
        [
            &mut self.conv_in.weight,
            &mut self.conv_in.bias,
            &mut self.conv_mid.weight,
            &mut self.conv_mid.bias,
            &mut self.conv_hid.weight,
            &mut self.conv_hid.bias,
            &mut self.conv_out.weight,
            &mut self.conv_out.bias,
            &mut self.time_w,
            &mut self.time_b,
            &mut self.skip_w,
            &mut self.skip_b,
        ]
    }

    pub(crate) fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.layers().iter().map(|(_, _, d)| vec![0.0; d.len()]).collect()
    }

    fn check_input(&self, a: &Tensor3) -> Result<()> {
        if a.bands() != self.bands {
            return Err(Error::shape(format!(
                "denoiser expects {} bands, got {}",
                self.bands,
                a.bands()
            )));
        }
        Ok(())
    }

    fn embedding(&self, phi: &[f64; TIME_DIM]) -> Vec<f64> {
        affine_time(&self.time_w, &self.time_b, phi)
    }

    fn skip_conv(&self, phi: &[f64; TIME_DIM]) -> Conv {
        Conv {
            cin: self.bands,
            cout: self.bands,
            weight: affine_time(&self.skip_w, &self.skip_b, phi),
            bias: vec![0.0; self.bands],
        }
    }

    pub(crate) fn forward(&self, a: &Tensor3, level: Level) -> (Tensor3, Cache) {
        let (h, w, s) = a.shape();
        let n = h * w;
        let x = to_planes(a);
        let phi = time_features(level.tau);
        let emb = self.embedding(&phi);

        let mut z1 = self.conv_in.forward(&x, h, w);
        add_channel_bias(&mut z1, &emb, n);
        let h1: Vec<f64> = z1.iter().map(|&v| silu(v)).collect();

        let mut z2 = self.conv_mid.forward(&h1, h, w);
        add_channel_bias(&mut z2, &emb, n);
        let h2: Vec<f64> = h1.iter().zip(&z2).map(|(a, &z)| a + silu(z)).collect();

        let z3 = self.conv_hid.forward(&h2, h, w);
        let h3: Vec<f64> = z3.iter().map(|&v| silu(v)).collect();

        let mut y = self.conv_out.forward(&h3, h, w);
        for (yv, sv) in y.iter_mut().zip(self.skip_conv(&phi).forward(&x, h, w)) {
            *yv = (*yv + sv) / level.sigma;
        }
        let out = from_planes(&y, h, w, s);
        let cache = Cache {
            h,
            w,
            sigma: level.sigma,
            phi,
            x,
            z1,
            h1,
            z2,
            h2,
            z3,
            h3,
        };
        (out, cache)
    }

    /// Back-propagates `dout`; returns the input gradient and, when
    /// `grads` is given, accumulates parameter gradients into it.
    pub(crate) fn backward(&self, cache: &Cache, dout: &Tensor3, mut grads: Option<&mut [Vec<f64>]>) -> Tensor3 {
        let (h, w) = (cache.h, cache.w);
        let n = h * w;
        let dy: Vec<f64> = to_planes(dout).iter().map(|v| v / cache.sigma).collect();

        macro_rules! pair {
            ($i:expr) => {
                grads.as_deref_mut().map(|g| {
                    let (a, b) = g.split_at_mut($i + 1);
                    (a[$i].as_mut_slice(), b[0].as_mut_slice())
                })
            };
        }

        let dh3 = self.conv_out.backward(&cache.h3, &dy, h, w, pair!(6));
        let dz3: Vec<f64> = dh3.iter().zip(&cache.z3).map(|(g, &z)| g * silu_grad(z)).collect();
        let mut dh2 = self.conv_hid.backward(&cache.h2, &dz3, h, w, pair!(4));

        let dz2: Vec<f64> = dh2.iter().zip(&cache.z2).map(|(g, &z)| g * silu_grad(z)).collect();
        let dmid = self.conv_mid.backward(&cache.h1, &dz2, h, w, pair!(2));
        for (a, b) in dh2.iter_mut().zip(&dmid) {
            *a += b;
        }
        let dh1 = dh2;
        let dz1: Vec<f64> = dh1.iter().zip(&cache.z1).map(|(g, &z)| g * silu_grad(z)).collect();
        let mut dx = self.conv_in.backward(&cache.x, &dz1, h, w, pair!(0));
        let skip = self.skip_conv(&cache.phi);
        let mut taps = grads
            .as_ref()
            .map(|_| (vec![0.0; skip.weight.len()], vec![0.0; self.bands]));
        let dskip = skip.backward(
            &cache.x,
            &dy,
            h,
            w,
            taps.as_mut().map(|(gw, gb)| (gw.as_mut_slice(), gb.as_mut_slice())),
        );
        for (d, v) in dx.iter_mut().zip(&dskip) {
            *d += v;
        }

        if let Some(g) = grads {
            let (gw, _) = taps.expect("allocated with grads");
            for (r, gt) in gw.iter().enumerate() {
                g[11][r] += gt;
                for (k, p) in cache.phi.iter().enumerate() {
                    g[10][r * TIME_DIM + k] += gt * p;
                }
            }
            for c in 0..self.hidden {
                let de: f64 = dz1[c * n..(c + 1) * n].iter().sum::<f64>() + dz2[c * n..(c + 1) * n].iter().sum::<f64>();
                g[9][c] += de;
                for (k, p) in cache.phi.iter().enumerate() {
                    g[8][c * TIME_DIM + k] += de * p;
                }
            }
        }
        from_planes(&dx, h, w, self.bands)
    }
}

impl NoisePredictor for TinyDenoiser {
    fn predict(&self, a_t: &Tensor3, t: usize, sched: &NoiseSchedule) -> Result<Tensor3> {
        check_step(t, sched)?;
        self.check_input(a_t)?;
        Ok(self.forward(a_t, Level::of(t, sched)).0)
    }

    fn supports_vjp(&self) -> bool {
        true
    }

    fn vjp(&self, a_t: &Tensor3, t: usize, sched: &NoiseSchedule, cotangent: &Tensor3) -> Result<Tensor3> {
        check_step(t, sched)?;
        self.check_input(a_t)?;
        a_t.check_same_shape(cotangent, "cotangent")?;
        let (_, cache) = self.forward(a_t, Level::of(t, sched));
        Ok(self.backward(&cache, cotangent, None))
    }
}

/// `W phi + b` for a row-major `W` with `TIME_DIM` columns.
fn affine_time(w: &[f64], b: &[f64], phi: &[f64; TIME_DIM]) -> Vec<f64> {
    b.iter()
        .enumerate()
        .map(|(r, bias)| {
            bias + w[r * TIME_DIM..(r + 1) * TIME_DIM]
                .iter()
                .zip(phi)
                .map(|(w, p)| w * p)
                .sum::<f64>()
        })
        .collect()
}

fn add_channel_bias(z: &mut [f64], bias: &[f64], n: usize) {
    for (c, b) in bias.iter().enumerate() {
        z[c * n..(c + 1) * n].iter_mut().for_each(|v| *v += b);
    }
}

fn to_planes(a: &Tensor3) -> Vec<f64> {
    let s = a.bands();
    let n = a.pixels();
    let mut out = vec![0.0; s * n];
    for (p, spec) in a.as_slice().chunks_exact(s).enumerate() {
        for (b, v) in spec.iter().enumerate() {
            out[b * n + p] = *v;
        }
    }
    out
}

fn from_planes(planes: &[f64], h: usize, w: usize, s: usize) -> Tensor3 {
    let n = h * w;
    Tensor3::from_fn(h, w, s, |i, j, b| planes[b * n + i * w + j])
}
