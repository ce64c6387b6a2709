//! Observation operators: spatial blur, decimation and spectral response,
//! their adjoints, and reduced-resolution (Wald) data synthesis.
//!
//! Convolutions are circular, so every adjoint here is exact and the blur
//! commutes with spectral mixing. Remote-sensing toolboxes usually pad
//! symmetrically instead; expect small differences near image borders.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor3::{mode3_mul, mode3_mul_adjoint, Mat, Tensor3};

/// Default Gaussian width for a scale-4 decimation.
pub fn default_sigma() -> f64 {
    (4.0f64.powi(2) / 8.0 / std::f64::consts::LN_2).sqrt()
}

/// Square blur kernel with odd side length, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    size: usize,
    weights: Vec<f64>,
}

impl Kernel {
    /// Wraps explicit weights. The side must be odd and the weights must sum to one.
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size % 2 == 0 {
            return Err(Error::param("kernel_size", format!("must be odd, got {size}")));
        }
        if weights.len() != size * size {
            return Err(Error::shape(format!(
                "kernel of side {size} needs {} weights, got {}",
                size * size,
                weights.len()
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::param("kernel", format!("weights sum to {sum}, expected 1")));
        }
        Ok(Self { size, weights })
    }

    pub fn delta() -> Self {
        Self {
            size: 1,
            weights: vec![1.0],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.weights[u * self.size + v]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The kernel rotated by 180 degrees.
    pub fn rotated(&self) -> Kernel {
        Kernel {
            size: self.size,
            weights: self.weights.iter().rev().copied().collect(),
        }
    }
}

/// Centered isotropic Gaussian of odd side `size`, normalized to unit sum.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Kernel> {
    if size % 2 == 0 || size == 0 {
        return Err(Error::param("kernel_size", format!("must be odd, got {size}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param("sigma", format!("must be positive, got {sigma}")));
    }
    let c = (size / 2) as f64;
    let mut w: Vec<f64> = (0..size * size)
        .map(|k| {
            let (u, v) = ((k / size) as f64 - c, (k % size) as f64 - c);
            (-(u * u + v * v) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    Ok(Kernel { size, weights: w })
}

fn check_kernel_fits(x: &Tensor3, kernel: &Kernel) -> Result<()> {
    if kernel.size > x.height().min(x.width()) {
        return Err(Error::param(
            "kernel_size",
            format!("kernel side {} exceeds image {}x{}", kernel.size, x.height(), x.width()),
        ));
    }
    Ok(())
}

/// `out(i,j) = sum_{u,v} k(u,v) x(i + c - u, j + c - v)` with wrap-around,
/// where `c` is the kernel center; `flip` evaluates the correlation instead.
fn circular_filter(x: &Tensor3, kernel: &Kernel, flip: bool) -> Tensor3 {
    let (h, w, s) = x.shape();
    let k = kernel.size;
    let c = k / 2;
    let src = x.as_slice();
    let mut out = Tensor3::zeros(h, w, s);
    let dst = out.as_mut_slice();
    for u in 0..k {
        for v in 0..k {
            let wt = kernel.get(u, v);
            if wt == 0.0 {
                continue;
            }
            // row offset so that src_row = (i + di) mod h
            let (di, dj) = if flip {
                (h + u - c, w + v - c)
            } else {
                (h + c - u, w + c - v)
            };
            for i in 0..h {
                let si = (i + di) % h;
                for j in 0..w {
                    let sj = (j + dj) % w;
                    let so = (si * w + sj) * s;
                    let d = (i * w + j) * s;
                    for b in 0..s {
                        dst[d + b] += wt * src[so + b];
                    }
                }
            }
        }
    }
    out
}

/// Band-wise circular convolution.
pub fn blur(x: &Tensor3, kernel: &Kernel) -> Result<Tensor3> {
    check_kernel_fits(x, kernel)?;
    Ok(circular_filter(x, kernel, false))
}

/// Exact adjoint of [`blur`]: convolution with the 180-degree rotated kernel.
pub fn blur_adjoint(x: &Tensor3, kernel: &Kernel) -> Result<Tensor3> {
    check_kernel_fits(x, kernel)?;
    Ok(circular_filter(x, kernel, true))
}

/// Keeps pixels `(i*q, j*q)`.
pub fn downsample(x: &Tensor3, q: usize) -> Result<Tensor3> {
    let (h, w, s) = x.shape();
    if q == 0 || h % q != 0 || w % q != 0 {
        return Err(Error::shape(format!("image {h}x{w} is not divisible by scale {q}")));
    }
    let (lh, lw) = (h / q, w / q);
    let mut out = Tensor3::zeros(lh, lw, s);
    let dst = out.as_mut_slice();
    for i in 0..lh {
        for j in 0..lw {
            let d = (i * lw + j) * s;
            dst[d..d + s].copy_from_slice(x.pixel(i * q, j * q));
        }
    }
    Ok(out)
}

/// Zero-filled upsampling, the exact adjoint of [`downsample`].
pub fn downsample_adjoint(y: &Tensor3, q: usize) -> Result<Tensor3> {
    if q == 0 {
        return Err(Error::param("scale", "must be positive"));
    }
    let (lh, lw, s) = y.shape();
    let (h, w) = (lh * q, lw * q);
    let mut out = Tensor3::zeros(h, w, s);
    let dst = out.as_mut_slice();
    for i in 0..lh {
        for j in 0..lw {
            let d = ((i * q) * w + j * q) * s;
            dst[d..d + s].copy_from_slice(y.pixel(i, j));
        }
    }
    Ok(out)
}

/// Nearest-neighbour (zero-order hold) upsampling; the naive baseline a
/// pansharpening result should beat.
pub fn zero_order_hold(y: &Tensor3, q: usize) -> Tensor3 {
    let (lh, lw, s) = y.shape();
    Tensor3::from_fn(lh * q, lw * q, s, |i, j, b| y.get(i / q, j / q, b))
}

/// Spectral response row `r` (`1 x S`), nonnegative and summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralResponse(Vec<f64>);

impl SpectralResponse {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::param("response", "empty response vector"));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::param("response", "entries must be finite and nonnegative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::param("response", format!("entries sum to {sum}, expected 1")));
        }
        Ok(Self(weights))
    }

    /// Uniform average over every band.
    pub fn uniform(bands: usize) -> Result<Self> {
        Self::uniform_range(bands, 1, bands)
    }

    /// Uniform average over the 1-based inclusive band range `first..=last`.
    pub fn uniform_range(bands: usize, first: usize, last: usize) -> Result<Self> {
        if first == 0 || first > last || last > bands {
            return Err(Error::param(
                "response_range",
                format!("range {first}..={last} is not inside 1..={bands}"),
            ));
        }
        let n = (last - first + 1) as f64;
        let w = (1..=bands)
            .map(|b| if (first..=last).contains(&b) { 1.0 / n } else { 0.0 })
            .collect();
        Ok(Self(w))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    /// The response as a `1 x S` matrix.
    pub fn as_row(&self) -> Mat {
        Mat::from_vec(1, self.0.len(), self.0.clone()).expect("row shape")
    }
}

/// Projects to a single panchromatic band: `x x_3 r`.
pub fn pan_project(x: &Tensor3, response: &SpectralResponse) -> Result<Tensor3> {
    if response.len() != x.bands() {
        return Err(Error::shape(format!(
            "response has {} entries for a {}-band image",
            response.len(),
            x.bands()
        )));
    }
    mode3_mul(x, &response.as_row())
}

/// Adjoint of [`pan_project`].
pub fn pan_project_adjoint(p: &Tensor3, response: &SpectralResponse) -> Result<Tensor3> {
    mode3_mul_adjoint(p, &response.as_row())
}

/// Known degradation `(D, B, r)` relating HRMS to the LRMS and PAN observations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationModel {
    pub scale: usize,
    pub kernel: Kernel,
    pub response: SpectralResponse,
}

impl DegradationModel {
    pub fn new(scale: usize, kernel: Kernel, response: SpectralResponse) -> Result<Self> {
        if scale == 0 {
            return Err(Error::param("scale", "must be positive"));
        }
        Ok(Self {
            scale,
            kernel,
            response,
        })
    }

    /// Scale 4, 9x9 Gaussian with the default width, uniform response.
    pub fn standard(bands: usize) -> Result<Self> {
        Self::new(
            4,
            gaussian_kernel(9, default_sigma())?,
            SpectralResponse::uniform(bands)?,
        )
    }

    /// Identity spatial degradation (scale 1, delta kernel).
    pub fn identity(bands: usize) -> Result<Self> {
        Self::new(1, Kernel::delta(), SpectralResponse::uniform(bands)?)
    }

    pub fn check_image(&self, x: &Tensor3) -> Result<()> {
        let (h, w, s) = x.shape();
        if h % self.scale != 0 || w % self.scale != 0 {
            return Err(Error::shape(format!(
                "image {h}x{w} is not divisible by scale {}",
                self.scale
            )));
        }
        if s != self.response.len() {
            return Err(Error::shape(format!(
                "response has {} entries for a {s}-band image",
                self.response.len()
            )));
        }
        check_kernel_fits(x, &self.kernel)
    }

    /// `D(B(x))`.
    pub fn spatial(&self, x: &Tensor3) -> Result<Tensor3> {
        downsample(&blur(x, &self.kernel)?, self.scale)
    }

    /// `B^T(D^T(y))`.
    pub fn spatial_adjoint(&self, y: &Tensor3) -> Result<Tensor3> {
        blur_adjoint(&downsample_adjoint(y, self.scale)?, &self.kernel)
    }
}

/// Synthesizes `(lrms, pan)` from a reference HRMS image.
pub fn wald_generate(x: &Tensor3, model: &DegradationModel) -> Result<(Tensor3, Tensor3)> {
    model.check_image(x)?;
    let lrms = model.spatial(x)?;
    let pan = pan_project(x, &model.response)?;
    Ok((lrms, pan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(seed: u64, h: usize, w: usize, s: usize) -> Tensor3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor3::from_fn(h, w, s, |_, _, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn default_sigma_value() {
        assert!((default_sigma() - 1.698_643_600_4).abs() < 1e-9);
    }

    #[test]
    fn gaussian_kernel_properties() {
        let k = gaussian_kernel(9, default_sigma()).unwrap();
        let sum: f64 = k.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        let center = k.get(4, 4);
        assert!(k.weights().iter().all(|&w| w <= center));
        for u in 0..9 {
            for v in 0..9 {
                // 90 degree rotation (u, v) -> (v, 8 - u)
                assert!((k.get(u, v) - k.get(v, 8 - u)).abs() < 1e-15);
            }
        }
        assert_eq!(gaussian_kernel(1, 0.3).unwrap().weights(), &[1.0]);
        assert!(gaussian_kernel(4, 1.0).is_err());
        assert!(gaussian_kernel(5, 0.0).is_err());
    }

    #[test]
    fn blur_trivial_cases() {
        let x = random_tensor(1, 6, 6, 2);
        assert_eq!(blur(&x, &Kernel::delta()).unwrap(), x);
        assert_eq!(blur_adjoint(&x, &Kernel::delta()).unwrap(), x);
        let c = Tensor3::filled(8, 8, 2, 0.37);
        let k = gaussian_kernel(5, 1.2).unwrap();
        let out = blur(&c, &k).unwrap();
        assert!(out.as_slice().iter().all(|v| (v - 0.37).abs() < 1e-14));
        assert!(blur(&Tensor3::zeros(4, 8, 1), &gaussian_kernel(5, 1.0).unwrap()).is_err());
    }

    #[test]
    fn blur_matches_brute_force() {
        let x = random_tensor(2, 8, 8, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut w: Vec<f64> = (0..9).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        let k = Kernel::new(3, w).unwrap();
        let out = blur(&x, &k).unwrap();
        for i in 0..8i64 {
            for j in 0..8i64 {
                for b in 0..2 {
                    let mut acc = 0.0;
                    for u in 0..3i64 {
                        for v in 0..3i64 {
                            let si = (i + 1 - u).rem_euclid(8) as usize;
                            let sj = (j + 1 - v).rem_euclid(8) as usize;
                            acc += k.get(u as usize, v as usize) * x.get(si, sj, b);
                        }
                    }
                    assert!((acc - out.get(i as usize, j as usize, b)).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn blur_adjoint_identity_and_symmetry() {
        let a = random_tensor(4, 8, 8, 3);
        let b = random_tensor(5, 8, 8, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut w: Vec<f64> = (0..25).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        let k = Kernel::new(5, w).unwrap();
        let lhs = blur(&a, &k).unwrap().dot(&b).unwrap();
        let rhs = a.dot(&blur_adjoint(&b, &k).unwrap()).unwrap();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));

        let g = gaussian_kernel(5, 1.0).unwrap();
        let d = blur(&a, &g).unwrap().sub(&blur_adjoint(&a, &g).unwrap()).unwrap();
        assert!(d.norm() < 1e-14);
    }

    #[test]
    fn downsample_ramp() {
        let x = Tensor3::from_fn(4, 4, 1, |i, j, _| (i * 4 + j) as f64);
        let y = downsample(&x, 2).unwrap();
        assert_eq!(y.as_slice(), &[0.0, 2.0, 8.0, 10.0]);
        assert_eq!(downsample(&x, 1).unwrap(), x);
        assert!(downsample(&x, 3).is_err());
        let big = Tensor3::zeros(256, 256, 1);
        assert_eq!(downsample(&big, 4).unwrap().shape(), (64, 64, 1));
    }

    #[test]
    fn downsample_adjoint_properties() {
        let x = random_tensor(7, 8, 8, 2);
        let y = random_tensor(8, 4, 4, 2);
        let lhs = downsample(&x, 2).unwrap().dot(&y).unwrap();
        let rhs = x.dot(&downsample_adjoint(&y, 2).unwrap()).unwrap();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
        let up = downsample_adjoint(&y, 2).unwrap();
        assert_eq!(up.as_slice().iter().filter(|v| **v != 0.0).count(), 4 * 4 * 2);
        assert_eq!(downsample_adjoint(&y, 1).unwrap(), y);
    }

    #[test]
    fn pan_projection() {
        let x = random_tensor(9, 4, 4, 3);
        let r = SpectralResponse::new(vec![0.2, 0.3, 0.5]).unwrap();
        let p = pan_project(&x, &r).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want: f64 = x.pixel(i, j).iter().zip(r.weights()).map(|(a, b)| a * b).sum();
                assert_eq!(p.get(i, j, 0), want);
            }
        }
        let one = random_tensor(10, 3, 3, 1);
        let r1 = SpectralResponse::new(vec![1.0]).unwrap();
        assert_eq!(pan_project(&one, &r1).unwrap(), one);
        let c = Tensor3::filled(4, 4, 5, 0.25);
        let pc = pan_project(&c, &SpectralResponse::uniform(5).unwrap()).unwrap();
        assert!(pc.as_slice().iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn response_validation() {
        assert!(SpectralResponse::new(vec![0.5, 0.6]).is_err());
        assert!(SpectralResponse::new(vec![-0.5, 1.5]).is_err());
        let r = SpectralResponse::uniform_range(128, 16, 81).unwrap();
        assert_eq!(r.weights().iter().filter(|w| **w > 0.0).count(), 66);
        assert!(SpectralResponse::uniform_range(8, 3, 9).is_err());
    }

    #[test]
    fn wald_shapes_and_identity() {
        let x = random_tensor(11, 256, 256, 8);
        let model = DegradationModel::standard(8).unwrap();
        let (l, p) = wald_generate(&x, &model).unwrap();
        assert_eq!(l.shape(), (64, 64, 8));
        assert_eq!(p.shape(), (256, 256, 1));
        let manual = downsample(&blur(&x, &model.kernel).unwrap(), 4).unwrap();
        assert_eq!(l, manual);

        let small = random_tensor(12, 8, 8, 3);
        let id = DegradationModel::identity(3).unwrap();
        assert_eq!(wald_generate(&small, &id).unwrap().0, small);
    }

    #[test]
    fn zero_order_hold_replicates() {
        let y = Tensor3::from_fn(2, 2, 1, |i, j, _| (i * 2 + j) as f64);
        let up = zero_order_hold(&y, 2);
        assert_eq!(up.get(1, 1, 0), 0.0);
        assert_eq!(up.get(3, 2, 0), 3.0);
        assert_eq!(downsample(&up, 2).unwrap(), y);
    }
}
