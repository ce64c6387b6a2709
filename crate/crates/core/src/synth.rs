//! Synthetic scenes for tests, benchmarks and demos.
//!
//! Textures are sums of low-frequency periodic waves, so they are smooth and
//! wrap around cleanly under circular blur. Scenes are exactly low rank:
//! `abundances x_3 spectra` with smooth nonnegative spectra.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor3::{mode3_mul, Mat, Tensor3};

/// Smooth periodic texture with values in `[0.1, 0.9]`; bands share a common
/// component so they are correlated like natural image channels.
pub fn texture(h: usize, w: usize, bands: usize, seed: u64) -> Tensor3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wave_field = |rng: &mut ChaCha8Rng| {
        let waves: Vec<(f64, f64, f64, f64)> = (0..6)
            .map(|_| {
                let fx = rng.random_range(0..=5) as f64;
                let fy = rng.random_range(0..=5) as f64;
                let (fx, fy) = if fx == 0.0 && fy == 0.0 { (1.0, 0.0) } else { (fx, fy) };
                let amp = 1.0 / (fx * fx + fy * fy).sqrt();
                (fx, fy, amp, rng.random_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        let mut plane = vec![0.0; h * w];
        for i in 0..h {
            for j in 0..w {
                plane[i * w + j] = waves
                    .iter()
                    .map(|&(fx, fy, amp, ph)| {
                        let arg = std::f64::consts::TAU * (fx * i as f64 / h as f64 + fy * j as f64 / w as f64);
                        amp * (arg + ph).cos()
                    })
                    .sum();
            }
        }
        plane
    };
    let shared = wave_field(&mut rng);
    let planes: Vec<Vec<f64>> = (0..bands)
        .map(|_| {
            let own = wave_field(&mut rng);
            let mix = rng.random_range(0.5..0.8);
            let p: Vec<f64> = shared
                .iter()
                .zip(&own)
                .map(|(s, o)| mix * s + (1.0 - mix) * o)
                .collect();
            let (lo, hi) = p
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), &v| (l.min(v), u.max(v)));
            let span = (hi - lo).max(1e-12);
            p.iter().map(|v| 0.1 + 0.8 * (v - lo) / span).collect()
        })
        .collect();
    Tensor3::from_bands(h, w, &planes).expect("consistent planes")
}

/// `bands x rank` matrix of smooth nonnegative spectra (Gaussian bumps over
/// the band axis with centers spread across the range).
pub fn smooth_spectra(bands: usize, rank: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: Vec<(f64, f64, f64)> = (0..rank)
        .map(|k| {
            let center = (k as f64 + 0.5) / rank as f64 + rng.random_range(-0.1..0.1);
            let width = rng.random_range(0.25..0.5);
            let floor = rng.random_range(0.05..0.2);
            (center, width, floor)
        })
        .collect();
    Mat::from_fn(bands, rank, |b, k| {
        let x = if bands > 1 { b as f64 / (bands - 1) as f64 } else { 0.5 };
        let (c, wd, fl) = params[k];
        fl + (1.0 - fl) * (-(x - c).powi(2) / (2.0 * wd * wd)).exp()
    })
}

/// A rank-`rank` multispectral scene scaled into `[0, 1]`.
#[derive(Clone, Debug)]
pub struct LowRankScene {
    pub hrms: Tensor3,
    pub abundances: Tensor3,
    pub spectra: Mat,
}

pub fn low_rank_scene(h: usize, w: usize, bands: usize, rank: usize, seed: u64) -> LowRankScene {
    let abundances = texture(h, w, rank, seed);
    let mut spectra = smooth_spectra(bands, rank, seed.wrapping_add(0x9e37_79b9));
    let raw = mode3_mul(&abundances, &spectra).expect("shapes agree");
    let (_, hi) = raw.min_max();
    let k = 1.0 / hi;
    spectra = Mat::from_fn(bands, rank, |r, c| spectra.get(r, c) * k);
    let hrms = mode3_mul(&abundances, &spectra).expect("shapes agree");
    LowRankScene {
        hrms,
        abundances,
        spectra,
    }
}
