//! Full-reference quality indices between a reference and a restored image.
//!
//! PSNR and ERGAS are normalized by the reference and are not symmetric in
//! their arguments; MSE, SAM, SSIM and SCC are.

mod q2n;
mod ssim;

pub use q2n::q2n;
pub use ssim::ssim;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor3::Tensor3;

/// Bands whose reference mean is below this are skipped by [`ergas`].
pub const ERGAS_MEAN_FLOOR: f64 = 1e-12;

/// Mean of squared differences over all entries.
pub fn mse(reference: &Tensor3, out: &Tensor3) -> Result<f64> {
    reference.check_same_shape(out, "metric inputs")?;
    let sum: f64 = reference
        .as_slice()
        .iter()
        .zip(out.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / reference.len() as f64)
}

fn band_mse(reference: &Tensor3, out: &Tensor3) -> Vec<f64> {
    let s = reference.bands();
    let mut acc = vec![0.0; s];
    for (pr, po) in reference.as_slice().chunks_exact(s).zip(out.as_slice().chunks_exact(s)) {
        for b in 0..s {
            acc[b] += (pr[b] - po[b]).powi(2);
        }
    }
    let n = reference.pixels() as f64;
    acc.iter().map(|v| v / n).collect()
}

/// `10 log10(peak^2 / mse_b)` averaged over bands; `+inf` when any band is exact.
pub fn psnr(reference: &Tensor3, out: &Tensor3, peak: f64) -> Result<f64> {
    reference.check_same_shape(out, "metric inputs")?;
    if peak.is_nan() || peak <= 0.0 {
        return Err(Error::param("peak", format!("must be positive, got {peak}")));
    }
    let per_band = band_mse(reference, out);
    let total: f64 = per_band
        .iter()
        .map(|&m| {
            if m == 0.0 {
                f64::INFINITY
            } else {
                10.0 * (peak * peak / m).log10()
            }
        })
        .sum();
    Ok(total / per_band.len() as f64)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Mean spectral angle in degrees; pixels where either spectrum is zero are skipped.
pub fn sam(reference: &Tensor3, out: &Tensor3) -> Result<f64> {
    reference.check_same_shape(out, "metric inputs")?;
    let s = reference.bands();
    let (mut acc, mut count) = (0.0, 0usize);
    for (pr, po) in reference.as_slice().chunks_exact(s).zip(out.as_slice().chunks_exact(s)) {
        let (nr, no) = (norm(pr), norm(po));
        if nr == 0.0 || no == 0.0 {
            continue;
        }
        // angle between the unit spectra as 2 atan2(|u - v|, |u + v|)
        let (mut diff, mut sum) = (0.0, 0.0);
        for b in 0..s {
            let (u, v) = (pr[b] / nr, po[b] / no);
            diff += (u - v) * (u - v);
            sum += (u + v) * (u + v);
        }
        acc += 2.0 * diff.sqrt().atan2(sum.sqrt());
        count += 1;
    }
    if count == 0 {
        log::warn!("sam: every pixel has a zero spectrum");
        return Ok(0.0);
    }
    Ok((acc / count as f64).to_degrees())
}

/// `100 / scale * sqrt(mean_b (rmse_b / mean_b(ref))^2)`; NaN if every band is skipped.
pub fn ergas(reference: &Tensor3, out: &Tensor3, scale: usize) -> Result<f64> {
    reference.check_same_shape(out, "metric inputs")?;
    if scale == 0 {
        return Err(Error::param("scale", "must be positive"));
    }
    let s = reference.bands();
    let n = reference.pixels() as f64;
    let mut means = vec![0.0; s];
    for px in reference.as_slice().chunks_exact(s) {
        for b in 0..s {
            means[b] += px[b] / n;
        }
    }
    let per_band = band_mse(reference, out);
    let (mut acc, mut used) = (0.0, 0usize);
    for b in 0..s {
        if means[b].abs() < ERGAS_MEAN_FLOOR {
            log::warn!("ergas: skipping band {b} with near-zero reference mean");
            continue;
        }
        acc += per_band[b] / (means[b] * means[b]);
        used += 1;
    }
    if used == 0 {
        return Ok(f64::NAN);
    }
    Ok(100.0 / scale as f64 * (acc / used as f64).sqrt())
}

/// Circular 3x3 Laplacian high-pass (`8` at the center, `-1` around it) of one band.
fn laplacian(x: &Tensor3, b: usize) -> Vec<f64> {
    let (h, w, _) = x.shape();
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let mut v = 9.0 * x.get(i, j, b);
            for di in [h - 1, 0, 1] {
                for dj in [w - 1, 0, 1] {
                    v -= x.get((i + di) % h, (j + dj) % w, b);
                }
            }
            out[i * w + j] = v;
        }
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Band-averaged correlation of Laplacian high-pass images. Bands that are
/// constant after filtering are skipped; NaN if all are.
pub fn scc(reference: &Tensor3, out: &Tensor3) -> Result<f64> {
    reference.check_same_shape(out, "metric inputs")?;
    let (mut acc, mut used) = (0.0, 0usize);
    for b in 0..reference.bands() {
        match pearson(&laplacian(reference, b), &laplacian(out, b)) {
            Some(c) => {
                acc += c;
                used += 1;
            }
            None => log::warn!("scc: skipping band {b}, flat after high-pass"),
        }
    }
    if used == 0 {
        return Ok(f64::NAN);
    }
    Ok(acc / used as f64)
}

/// Parameters shared by the indices in a [`MetricReport`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    /// Dynamic range used by PSNR and SSIM.
    pub peak: f64,
    /// Resolution ratio used by ERGAS.
    pub scale: usize,
    /// Block side used by Q2n.
    pub q2n_block: usize,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            peak: 1.0,
            scale: 4,
            q2n_block: 32,
        }
    }
}

/// All indices for one reference/output pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub q2n: f64,
    pub sam: f64,
    pub ergas: f64,
    pub scc: f64,
    pub mse: f64,
}

impl MetricReport {
    /// Column order of [`MetricReport::csv_row`].
    pub const COLUMNS: [&'static str; 7] = ["psnr", "ssim", "q2n", "sam", "ergas", "scc", "mse"];

    pub fn compute(reference: &Tensor3, out: &Tensor3, opts: &MetricOptions) -> Result<Self> {
        Ok(Self {
            psnr: psnr(reference, out, opts.peak)?,
            ssim: ssim(reference, out, opts.peak)?,
            q2n: q2n(reference, out, opts.q2n_block)?,
            sam: sam(reference, out)?,
            ergas: ergas(reference, out, opts.scale)?,
            scc: scc(reference, out)?,
            mse: mse(reference, out)?,
        })
    }

    pub fn csv_row(&self) -> [f64; 7] {
        [self.psnr, self.ssim, self.q2n, self.sam, self.ergas, self.scc, self.mse]
    }
}
