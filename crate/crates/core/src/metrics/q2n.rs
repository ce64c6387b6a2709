//! Hypercomplex universal image quality index.
//!
//! Each pixel's spectrum, zero-padded to `2^n` components, is a Cayley-Dickson
//! hypercomplex number. Per block, with `sigma_xy = E[x conj(y)] - mu_x conj(mu_y)`:
//!
//! `Q = 4 |sigma_xy| |mu_x| |mu_y| / ((sigma_x^2 + sigma_y^2)(|mu_x|^2 + |mu_y|^2))`
//!
//! and the index is the block average. Above eight components the algebra loses
//! the multiplicative norm, so block values are clamped to `[0, 1]`.

use crate::error::{Error, Result};
use crate::tensor3::Tensor3;

/// `out = conj(x)`.
fn conj(x: &[f64], out: &mut [f64]) {
    out[0] = x[0];
    for k in 1..x.len() {
        out[k] = -x[k];
    }
}

/// Cayley-Dickson product `(a, b)(c, d) = (ac - conj(d) b, d a + b conj(c))`.
fn mul(x: &[f64], y: &[f64], out: &mut [f64]) {
    let n = x.len();
    if n == 1 {
        out[0] = x[0] * y[0];
        return;
    }
    let h = n / 2;
    let (a, b) = x.split_at(h);
    let (c, d) = y.split_at(h);
    let mut t1 = vec![0.0; h];
    let mut t2 = vec![0.0; h];
    let mut cj = vec![0.0; h];

    mul(a, c, &mut t1);
    conj(d, &mut cj);
    mul(&cj, b, &mut t2);
    for k in 0..h {
        out[k] = t1[k] - t2[k];
    }
    mul(d, a, &mut t1);
    conj(c, &mut cj);
    mul(b, &cj, &mut t2);
    for k in 0..h {
        out[h + k] = t1[k] + t2[k];
    }
}

fn modulus(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Quality of one block; `x` and `y` hold `count` padded pixels each.
fn block_quality(x: &[f64], y: &[f64], dim: usize, count: usize) -> f64 {
    let n = count as f64;
    let mut mx = vec![0.0; dim];
    let mut my = vec![0.0; dim];
    for (px, py) in x.chunks_exact(dim).zip(y.chunks_exact(dim)) {
        for k in 0..dim {
            mx[k] += px[k] / n;
            my[k] += py[k] / n;
        }
    }
    let (mut vx, mut vy) = (0.0, 0.0);
    let mut exy = vec![0.0; dim];
    let mut yc = vec![0.0; dim];
    let mut prod = vec![0.0; dim];
    for (px, py) in x.chunks_exact(dim).zip(y.chunks_exact(dim)) {
        vx += px.iter().zip(&mx).map(|(a, m)| (a - m) * (a - m)).sum::<f64>() / n;
        vy += py.iter().zip(&my).map(|(a, m)| (a - m) * (a - m)).sum::<f64>() / n;
        conj(py, &mut yc);
        mul(px, &yc, &mut prod);
        for k in 0..dim {
            exy[k] += prod[k] / n;
        }
    }
    conj(&my, &mut yc);
    mul(&mx, &yc, &mut prod);
    let cov: Vec<f64> = exy.iter().zip(&prod).map(|(e, p)| e - p).collect();

    let (amx, amy) = (modulus(&mx), modulus(&my));
    let lum_den = amx * amx + amy * amy;
    let var_den = vx + vy;
    let q = match (lum_den > 0.0, var_den > 0.0) {
        (false, false) => 1.0,
        (false, true) => 2.0 * modulus(&cov) / var_den,
        (true, false) => 2.0 * amx * amy / lum_den,
        (true, true) => 4.0 * modulus(&cov) * amx * amy / (var_den * lum_den),
    };
    q.clamp(0.0, 1.0)
}

/// Q2n over non-overlapping `block x block` tiles (partial tiles at the
/// right and bottom edges are ignored).
pub fn q2n(reference: &Tensor3, out: &Tensor3, block: usize) -> Result<f64> {
    reference.check_same_shape(out, "metric inputs")?;
    let (h, w, s) = reference.shape();
    if block < 2 || block > h || block > w {
        return Err(Error::param(
            "q2n_block",
            format!("block {block} must be at least 2 and fit in the {h}x{w} image"),
        ));
    }
    let dim = s.next_power_of_two();
    let count = block * block;
    let mut xb = vec![0.0; count * dim];
    let mut yb = vec![0.0; count * dim];
    let (mut acc, mut tiles) = (0.0, 0usize);
    for bi in 0..h / block {
        for bj in 0..w / block {
            for u in 0..block {
                for v in 0..block {
                    let p = u * block + v;
                    let (i, j) = (bi * block + u, bj * block + v);
                    xb[p * dim..p * dim + s].copy_from_slice(reference.pixel(i, j));
                    yb[p * dim..p * dim + s].copy_from_slice(out.pixel(i, j));
                }
            }
            acc += block_quality(&xb, &yb, dim, count);
            tiles += 1;
        }
    }
    Ok(acc / tiles as f64)
}
