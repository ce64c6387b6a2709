//! Low-rank spectral factorization `X = A x_3 E`.
//!
//! The base tensor `A` is a handful of bands picked from the image and `E`
//! maps it back to the full spectrum. `E` is estimated once from the
//! low-resolution observation and then held fixed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor3::{lstsq_rows, mode3_mul, unfold3, Mat, Tensor3};

/// Which bands form the base tensor. Indices are 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandSelection {
    total_bands: usize,
    indices: Vec<usize>,
}

impl BandSelection {
    /// Equal-interval selection `i_j = ceil(S / (s + 1)) * j` for `j = 1..=s`.
    pub fn equal_interval(total_bands: usize, rank: usize) -> Result<Self> {
        if rank == 0 {
            return Err(Error::param("rank", "must be at least 1"));
        }
        let step = total_bands.div_ceil(rank + 1);
        let indices: Vec<usize> = (1..=rank).map(|j| step * j).collect();
        if let Some(j) = indices.iter().position(|&i| i > total_bands) {
            return Err(Error::param(
                "rank",
                format!(
                    "index i_{} = {} exceeds {total_bands} bands; pass explicit indices instead",
                    j + 1,
                    indices[j]
                ),
            ));
        }
        Ok(Self { total_bands, indices })
    }

    /// Explicit 1-based indices in nondecreasing order. Repeated bands are
    /// accepted; they make the base rank deficient and the coefficient fit
    /// falls back to the minimum-norm solution.
    pub fn from_indices(total_bands: usize, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::param("indices", "empty band selection"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i == 0 || i > total_bands) {
            return Err(Error::param(
                "indices",
                format!("band {bad} is outside 1..={total_bands}"),
            ));
        }
        if indices.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::param("indices", "must be sorted in nondecreasing order"));
        }
        Ok(Self { total_bands, indices })
    }

    /// Every band in order (`s = S`).
    pub fn all(total_bands: usize) -> Self {
        Self {
            total_bands,
            indices: (1..=total_bands).collect(),
        }
    }

    pub fn total_bands(&self) -> usize {
        self.total_bands
    }

    pub fn rank(&self) -> usize {
        self.indices.len()
    }

    /// 1-based indices.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// The same selection in 0-based form.
    pub fn zero_based(&self) -> Vec<usize> {
        self.indices.iter().map(|i| i - 1).collect()
    }

    /// Whether any band appears more than once.
    pub fn has_duplicates(&self) -> bool {
        self.indices.windows(2).any(|w| w[0] == w[1])
    }
}

/// Picks the selected bands of `y` as an `h x w x s` tensor.
pub fn extract_base(y: &Tensor3, sel: &BandSelection) -> Result<Tensor3> {
    if sel.total_bands != y.bands() {
        return Err(Error::shape(format!(
            "selection is for {} bands, image has {}",
            sel.total_bands,
            y.bands()
        )));
    }
    let idx = sel.zero_based();
    let mut out = Tensor3::zeros(y.height(), y.width(), idx.len());
    let s = idx.len();
    let dst = out.as_mut_slice();
    for (p, spectrum) in y.as_slice().chunks_exact(y.bands()).enumerate() {
        for (k, &b) in idx.iter().enumerate() {
            dst[p * s + k] = spectrum[b];
        }
    }
    Ok(out)
}

/// Least-squares coefficient matrix `E` (`S x s`) with `y ~ extract_base(y) x_3 E`.
pub fn estimate_coefficients(y: &Tensor3, sel: &BandSelection) -> Result<Mat> {
    let base = extract_base(y, sel)?;
    lstsq_rows(&unfold3(y), &unfold3(&base))
}

/// `a x_3 e`.
pub fn reconstruct(a: &Tensor3, e: &Mat) -> Result<Tensor3> {
    mode3_mul(a, e)
}

/// Residual `||y - extract_base(y) x_3 E||_F` of the coefficient fit.
pub fn fit_residual(y: &Tensor3, sel: &BandSelection, e: &Mat) -> Result<f64> {
    let base = extract_base(y, sel)?;
    Ok(reconstruct(&base, e)?.sub(y)?.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_interval_reference_tuples() {
        let cases = [
            (128, (32, 64, 96)),
            (8, (2, 4, 6)),
            (102, (26, 52, 78)),
            (144, (36, 72, 108)),
        ];
        for (s, (a, b, c)) in cases {
            let sel = BandSelection::equal_interval(s, 3).unwrap();
            assert_eq!(sel.indices(), &[a, b, c], "S = {s}");
        }
    }

    #[test]
    fn equal_interval_overflow_is_an_error() {
        // S = 5, s = 3: step ceil(5 / 4) = 2, so i_3 = 6 > 5
        let err = BandSelection::equal_interval(5, 3).unwrap_err();
        assert!(err.to_string().contains("i_3"), "{err}");
        assert!(BandSelection::equal_interval(8, 0).is_err());
    }

    #[test]
    fn explicit_selection_validation() {
        assert!(BandSelection::from_indices(8, vec![0, 2]).is_err());
        assert!(BandSelection::from_indices(8, vec![3, 9]).is_err());
        assert!(BandSelection::from_indices(8, vec![4, 2]).is_err());
        let dup = BandSelection::from_indices(8, vec![2, 2, 5]).unwrap();
        assert!(dup.has_duplicates());
        assert_eq!(dup.zero_based(), vec![1, 1, 4]);
    }

    #[test]
    fn extract_by_hand() {
        let y = Tensor3::from_vec(1, 1, 4, vec![10.0, 20.0, 30.0, 40.0]).unwrap();
        let sel = BandSelection::from_indices(4, vec![2, 4]).unwrap();
        assert_eq!(extract_base(&y, &sel).unwrap().as_slice(), &[20.0, 40.0]);
        assert_eq!(extract_base(&y, &BandSelection::all(4)).unwrap(), y);
        let base = extract_base(&y, &sel).unwrap();
        let again = extract_base(&base, &BandSelection::all(2)).unwrap();
        assert_eq!(again, base);
    }

    fn exact_rank(seed: u64, h: usize, w: usize, big_s: usize, sel: &BandSelection) -> (Tensor3, Mat) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Tensor3::from_fn(h, w, sel.rank(), |_, _, _| rng.random_range(0.0..1.0));
        let mut e = Mat::from_fn(big_s, sel.rank(), |_, _| rng.random_range(-1.0..1.0));
        for (k, &b) in sel.zero_based().iter().enumerate() {
            for c in 0..sel.rank() {
                e.set(b, c, if c == k { 1.0 } else { 0.0 });
            }
        }
        (mode3_mul(&a, &e).unwrap(), e)
    }

    #[test]
    fn estimate_and_reconstruct_exact_rank() {
        let sel = BandSelection::equal_interval(8, 3).unwrap();
        let (y, e_true) = exact_rank(1, 6, 7, 8, &sel);
        let e = estimate_coefficients(&y, &sel).unwrap();
        assert!(e.sub(&e_true).unwrap().frobenius_norm() < 1e-8);
        let rec = reconstruct(&extract_base(&y, &sel).unwrap(), &e).unwrap();
        assert!(rec.sub(&y).unwrap().norm() / y.norm() < 1e-8);
        // selected band 2 (index 4, 0-based 3) reproduces itself
        let row = e.row(3);
        assert!((row[1] - 1.0).abs() < 1e-10 && row[0].abs() < 1e-10 && row[2].abs() < 1e-10);
    }

    #[test]
    fn full_selection_gives_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = Tensor3::from_fn(5, 5, 4, |_, _, _| rng.random_range(0.0..1.0));
        let e = estimate_coefficients(&y, &BandSelection::all(4)).unwrap();
        assert!(e.sub(&Mat::identity(4)).unwrap().frobenius_norm() < 1e-10);
    }

    #[test]
    fn reconstruct_trivial() {
        let a = Tensor3::zeros(3, 3, 2);
        let e = Mat::from_fn(5, 2, |r, c| (r + c) as f64);
        assert_eq!(reconstruct(&a, &e).unwrap().norm(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = Tensor3::from_fn(3, 3, 2, |_, _, _| rng.random_range(0.0..1.0));
        assert_eq!(reconstruct(&b, &Mat::identity(2)).unwrap(), b);
    }

    #[test]
    fn residual_nonincreasing_for_nested_selections() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = Tensor3::from_fn(6, 6, 8, |_, _, _| rng.random_range(0.0..1.0));
        let nested = [vec![2], vec![2, 5], vec![2, 5, 7], vec![1, 2, 5, 7]];
        let mut last = f64::INFINITY;
        for idx in nested {
            let sel = BandSelection::from_indices(8, idx).unwrap();
            let e = estimate_coefficients(&y, &sel).unwrap();
            let r = fit_residual(&y, &sel, &e).unwrap();
            assert!(r <= last + 1e-12, "{r} > {last}");
            last = r;
        }
    }

    #[test]
    fn duplicated_band_does_not_fail() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = Tensor3::from_fn(4, 4, 8, |_, _, _| rng.random_range(0.0..1.0));
        let sel = BandSelection::from_indices(8, vec![3, 3, 6]).unwrap();
        let e = estimate_coefficients(&y, &sel).unwrap();
        // minimum norm splits the duplicated column evenly
        for r in 0..8 {
            assert!((e.get(r, 0) - e.get(r, 1)).abs() < 1e-9);
        }
    }
}
