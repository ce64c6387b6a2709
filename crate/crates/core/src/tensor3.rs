//! Dense third-order tensors and mode-3 (spectral) linear algebra.
//!
//! A [`Tensor3`] is addressed as `(row, col, band)` and stored pixel-major with
//! the band index fastest: the flat offset of `(i, j, b)` is `(i * W + j) * S + b`.
//! The mode-3 unfolding is the `S x (H*W)` matrix whose column `i * W + j` is the
//! spectrum of pixel `(i, j)`. This pixel order is part of the on-disk format.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense `H x W x S` tensor of finite `f64` values.
#[derive(Clone, PartialEq)]
pub struct Tensor3 {
    height: usize,
    width: usize,
    bands: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor3")
            .field("height", &self.height)
            .field("width", &self.width)
            .field("bands", &self.bands)
            .field("norm", &self.norm())
            .finish()
    }
}

impl Tensor3 {
    pub fn zeros(height: usize, width: usize, bands: usize) -> Self {
        Self {
            height,
            width,
            bands,
            data: vec![0.0; height * width * bands],
        }
    }

    pub fn filled(height: usize, width: usize, bands: usize, value: f64) -> Self {
        Self {
            height,
            width,
            bands,
            data: vec![value; height * width * bands],
        }
    }

    /// Wraps pixel-major, band-last data. Fails on a length mismatch or any
    /// non-finite entry.
    pub fn from_vec(height: usize, width: usize, bands: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::shape(format!(
                "tensor dimensions must be positive, got {height}x{width}x{bands}"
            )));
        }
        if data.len() != height * width * bands {
            return Err(Error::shape(format!(
                "data length {} does not match {height}x{width}x{bands}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::param("data", format!("non-finite value at flat index {pos}")));
        }
        Ok(Self {
            height,
            width,
            bands,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, bands: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width * bands);
        for i in 0..height {
            for j in 0..width {
                for b in 0..bands {
                    data.push(f(i, j, b));
                }
            }
        }
        Self {
            height,
            width,
            bands,
            data,
        }
    }

    /// Stacks single-band planes (each `H*W`, row-major) into a tensor.
    pub fn from_bands(height: usize, width: usize, planes: &[Vec<f64>]) -> Result<Self> {
        let bands = planes.len();
        if planes.iter().any(|p| p.len() != height * width) {
            return Err(Error::shape("band plane length does not match H*W"));
        }
        let mut data = vec![0.0; height * width * bands];
        for (b, plane) in planes.iter().enumerate() {
            for (p, v) in plane.iter().enumerate() {
                data[p * bands + b] = *v;
            }
        }
        Self::from_vec(height, width, bands, data)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn bands(&self) -> usize {
        self.bands
    }

    /// `(H, W, S)`.
    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.bands)
    }

    #[inline]
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, b: usize) -> usize {
        debug_assert!(i < self.height && j < self.width && b < self.bands);
        (i * self.width + j) * self.bands + b
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, b: usize) -> f64 {
        self.data[self.offset(i, j, b)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, b: usize, v: f64) {
        let o = self.offset(i, j, b);
        self.data[o] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the raw storage. Callers must keep every entry finite.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Spectrum of pixel `(i, j)`.
    #[inline]
    pub fn pixel(&self, i: usize, j: usize) -> &[f64] {
        let o = (i * self.width + j) * self.bands;
        &self.data[o..o + self.bands]
    }

    /// Copies band `b` out as a row-major `H*W` plane.
    pub fn band(&self, b: usize) -> Vec<f64> {
        self.data.iter().skip(b).step_by(self.bands).copied().collect()
    }

    pub fn same_shape(&self, other: &Tensor3) -> bool {
        self.shape() == other.shape()
    }

    pub(crate) fn check_same_shape(&self, other: &Tensor3, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor3 {
        Tensor3 {
            height: self.height,
            width: self.width,
            bands: self.bands,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Element-wise `f(self, other)`; shapes must match.
    pub fn zip_map(&self, other: &Tensor3, f: impl Fn(f64, f64) -> f64) -> Result<Tensor3> {
        self.check_same_shape(other, "element-wise operation")?;
        Ok(Tensor3 {
            height: self.height,
            width: self.width,
            bands: self.bands,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Tensor3) -> Result<Tensor3> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, k: f64) -> Tensor3 {
        self.map(|v| v * k)
    }

    /// `self += k * other`.
    pub fn axpy(&mut self, k: f64, other: &Tensor3) -> Result<()> {
        self.check_same_shape(other, "axpy")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
        Ok(())
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Tensor3) -> Result<f64> {
        self.check_same_shape(other, "inner product")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Dense row-major real matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("ragged matrix rows"));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        if self.cols != other.rows {
            return Err(Error::shape(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Mat) -> Result<Mat> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::shape("matrix subtraction shape mismatch"));
        }
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

/// Mode-3 unfolding: `S x (H*W)`, column `i * W + j` holds pixel `(i, j)`.
pub fn unfold3(x: &Tensor3) -> Mat {
    let (s, n) = (x.bands, x.pixels());
    let mut data = vec![0.0; s * n];
    for p in 0..n {
        for b in 0..s {
            data[b * n + p] = x.data[p * s + b];
        }
    }
    Mat { rows: s, cols: n, data }
}

/// Inverse of [`unfold3`].
pub fn fold3(m: &Mat, height: usize, width: usize) -> Result<Tensor3> {
    if m.cols != height * width {
        return Err(Error::shape(format!(
            "cannot fold {}x{} into {height}x{width} pixels",
            m.rows, m.cols
        )));
    }
    let (s, n) = (m.rows, m.cols);
    let mut data = vec![0.0; s * n];
    for b in 0..s {
        for p in 0..n {
            data[p * s + b] = m.data[b * n + p];
        }
    }
    Tensor3::from_vec(height, width, s, data)
}

/// Mode-3 product `a x_3 e`: every spectrum `v` becomes `e * v`.
pub fn mode3_mul(a: &Tensor3, e: &Mat) -> Result<Tensor3> {
    if e.cols != a.bands {
        return Err(Error::shape(format!(
            "mode-3 product needs {} columns, matrix is {}x{}",
            a.bands, e.rows, e.cols
        )));
    }
    let (s_in, s_out) = (a.bands, e.rows);
    let mut out = Tensor3::zeros(a.height, a.width, s_out);
    for (src, dst) in a.data.chunks_exact(s_in).zip(out.data.chunks_exact_mut(s_out)) {
        for (r, d) in dst.iter_mut().enumerate() {
            *d = e.row(r).iter().zip(src).map(|(w, v)| w * v).sum();
        }
    }
    Ok(out)
}

/// Adjoint of `a -> a x_3 e`, i.e. `r x_3 e^T`.
pub fn mode3_mul_adjoint(r: &Tensor3, e: &Mat) -> Result<Tensor3> {
    if e.rows != r.bands {
        return Err(Error::shape(format!(
            "mode-3 adjoint needs {} rows, matrix is {}x{}",
            r.bands, e.rows, e.cols
        )));
    }
    let (s_in, s_out) = (r.bands, e.cols);
    let mut out = Tensor3::zeros(r.height, r.width, s_out);
    for (src, dst) in r.data.chunks_exact(s_in).zip(out.data.chunks_exact_mut(s_out)) {
        for (k, &v) in src.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            for (d, w) in dst.iter_mut().zip(e.row(k)) {
                *d += w * v;
            }
        }
    }
    Ok(out)
}

/// Solves `min_E ||y3 - E * a3||_F` for `E` (`S x s`), returning the
/// minimum-norm minimizer when `a3` is rank deficient.
///
/// The problem is transposed to `a3^T E^T = y3^T` and solved through a thin SVD
/// of the tall matrix `a3^T`; singular values below `max(rows, cols) * eps * sigma_max`
/// are treated as zero.
pub fn lstsq_rows(y3: &Mat, a3: &Mat) -> Result<Mat> {
    if y3.cols != a3.cols {
        return Err(Error::shape(format!(
            "least squares column mismatch: {} vs {}",
            y3.cols, a3.cols
        )));
    }
    let (big_s, small_s) = (y3.rows, a3.rows);
    let a_t = a3.to_nalgebra().transpose();
    let y_t = y3.to_nalgebra().transpose();
    let svd = a_t.svd(true, true);
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if sigma_max == 0.0 {
        return Ok(Mat::zeros(big_s, small_s));
    }
    let tol = sigma_max * (a3.cols.max(small_s) as f64) * f64::EPSILON;
    let e_t = svd
        .solve(&y_t, tol)
        .map_err(|msg| Error::param("a3", msg.to_string()))?;
    // e_t is s x S
    Ok(Mat::from_fn(big_s, small_s, |r, c| e_t[(c, r)]))
}
