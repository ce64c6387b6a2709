use crate::degrade::{blur, gaussian_kernel};
use crate::error::{Error, Result};
use crate::tensor3::Tensor3;

const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5) and circular
/// boundary, averaged over all positions and bands. Images must be at least
/// 11 pixels on each side. The value lies in `[-1, 1]`.
pub fn ssim(reference: &Tensor3, out: &Tensor3, peak: f64) -> Result<f64> {
    reference.check_same_shape(out, "metric inputs")?;
    if peak.is_nan() || peak <= 0.0 {
        return Err(Error::param("peak", format!("must be positive, got {peak}")));
    }
    let window = gaussian_kernel(WINDOW, WINDOW_SIGMA)?;
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);

    let mu_x = blur(reference, &window)?;
    let mu_y = blur(out, &window)?;
    let xx = blur(&reference.zip_map(reference, |a, b| a * b)?, &window)?;
    let yy = blur(&out.zip_map(out, |a, b| a * b)?, &window)?;
    let xy = blur(&reference.zip_map(out, |a, b| a * b)?, &window)?;

    let mut acc = 0.0;
    for k in 0..reference.len() {
        let (mx, my) = (mu_x.as_slice()[k], mu_y.as_slice()[k]);
        let vx = xx.as_slice()[k] - mx * mx;
        let vy = yy.as_slice()[k] - my * my;
        let cxy = xy.as_slice()[k] - mx * my;
        acc += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    Ok(acc / reference.len() as f64)
}
