//! Single-band 8-bit grayscale export (binary PGM).

use std::fs;
use std::path::Path;

use plrdiff_core::Tensor3;
use serde::{Deserialize, Serialize};

use crate::array_file::sidecar_path;
use crate::error::{CliError, Result};

/// Stretch bounds written next to the image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stretch {
    pub band: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Encodes band `band` (0-based) min-max stretched to `0..=255`; a constant
/// band maps to mid gray.
pub fn encode_band(x: &Tensor3, band: usize) -> Result<(Vec<u8>, Stretch)> {
    if band >= x.bands() {
        return Err(CliError::config(format!(
            "band {band} out of range for a {}-band image",
            x.bands()
        )));
    }
    let plane = x.band(band);
    let (lo, hi) = plane
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), &v| (l.min(v), u.max(v)));
    let mut out = format!("P5\n{} {}\n255\n", x.width(), x.height()).into_bytes();
    out.extend(plane.iter().map(|&v| {
        if hi > lo {
            ((v - lo) / (hi - lo) * 255.0).round() as u8
        } else {
            128
        }
    }));
    Ok((out, Stretch { band, lo, hi }))
}

/// Writes the PGM and a `<path>.json` sidecar with the stretch bounds.
pub fn export_band_image(x: &Tensor3, band: usize, path: &Path) -> Result<Stretch> {
    let (bytes, stretch) = encode_band(x, band)?;
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&stretch).expect("stretch serializes");
    fs::write(&side, json).map_err(|e| CliError::io(&side, e))?;
    Ok(stretch)
}
