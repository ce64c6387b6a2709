//! Raw array container: a little-endian payload plus a JSON sidecar.
//!
//! `image.arr` holds the samples; `image.arr.json` describes them:
//!
//! ```json
//! {"dtype": "f64", "shape": [64, 64, 8], "order": "row-major-pixel-band-last"}
//! ```
//!
//! An optional `"scale_range": [lo, hi]` maps values to `(v - lo) / (hi - lo)`
//! on load.

use std::fs;
use std::path::{Path, PathBuf};

use plrdiff_core::Tensor3;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const ORDER: &str = "row-major-pixel-band-last";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub dtype: Dtype,
    pub shape: [usize; 3],
    pub order: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_range: Option<[f64; 2]>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `x` as `dtype` together with its sidecar.
pub fn save_array(path: &Path, x: &Tensor3, dtype: Dtype) -> Result<()> {
    let (h, w, s) = x.shape();
    let sidecar = Sidecar {
        dtype,
        shape: [h, w, s],
        order: ORDER.to_string(),
        scale_range: None,
    };
    let mut bytes = Vec::with_capacity(x.len() * dtype.size());
    for &v in x.as_slice() {
        match dtype {
            Dtype::F32 => bytes.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => bytes.extend_from_slice(&v.to_le_bytes()),
        }
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    fs::write(&side, json).map_err(|e| CliError::io(&side, e))
}

pub fn load_sidecar(path: &Path) -> Result<Sidecar> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| CliError::io(&side, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| CliError::io(&side, e))?;
    if sidecar.order != ORDER {
        return Err(CliError::io(
            &side,
            format!("field `order`: expected `{ORDER}`, got `{}`", sidecar.order),
        ));
    }
    if sidecar.shape.contains(&0) {
        return Err(CliError::io(&side, "field `shape`: dimensions must be positive"));
    }
    if let Some([lo, hi]) = sidecar.scale_range {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(CliError::io(&side, "field `scale_range`: need finite lo < hi"));
        }
    }
    Ok(sidecar)
}

/// Reads an array, widening `f32` payloads and applying `scale_range`.
pub fn load_array(path: &Path) -> Result<Tensor3> {
    let sidecar = load_sidecar(path)?;
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let [h, w, s] = sidecar.shape;
    let expected = h * w * s * sidecar.dtype.size();
    if bytes.len() != expected {
        return Err(CliError::io(
            path,
            format!(
                "payload: expected {expected} bytes for shape {h}x{w}x{s}, found {}",
                bytes.len()
            ),
        ));
    }
    let mut data: Vec<f64> = match sidecar.dtype {
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
        Dtype::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    };
    if let Some(k) = data.iter().position(|v| !v.is_finite()) {
        return Err(CliError::io(path, format!("payload: non-finite value at index {k}")));
    }
    if let Some([lo, hi]) = sidecar.scale_range {
        data.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
    }
    Tensor3::from_vec(h, w, s, data).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tensor3 {
        Tensor3::from_fn(8, 8, 3, |i, j, b| ((i * 31 + j * 7 + b) as f64).sin() / 3.0)
    }

    #[test]
    fn f64_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.arr");
        let x = sample();
        save_array(&p, &x, Dtype::F64).unwrap();
        assert_eq!(load_array(&p).unwrap(), x);
    }

    #[test]
    fn f32_data_widens_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.arr");
        let x = sample().map(|v| v as f32 as f64);
        save_array(&p, &x, Dtype::F32).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 8 * 8 * 3 * 4);
        assert_eq!(load_array(&p).unwrap(), x);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.arr");
        save_array(&p, &sample(), Dtype::F64).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
        let err = load_array(&p).unwrap_err();
        assert!(err.to_string().contains("payload"), "{err}");
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn missing_sidecar_and_bad_fields() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.arr");
        save_array(&p, &sample(), Dtype::F64).unwrap();
        fs::remove_file(sidecar_path(&p)).unwrap();
        assert!(load_array(&p).is_err());

        fs::write(
            sidecar_path(&p),
            r#"{"dtype":"f64","shape":[8,8,3],"order":"band-first"}"#,
        )
        .unwrap();
        assert!(load_array(&p).unwrap_err().to_string().contains("order"));
    }

    #[test]
    fn non_finite_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.arr");
        save_array(&p, &sample(), Dtype::F64).unwrap();
        let mut bytes = fs::read(&p).unwrap();
        bytes[16..24].copy_from_slice(&f64::NAN.to_le_bytes());
        fs::write(&p, bytes).unwrap();
        assert!(load_array(&p).unwrap_err().to_string().contains("index 2"));
    }

    #[test]
    fn scale_range_normalizes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.arr");
        let x = Tensor3::from_vec(1, 2, 1, vec![100.0, 300.0]).unwrap();
        save_array(&p, &x, Dtype::F64).unwrap();
        fs::write(
            sidecar_path(&p),
            format!(r#"{{"dtype":"f64","shape":[1,2,1],"order":"{ORDER}","scale_range":[100.0,500.0]}}"#),
        )
        .unwrap();
        assert_eq!(load_array(&p).unwrap().as_slice(), &[0.0, 0.5]);
    }
}
