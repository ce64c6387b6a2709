//! `TinyDenoiser` weight files.
//!
//! Layout (all integers `u32` little-endian):
//!
//! ```text
//! magic    8 bytes  "PLRDTNY1"
//! layers   u32
//! per layer: rank u32, then `rank` dimensions u32
//! payload  every layer's values in order, f32 little-endian
//! ```
//!
//! Layer order is the one reported by `TinyDenoiser::layers`.

use std::fs;
use std::path::Path;

use plrdiff_core::TinyDenoiser;

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 8] = b"PLRDTNY1";

pub fn encode(net: &TinyDenoiser) -> Vec<u8> {
    let layers = net.layers();
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for (_, shape, _) in &layers {
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for (_, _, data) in &layers {
        for &v in *data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> std::result::Result<&[u8], String> {
        let end = self.pos + n;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| format!("truncated while reading {what}"))?;
        self.pos = end;
        Ok(chunk)
    }

    fn u32(&mut self, what: &str) -> std::result::Result<usize, String> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<TinyDenoiser, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err("bad magic, not a TinyDenoiser weight file".into());
    }
    let count = r.u32("layer count")?;
    if count > 64 {
        return Err(format!("implausible layer count {count}"));
    }
    let mut shapes = Vec::with_capacity(count);
    for k in 0..count {
        let rank = r.u32("layer rank")?;
        if rank > 8 {
            return Err(format!("layer {k}: implausible rank {rank}"));
        }
        let dims = (0..rank)
            .map(|_| r.u32("layer dims"))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        shapes.push(dims);
    }
    let mut layers = Vec::with_capacity(count);
    for shape in shapes {
        let n: usize = shape.iter().product();
        let data = r
            .take(n * 4, "payload")?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        layers.push((shape, data));
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    TinyDenoiser::from_layers(layers).map_err(|e| e.to_string())
}

pub fn save_weights(path: &Path, net: &TinyDenoiser) -> Result<()> {
    fs::write(path, encode(net)).map_err(|e| CliError::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<TinyDenoiser> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes).map_err(|e| CliError::io(path, e))
}
