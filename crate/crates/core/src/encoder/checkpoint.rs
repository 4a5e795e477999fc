//! `WASM1` checkpoint files.
//!
//! Layout: the five bytes `WASM1`; the encoder configuration as JSON text,
//! prefixed by its byte length as a little-endian `u32`; then every parameter
//! matrix in layout order (see [`EncoderParams`]) as row-major little-endian
//! `f64`. Matrix shapes follow from the configuration and are not stored.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::numerics::Matrix;
use crate::{Result, WasError};

use super::model::EncoderParams;
use super::EncoderConfig;

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"WASM1";

pub fn checkpoint_bytes(params: &EncoderParams) -> Result<Vec<u8>> {
    let config = serde_json::to_string(params.config())?;
    let len = u32::try_from(config.len())
        .map_err(|_| WasError::format("checkpoint", "configuration text too long"))?;
    let mut out = Vec::with_capacity(9 + config.len() + params.parameter_count() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    for m in params.values() {
        for &v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn params_from_bytes(bytes: &[u8]) -> Result<EncoderParams> {
    if bytes.len() < 9 || &bytes[..5] != CHECKPOINT_MAGIC {
        return Err(WasError::format("checkpoint", "missing WASM1 header"));
    }
    let len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let config_end = 9 + len;
    let text = bytes
        .get(9..config_end)
        .ok_or_else(|| WasError::format("checkpoint", "truncated configuration"))?;
    let text = std::str::from_utf8(text).map_err(|e| WasError::format("checkpoint", e.to_string()))?;
    let config: EncoderConfig = serde_json::from_str(text)?;
    config.validate()?;

    let shapes = EncoderParams::shapes(&config);
    let expected: usize = shapes.iter().map(|(r, c)| r * c).sum();
    let body = &bytes[config_end..];
    if body.len() != expected * 8 {
        return Err(WasError::format(
            "checkpoint",
            format!("{} parameter bytes, expected {}", body.len(), expected * 8),
        ));
    }
    let mut reals = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let values = shapes
        .iter()
        .map(|&(r, c)| Matrix::from_vec(r, c, reals.by_ref().take(r * c).collect()))
        .collect::<Result<Vec<_>>>()?;
    EncoderParams::from_values(&config, values)
}

pub fn save_checkpoint(path: &Path, params: &EncoderParams) -> Result<()> {
    let bytes = checkpoint_bytes(params)?;
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<EncoderParams> {
    params_from_bytes(&fs::read(path)?)
}
