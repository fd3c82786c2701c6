//! Binary float64 arrays with JSON sidecars.
//!
//! `name.bin` holds little-endian f64 values in row-major order;
//! `name.json` records the shape, a SHA-256 of the bytes, and free-form
//! metadata.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub shape: Vec<usize>,
    pub sha256: String,
    #[serde(default)]
    pub meta: serde_json::Value,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Write `data` with the given shape; returns the checksum.
pub fn write_f64_array(
    path: &Path,
    data: &[f64],
    shape: &[usize],
    meta: serde_json::Value,
) -> Result<String> {
    let expected: usize = shape.iter().product();
    if expected != data.len() {
        return Err(Error::InvalidArgument(format!(
            "shape {shape:?} does not match {} values",
            data.len()
        )));
    }
    let mut bytes = Vec::with_capacity(8 * data.len());
    for x in data {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    let sha = sha256_hex(&bytes);
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, &bytes)?;
    let side = Sidecar {
        format: "f64-le-row-major".into(),
        shape: shape.to_vec(),
        sha256: sha.clone(),
        meta,
    };
    fs::write(
        sidecar_path(path),
        serde_json::to_string_pretty(&side)? + "\n",
    )?;
    Ok(sha)
}

/// Read an array written by [`write_f64_array`], verifying its checksum.
pub fn read_f64_array(path: &Path) -> Result<(Vec<f64>, Sidecar)> {
    let side: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let bytes = fs::read(path)?;
    let sha = sha256_hex(&bytes);
    if sha != side.sha256 {
        return Err(Error::InvalidArgument(format!(
            "checksum mismatch for {}: sidecar {} but data {}",
            path.display(),
            side.sha256,
            sha
        )));
    }
    if bytes.len() % 8 != 0 || bytes.len() / 8 != side.shape.iter().product::<usize>() {
        return Err(Error::InvalidArgument(format!(
            "{} has the wrong length",
            path.display()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((data, side))
}
