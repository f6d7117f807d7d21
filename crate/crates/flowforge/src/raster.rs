//! Raw float rasters: a one-line JSON header followed by channel-major
//! little-endian 32-bit floats.
//!
//! Header: `{"resolution":[h,w],"channels":c,"dtype":"f32le"}` plus a
//! newline. Used for composition masks and occlusion logits.

use std::fs;
use std::path::Path;

use flowforge_core::ImageTensor;
use serde::{Deserialize, Serialize};

use crate::error::{FlowForgeError, Result};

#[derive(Serialize, Deserialize)]
struct RasterHeader {
    resolution: [usize; 2],
    channels: usize,
    dtype: String,
}

pub fn encode_raster(t: &ImageTensor) -> Vec<u8> {
    let header = RasterHeader {
        resolution: [t.height(), t.width()],
        channels: t.channels(),
        dtype: "f32le".into(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    for v in t.data() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_raster(bytes: &[u8], path: &Path) -> Result<ImageTensor> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| FlowForgeError::format(path, bytes.len(), "missing header line"))?;
    let header: RasterHeader = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| FlowForgeError::format(path, 0, format!("bad header: {e}")))?;
    if header.dtype != "f32le" {
        return Err(FlowForgeError::format(path, 0, "unsupported dtype"));
    }
    let [h, w] = header.resolution;
    let n = h
        .checked_mul(w)
        .and_then(|v| v.checked_mul(header.channels))
        .filter(|&v| v > 0 && v <= (1 << 30))
        .ok_or_else(|| FlowForgeError::format(path, 0, "implausible dimensions"))?;
    let payload = &bytes[newline + 1..];
    if payload.len() != 4 * n {
        return Err(FlowForgeError::format(
            path,
            newline + 1 + payload.len().min(4 * n),
            format!("payload has {} bytes, expected {}", payload.len(), 4 * n),
        ));
    }
    let mut data = Vec::with_capacity(n);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
        if !v.is_finite() {
            return Err(FlowForgeError::format(
                path,
                newline + 1 + 4 * i,
                "non-finite raster value",
            ));
        }
        data.push(v);
    }
    ImageTensor::from_planes(h, w, header.channels, data).map_err(Into::into)
}

pub fn write_raster(t: &ImageTensor, path: &Path) -> Result<()> {
    fs::write(path, encode_raster(t)).map_err(|e| FlowForgeError::io(path, e))
}

pub fn read_raster(path: &Path) -> Result<ImageTensor> {
    let bytes = fs::read(path).map_err(|e| FlowForgeError::io(path, e))?;
    decode_raster(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let mut t = ImageTensor::zeros(3, 4, 2);
        for (i, v) in t.data_mut().iter_mut().enumerate() {
            *v = i as f64 * 0.125 - 1.0;
        }
        let back = decode_raster(&encode_raster(&t), Path::new("r")).unwrap();
        assert_eq!(back.resolution(), (3, 4));
        assert_eq!(back.channels(), 2);
        for (a, b) in t.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_short_payload() {
        let t = ImageTensor::zeros(2, 2, 1);
        let mut bytes = encode_raster(&t);
        bytes.pop();
        assert!(decode_raster(&bytes, Path::new("r")).is_err());
    }
}
