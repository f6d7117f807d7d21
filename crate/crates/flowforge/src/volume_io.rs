//! Correlation volume dumps: a one-line JSON header
//! (`{"h":..,"w":..,"levels":..,"dtype":"f32le"}`) followed by each pyramid
//! level as raw little-endian 32-bit floats in driving-major order.

use std::fs;
use std::path::Path;

use flowforge_core::correlation::CorrelationVolume;
use serde::{Deserialize, Serialize};

use crate::error::{FlowForgeError, Result};

#[derive(Serialize, Deserialize)]
struct VolumeHeader {
    h: usize,
    w: usize,
    levels: usize,
    dtype: String,
}

pub fn encode_volume(volume: &CorrelationVolume) -> Vec<u8> {
    let (h, w) = volume.resolution();
    let header = VolumeHeader {
        h,
        w,
        levels: volume.level_count(),
        dtype: "f32le".into(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    for l in 0..volume.level_count() {
        for v in volume.level(l) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_volume(bytes: &[u8], path: &Path) -> Result<CorrelationVolume> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| FlowForgeError::format(path, bytes.len(), "missing header line"))?;
    let header: VolumeHeader = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| FlowForgeError::format(path, 0, format!("bad header: {e}")))?;
    if header.dtype != "f32le" {
        return Err(FlowForgeError::format(path, 0, "unsupported dtype"));
    }
    let (h, w) = (header.h, header.w);
    if header.levels == 0 || h == 0 || w == 0 || h * w > (1 << 24) {
        return Err(FlowForgeError::format(path, 0, "implausible dimensions"));
    }
    let p = header.levels - 1;
    if p >= 32 || h % (1usize << p) != 0 || w % (1usize << p) != 0 {
        return Err(FlowForgeError::format(
            path,
            0,
            "dimensions not divisible by the pyramid factor",
        ));
    }
    let mut offset = newline + 1;
    let mut levels = Vec::with_capacity(header.levels);
    for l in 0..header.levels {
        let n = h * w * (h >> l) * (w >> l);
        let end = offset + 4 * n;
        if bytes.len() < end {
            return Err(FlowForgeError::format(
                path,
                bytes.len(),
                format!("truncated level {l}"),
            ));
        }
        let mut data = Vec::with_capacity(n);
        for (i, chunk) in bytes[offset..end].chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
            if !v.is_finite() {
                return Err(FlowForgeError::format(
                    path,
                    offset + 4 * i,
                    "non-finite volume value",
                ));
            }
            data.push(v);
        }
        levels.push(data);
        offset = end;
    }
    if offset != bytes.len() {
        return Err(FlowForgeError::format(
            path,
            offset,
            "trailing bytes after the last level",
        ));
    }
    CorrelationVolume::from_levels(h, w, levels).map_err(Into::into)
}

pub fn write_volume(volume: &CorrelationVolume, path: &Path) -> Result<()> {
    fs::write(path, encode_volume(volume)).map_err(|e| FlowForgeError::io(path, e))
}

pub fn read_volume(path: &Path) -> Result<CorrelationVolume> {
    let bytes = fs::read(path).map_err(|e| FlowForgeError::io(path, e))?;
    decode_volume(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use flowforge_core::correlation::build_volume;
    use flowforge_core::rng::SplitMix64;
    use flowforge_core::ImageTensor;

    #[test]
    fn roundtrip() {
        let mut rng = SplitMix64::new(3);
        let mut f = ImageTensor::zeros(4, 4, 3);
        let mut g = ImageTensor::zeros(4, 4, 3);
        for v in f.data_mut() {
            *v = rng.symmetric(1.0);
        }
        for v in g.data_mut() {
            *v = rng.symmetric(1.0);
        }
        let vol = build_volume(&f, &g, 1).unwrap();
        let back = decode_volume(&encode_volume(&vol), Path::new("v")).unwrap();
        assert_eq!(back.resolution(), (4, 4));
        assert_eq!(back.level_count(), 2);
        for l in 0..2 {
            for (a, b) in vol.level(l).iter().zip(back.level(l)) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rejects_truncated_level() {
        let vol = CorrelationVolume::from_levels(2, 2, vec![vec![0.5; 16]]).unwrap();
        let bytes = encode_volume(&vol);
        assert!(decode_volume(&bytes[..bytes.len() - 4], Path::new("v")).is_err());
    }

    #[test]
    fn golden_header_and_payload() {
        let base: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let vol = CorrelationVolume::from_levels(2, 2, vec![base]).unwrap();
        let bytes = encode_volume(&vol);
        let header = br#"{"h":2,"w":2,"levels":1,"dtype":"f32le"}"#;
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes[header.len()], b'\n');
        let payload = &bytes[header.len() + 1..];
        assert_eq!(payload.len(), 16 * 4);
        for (i, chunk) in payload.chunks_exact(4).enumerate() {
            assert_eq!(f32::from_le_bytes(chunk.try_into().unwrap()), i as f32);
        }
    }
}
