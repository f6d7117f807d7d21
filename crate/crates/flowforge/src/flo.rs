//! Middlebury-compatible binary flow files.
//!
//! Layout: the 4-byte magic `PIEH`, little-endian 32-bit width and height,
//! then row-major little-endian 32-bit float `(u, v)` pairs in pixel
//! displacement units. Internally flows are absolute normalized sampling
//! coordinates; the conversion (subtract the identity grid, scale by
//! `(n-1)/2`) happens at this boundary. Degenerate single-pixel axes carry
//! zero displacement by convention.

use std::fs;
use std::path::Path;

use flowforge_core::grid::axis_lattice_coord;
use flowforge_core::{FlowField, GridCoord};

use crate::error::{FlowForgeError, Result};

const MAGIC: [u8; 4] = *b"PIEH";

fn axis_coord(i: usize, n: usize) -> f64 {
    if n >= 2 {
        axis_lattice_coord(i, n)
    } else {
        0.0
    }
}

/// Encode a flow field into the binary layout.
pub fn encode_flow(flow: &FlowField) -> Vec<u8> {
    let (h, w) = flow.resolution();
    let mut out = Vec::with_capacity(12 + 8 * h * w);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    let sx = 0.5 * (w.saturating_sub(1)) as f64;
    let sy = 0.5 * (h.saturating_sub(1)) as f64;
    for y in 0..h {
        for x in 0..w {
            let c = flow.coord(y, x);
            let u = (c.x - axis_coord(x, w)) * sx;
            let v = (c.y - axis_coord(y, h)) * sy;
            out.extend_from_slice(&(u as f32).to_le_bytes());
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Decode the binary layout back into a flow field.
pub fn decode_flow(bytes: &[u8], path: &Path) -> Result<FlowField> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(FlowForgeError::format(path, 0, "bad magic, expected PIEH"));
    }
    if bytes.len() < 12 {
        return Err(FlowForgeError::format(
            path,
            bytes.len(),
            "truncated header",
        ));
    }
    let w = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if h == 0 || w == 0 || h * w > (1 << 30) {
        return Err(FlowForgeError::format(path, 4, "implausible dimensions"));
    }
    let need = 12 + 8 * h * w;
    if bytes.len() != need {
        return Err(FlowForgeError::format(
            path,
            bytes.len().min(need),
            format!("payload has {} bytes, expected {need}", bytes.len()),
        ));
    }
    let sx = if w >= 2 { 2.0 / (w - 1) as f64 } else { 0.0 };
    let sy = if h >= 2 { 2.0 / (h - 1) as f64 } else { 0.0 };
    let mut flow = FlowField::constant(h, w, GridCoord::new(0.0, 0.0));
    for y in 0..h {
        for x in 0..w {
            let off = 12 + 8 * (y * w + x);
            let u = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
            let v = f32::from_le_bytes(bytes[off + 4..off + 8].try_into().unwrap()) as f64;
            if !u.is_finite() || !v.is_finite() {
                return Err(FlowForgeError::format(path, off, "non-finite flow value"));
            }
            // normalized displacement = pixel displacement * 2/(n-1)
            flow.set_coord(
                y,
                x,
                GridCoord::new(axis_coord(x, w) + u * sx, axis_coord(y, h) + v * sy),
            );
        }
    }
    Ok(flow)
}

/// Write a flow field to disk.
pub fn write_flow(flow: &FlowField, path: &Path) -> Result<()> {
    fs::write(path, encode_flow(flow)).map_err(|e| FlowForgeError::io(path, e))
}

/// Read a flow field from disk.
pub fn read_flow(path: &Path) -> Result<FlowField> {
    let bytes = fs::read(path).map_err(|e| FlowForgeError::io(path, e))?;
    decode_flow(&bytes, path)
}
