//! Image loading and saving (PNG, binary PPM).
//!
//! Decoded pixels are mapped to `[0, 1]` by dividing by 255; quantization
//! back to bytes uses exact 0.5-offset rounding: `floor(v * 255 + 0.5)`.

use std::fs;
use std::path::Path;

use flowforge_core::ImageTensor;
use image::ImageReader;

use crate::error::{FlowForgeError, Result};

/// Load a 3-channel image in `[0, 1]`.
pub fn load_image(path: &Path) -> Result<ImageTensor> {
    let img = ImageReader::open(path)
        .map_err(|e| FlowForgeError::io(path, e))?
        .decode()
        .map_err(|e| FlowForgeError::Image {
            path: path.into(),
            message: e.to_string(),
        })?
        .into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = ImageTensor::zeros(h, w, 3);
    for y in 0..h {
        for x in 0..w {
            let px = img.get_pixel(x as u32, y as u32);
            for c in 0..3 {
                out.set(c, y, x, px.0[c] as f64 / 255.0);
            }
        }
    }
    Ok(out)
}

/// Quantize to bytes with exact 0.5-offset rounding.
pub fn quantize(t: &ImageTensor) -> Vec<u8> {
    let (h, w) = t.resolution();
    let mut bytes = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v = t.get(c, y, x).clamp(0.0, 1.0);
                bytes.push((v * 255.0 + 0.5).floor() as u8);
            }
        }
    }
    bytes
}

/// Save a 3-channel image as PNG or binary PPM (P6), chosen by extension.
pub fn save_image(t: &ImageTensor, path: &Path) -> Result<()> {
    if t.channels() != 3 {
        return Err(FlowForgeError::Image {
            path: path.into(),
            message: format!("expected a 3-channel image, got {}", t.channels()),
        });
    }
    let (h, w) = t.resolution();
    let bytes = quantize(t);
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("ppm") => {
            let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
            out.extend_from_slice(&bytes);
            fs::write(path, out).map_err(|e| FlowForgeError::io(path, e))
        }
        Some("png") => image::save_buffer(
            path,
            &bytes,
            w as u32,
            h as u32,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|e| FlowForgeError::Image {
            path: path.into(),
            message: e.to_string(),
        }),
        other => Err(FlowForgeError::Image {
            path: path.into(),
            message: format!("unsupported image extension {other:?} (use png or ppm)"),
        }),
    }
}
