//! Dense channel-major rasters.
//!
//! `ImageTensor` carries images (values in `[0, 1]`) and feature maps
//! (unbounded). Data is stored as channel planes, each plane row-major,
//! so per-channel kernels run over contiguous memory.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};

/// H×W×C raster stored as C contiguous row-major planes.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    /// Zero-filled tensor.
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        assert!(height > 0 && width > 0 && channels > 0, "empty tensor");
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    /// Constant-filled tensor.
    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Self {
        let mut t = Self::zeros(height, width, channels);
        t.data.fill(value);
        t
    }

    /// Wrap raw plane-major data (channel planes concatenated).
    pub fn from_planes(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(CoreError::invalid_argument(
                "tensor data length does not match dimensions",
            ));
        }
        if height == 0 || width == 0 || channels == 0 {
            return Err(CoreError::invalid_argument("tensor dimensions must be positive"));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f64) {
        self.data[(c * self.height + y) * self.width + x] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Concatenate tensors along the channel axis. All inputs must share a
    /// resolution.
    pub fn concat_channels(parts: &[&ImageTensor]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| CoreError::invalid_argument("concat of zero tensors"))?;
        let (h, w) = first.resolution();
        let mut data = Vec::new();
        let mut channels = 0;
        for t in parts {
            if t.resolution() != (h, w) {
                return Err(CoreError::invalid_argument(
                    "channel concat requires equal resolutions",
                ));
            }
            channels += t.channels;
            data.extend_from_slice(&t.data);
        }
        Ok(Self {
            height: h,
            width: w,
            channels,
            data,
        })
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&self, other: &ImageTensor) -> Result<ImageTensor> {
        if (self.height, self.width, self.channels) != (other.height, other.width, other.channels) {
            return Err(CoreError::invalid_argument("tensor shape mismatch in add"));
        }
        let mut out = self.clone();
        for (o, v) in out.data.iter_mut().zip(&other.data) {
            *o += v;
        }
        Ok(out)
    }
}

/// Per-axis bilinear taps for align-corners resizing.
///
/// Output index `j` samples the input at pixel position
/// `j * (n_in - 1) / (n_out - 1)`; endpoints land on endpoints exactly, and
/// a same-size resize degenerates to an exact copy.
fn axis_resize_taps(n_in: usize, n_out: usize) -> Vec<(usize, f64)> {
    debug_assert!(n_in >= 2 && n_out >= 2);
    let mut taps = Vec::with_capacity(n_out);
    for j in 0..n_out {
        let t = (j * (n_in - 1)) as f64 / (n_out - 1) as f64;
        let mut i0 = t as usize;
        if i0 > n_in - 2 {
            i0 = n_in - 2;
        }
        taps.push((i0, t - i0 as f64));
    }
    taps
}

/// Bilinear align-corners resize of one row-major plane.
pub(crate) fn resize_plane(
    src: &[f64],
    (h_in, w_in): (usize, usize),
    (h_out, w_out): (usize, usize),
    dst: &mut [f64],
) {
    let x_taps = axis_resize_taps(w_in, w_out);
    let y_taps = axis_resize_taps(h_in, h_out);
    // Product-weight form: exact at fx == 0 and fx == 1, so lattice-aligned
    // outputs are copies, not interpolations.
    for (y, &(i0, fy)) in y_taps.iter().enumerate() {
        let row0 = &src[i0 * w_in..(i0 + 1) * w_in];
        let row1 = &src[(i0 + 1) * w_in..(i0 + 2) * w_in];
        let (gy0, gy1) = (1.0 - fy, fy);
        let out = &mut dst[y * w_out..(y + 1) * w_out];
        for (x, &(j0, fx)) in x_taps.iter().enumerate() {
            let (gx0, gx1) = (1.0 - fx, fx);
            let top = gx0 * row0[j0] + gx1 * row0[j0 + 1];
            let bot = gx0 * row1[j0] + gx1 * row1[j0 + 1];
            out[x] = gy0 * top + gy1 * bot;
        }
    }
}

/// Bilinear align-corners resize applied per channel.
///
/// Both resolutions must be at least 2 on each axis. Resizing to the input
/// resolution is an exact copy.
pub fn resize_tensor(t: &ImageTensor, target: (usize, usize)) -> Result<ImageTensor> {
    let (h_out, w_out) = target;
    let (h_in, w_in) = t.resolution();
    if h_in < 2 || w_in < 2 || h_out < 2 || w_out < 2 {
        return Err(CoreError::invalid_argument(
            "resize requires resolutions of at least 2 per axis",
        ));
    }
    let mut out = ImageTensor::zeros(h_out, w_out, t.channels());
    for c in 0..t.channels() {
        resize_plane(t.plane(c), (h_in, w_in), (h_out, w_out), out.plane_mut(c));
    }
    Ok(out)
}
