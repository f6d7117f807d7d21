//! Coordinate conventions, identity grids, bilinear warping, and field
//! resizing.
//!
//! Coordinates are normalized to `[-1, 1]` with the align-corners
//! convention: pixel index `i` of an `n`-wide axis sits at
//! `-1 + 2*i/(n-1)`. Flow fields store absolute source sampling positions
//! in these units, which makes them resolution independent: resizing a
//! flow never rescales its values.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::tensor::{resize_plane, ImageTensor};

/// A normalized 2D coordinate. `(-1, -1)` is the top-left pixel center,
/// `(1, 1)` the bottom-right. Values outside `[-1, 1]` address out-of-frame
/// content and are legal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCoord {
    pub x: f64,
    pub y: f64,
}

impl GridCoord {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Normalized coordinate of lattice index `i` on an `n`-wide axis.
///
/// This is the one canonical formula for `-1 + 2i/(n-1)`; the sampler's
/// pixel mapping recognizes these exact bit patterns, so lattice
/// coordinates round-trip to integer pixel positions exactly.
#[inline]
pub fn axis_lattice_coord(i: usize, n: usize) -> f64 {
    debug_assert!(n >= 2);
    i as f64 / (0.5 * (n - 1) as f64) - 1.0
}

/// Map a normalized coordinate to a pixel position on an `n`-wide axis.
///
/// `x = -1` maps to `0`, `x = 1` maps to `n - 1`. When `x` is bit-identical
/// to a lattice coordinate produced by [`axis_lattice_coord`], the result is
/// snapped to that exact integer, so sampling an identity grid reads lattice
/// values without interpolation.
#[inline]
pub(crate) fn norm_to_px(x: f64, n: usize) -> f64 {
    if n < 2 {
        // Degenerate axis: the single pixel is the whole axis.
        return 0.0;
    }
    let c2 = 0.5 * (n - 1) as f64;
    let px = (x + 1.0) * c2;
    let r = libm::round(px);
    if r >= 0.0 && r <= (n - 1) as f64 && x == axis_lattice_coord(r as usize, n) {
        return r;
    }
    px
}

/// Dense grid of absolute sampling coordinates, stored as an x plane
/// followed by a y plane (row-major each).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FlowField {
    pub fn from_planes(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != 2 * height * width {
            return Err(CoreError::invalid_argument(
                "flow data length does not match resolution",
            ));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn constant(height: usize, width: usize, coord: GridCoord) -> Self {
        let n = height * width;
        let mut data = vec![coord.x; 2 * n];
        data[n..].fill(coord.y);
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn x_plane(&self) -> &[f64] {
        &self.data[..self.height * self.width]
    }

    pub fn y_plane(&self) -> &[f64] {
        &self.data[self.height * self.width..]
    }

    pub fn x_plane_mut(&mut self) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[..n]
    }

    pub fn y_plane_mut(&mut self) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[n..]
    }

    #[inline]
    pub fn coord(&self, y: usize, x: usize) -> GridCoord {
        let idx = y * self.width + x;
        GridCoord::new(self.data[idx], self.data[self.height * self.width + idx])
    }

    #[inline]
    pub fn set_coord(&mut self, y: usize, x: usize, c: GridCoord) {
        let n = self.height * self.width;
        let idx = y * self.width + x;
        self.data[idx] = c.x;
        self.data[n + idx] = c.y;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// View the coordinate planes as a 2-channel tensor (x plane, y plane).
    pub fn to_tensor(&self) -> ImageTensor {
        ImageTensor::from_planes(self.height, self.width, 2, self.data.clone())
            .expect("flow planes are a valid tensor")
    }

    /// Build a flow from a 2-channel tensor (x plane, y plane).
    pub fn from_tensor(t: &ImageTensor) -> Result<Self> {
        if t.channels() != 2 {
            return Err(CoreError::invalid_argument(
                "flow tensor must have exactly 2 channels",
            ));
        }
        Self::from_planes(t.height(), t.width(), t.data().to_vec())
    }
}

/// The identity flow: every lattice point maps to itself.
pub fn identity_grid(height: usize, width: usize) -> Result<FlowField> {
    if height < 2 || width < 2 {
        return Err(CoreError::invalid_argument(
            "identity grid requires at least 2 pixels per axis",
        ));
    }
    let n = height * width;
    let mut data = vec![0.0; 2 * n];
    let (xs, ys) = data.split_at_mut(n);
    for i in 0..height {
        let yc = axis_lattice_coord(i, height);
        for j in 0..width {
            xs[i * width + j] = axis_lattice_coord(j, width);
            ys[i * width + j] = yc;
        }
    }
    Ok(FlowField {
        height,
        width,
        data,
    })
}

/// Per-axis sampling taps: two indices with value weights `w` and weight
/// derivatives `d` (in pixel units).
///
/// Interior positions use standard bilinear weights over the enclosing
/// cell. Outside the lattice the value fades linearly to zero across a
/// half-pixel fringe and is exactly zero beyond it. Cell membership at
/// boundaries is right/down-continuous, which fixes the one-sided
/// derivative convention.
#[derive(Debug, Clone, Copy)]
struct AxisTap {
    i0: usize,
    i1: usize,
    w0: f64,
    w1: f64,
    d0: f64,
    d1: f64,
}

const ZERO_TAP: AxisTap = AxisTap {
    i0: 0,
    i1: 0,
    w0: 0.0,
    w1: 0.0,
    d0: 0.0,
    d1: 0.0,
};

#[inline]
fn axis_taps(px: f64, n: usize) -> AxisTap {
    let last = (n - 1) as f64;
    if px < -0.5 {
        ZERO_TAP
    } else if px < 0.0 {
        // Left fringe: fade from 0 at px = -0.5 to f[0] at px = 0.
        AxisTap {
            i0: 0,
            i1: 0,
            w0: 2.0 * px + 1.0,
            w1: 0.0,
            d0: 2.0,
            d1: 0.0,
        }
    } else if px < last {
        let i0 = px as usize;
        let fx = px - i0 as f64;
        AxisTap {
            i0,
            i1: i0 + 1,
            w0: 1.0 - fx,
            w1: fx,
            d0: -1.0,
            d1: 1.0,
        }
    } else if px < last + 0.5 {
        // Right fringe: fade from f[n-1] at px = n-1 to 0 at px = n-0.5.
        AxisTap {
            i0: n - 1,
            i1: n - 1,
            w0: 1.0 - 2.0 * (px - last),
            w1: 0.0,
            d0: -2.0,
            d1: 0.0,
        }
    } else {
        ZERO_TAP
    }
}

fn flow_taps(flow: &FlowField, field_h: usize, field_w: usize) -> Vec<(AxisTap, AxisTap)> {
    let xs = flow.x_plane();
    let ys = flow.y_plane();
    let mut taps = Vec::with_capacity(xs.len());
    for (&x, &y) in xs.iter().zip(ys) {
        let tx = axis_taps(norm_to_px(x, field_w), field_w);
        let ty = axis_taps(norm_to_px(y, field_h), field_h);
        taps.push((tx, ty));
    }
    taps
}

/// Warp `field` by sampling it at the flow's absolute coordinates.
///
/// The output has the flow's resolution and the field's channel count.
/// Sampling an identity grid reproduces the field exactly.
pub fn bilinear_sample(field: &ImageTensor, flow: &FlowField) -> Result<ImageTensor> {
    if !flow.is_finite() {
        return Err(CoreError::invalid_argument(
            "flow contains non-finite coordinates",
        ));
    }
    let (fh, fw) = field.resolution();
    let taps = flow_taps(flow, fh, fw);
    let mut out = ImageTensor::zeros(flow.height(), flow.width(), field.channels());
    for c in 0..field.channels() {
        let plane = field.plane(c);
        let dst = out.plane_mut(c);
        for (o, (tx, ty)) in dst.iter_mut().zip(&taps) {
            let r0 = ty.i0 * fw;
            let r1 = ty.i1 * fw;
            let top = tx.w0 * plane[r0 + tx.i0] + tx.w1 * plane[r0 + tx.i1];
            let bot = tx.w0 * plane[r1 + tx.i0] + tx.w1 * plane[r1 + tx.i1];
            *o = ty.w0 * top + ty.w1 * bot;
        }
    }
    Ok(out)
}

/// Directional derivative of [`bilinear_sample`] with respect to the flow,
/// in the direction `flow_tangent` (normalized units).
///
/// At cell boundaries the derivative of the cell entered by nudging the
/// coordinate by +0 is used (right/down-continuous convention).
pub fn bilinear_sample_jvp(
    field: &ImageTensor,
    flow: &FlowField,
    flow_tangent: &FlowField,
) -> Result<ImageTensor> {
    if !flow.is_finite() {
        return Err(CoreError::invalid_argument(
            "flow contains non-finite coordinates",
        ));
    }
    if flow_tangent.resolution() != flow.resolution() {
        return Err(CoreError::invalid_argument(
            "flow tangent resolution must match the flow",
        ));
    }
    let (fh, fw) = field.resolution();
    let taps = flow_taps(flow, fh, fw);
    // Chain rule from normalized units to pixel units.
    let sx = 0.5 * (fw - 1) as f64;
    let sy = 0.5 * (fh - 1) as f64;
    let txs = flow_tangent.x_plane();
    let tys = flow_tangent.y_plane();
    let mut out = ImageTensor::zeros(flow.height(), flow.width(), field.channels());
    for c in 0..field.channels() {
        let plane = field.plane(c);
        let dst = out.plane_mut(c);
        for (i, (o, (tx, ty))) in dst.iter_mut().zip(&taps).enumerate() {
            let r0 = ty.i0 * fw;
            let r1 = ty.i1 * fw;
            let f00 = plane[r0 + tx.i0];
            let f01 = plane[r0 + tx.i1];
            let f10 = plane[r1 + tx.i0];
            let f11 = plane[r1 + tx.i1];
            let dpx = ty.w0 * (tx.d0 * f00 + tx.d1 * f01) + ty.w1 * (tx.d0 * f10 + tx.d1 * f11);
            let dpy = ty.d0 * (tx.w0 * f00 + tx.w1 * f01) + ty.d1 * (tx.w0 * f10 + tx.w1 * f11);
            *o = dpx * (txs[i] * sx) + dpy * (tys[i] * sy);
        }
    }
    Ok(out)
}

/// Bilinear align-corners resize of a flow field.
///
/// Coordinates are normalized, so no value rescaling happens; a same-size
/// resize is an exact copy.
pub fn resize_field(flow: &FlowField, target: (usize, usize)) -> Result<FlowField> {
    let (h_out, w_out) = target;
    let (h_in, w_in) = flow.resolution();
    if h_in < 2 || w_in < 2 || h_out < 2 || w_out < 2 {
        return Err(CoreError::invalid_argument(
            "resize requires resolutions of at least 2 per axis",
        ));
    }
    let mut data = vec![0.0; 2 * h_out * w_out];
    {
        let (xs, ys) = data.split_at_mut(h_out * w_out);
        resize_plane(flow.x_plane(), (h_in, w_in), (h_out, w_out), xs);
        resize_plane(flow.y_plane(), (h_in, w_in), (h_out, w_out), ys);
    }
    Ok(FlowField {
        height: h_out,
        width: w_out,
        data,
    })
}
