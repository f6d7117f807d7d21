//! The 4D structure correlation volume and its lookup.
//!
//! `base[zd, zs]` is the inner product of the driving structure feature at
//! `zd` with the source structure feature at `zs`: the correspondence score
//! of driving pixel `zd` against every source pixel. A pyramid mean-pools
//! the source dimensions so coarser levels widen the effective search
//! radius. The volume is immutable after construction and shared across all
//! refinement iterations.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::grid::{axis_lattice_coord, norm_to_px, FlowField, GridCoord};
use crate::prior::{render_heatmaps, KeypointSet};
use crate::tensor::{resize_tensor, ImageTensor};

/// Lattice coordinate with single-pixel axes collapsing to the center.
#[inline]
fn axis_coord_or_center(i: usize, n: usize) -> f64 {
    if n >= 2 {
        axis_lattice_coord(i, n)
    } else {
        0.0
    }
}

/// 4D correspondence tensor plus its mean-pooled pyramid.
///
/// Level `l` has driving dims `h x w` and source dims `h/2^l x w/2^l`,
/// stored driving-major (one contiguous source slice per driving pixel).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationVolume {
    h: usize,
    w: usize,
    levels: Vec<Vec<f64>>,
}

impl CorrelationVolume {
    /// Wrap raw level data, validating shapes.
    pub fn from_levels(h: usize, w: usize, levels: Vec<Vec<f64>>) -> Result<Self> {
        if levels.is_empty() {
            return Err(CoreError::invalid_argument("volume needs at least level 0"));
        }
        let p = levels.len() - 1;
        if h % (1 << p) != 0 || w % (1 << p) != 0 {
            return Err(CoreError::invalid_argument(format!(
                "volume dims ({h}, {w}) not divisible by 2^{p}"
            )));
        }
        for (l, data) in levels.iter().enumerate() {
            let expect = h * w * (h >> l) * (w >> l);
            if data.len() != expect {
                return Err(CoreError::invalid_argument(format!(
                    "level {l} has {} entries, expected {expect}",
                    data.len()
                )));
            }
        }
        Ok(Self { h, w, levels })
    }

    /// Driving-dimension (and level-0 source) resolution.
    pub fn resolution(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    /// Number of pyramid levels, including the base.
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, l: usize) -> &[f64] {
        &self.levels[l]
    }

    /// Level-0 data: `base[zd * h * w + zs]`.
    pub fn base(&self) -> &[f64] {
        &self.levels[0]
    }

    pub fn is_finite(&self) -> bool {
        self.levels
            .iter()
            .all(|l| l.iter().all(|v| v.is_finite()))
    }
}

/// Build the correlation volume from driving and source structure features:
/// `base[zd, zs] = sum_c drv[zd, c] * src[zs, c]`, then mean-pool the source
/// dims `pyramid_levels` times.
pub fn build_volume(
    drv_feat: &ImageTensor,
    src_feat: &ImageTensor,
    pyramid_levels: usize,
) -> Result<CorrelationVolume> {
    if drv_feat.resolution() != src_feat.resolution() {
        return Err(CoreError::invalid_argument(
            "structure features must share a resolution",
        ));
    }
    if drv_feat.channels() != src_feat.channels() {
        return Err(CoreError::invalid_argument(
            "structure features must share a channel count",
        ));
    }
    let (h, w) = drv_feat.resolution();
    if h % (1 << pyramid_levels) != 0 || w % (1 << pyramid_levels) != 0 {
        return Err(CoreError::invalid_argument(format!(
            "feature resolution ({h}, {w}) not divisible by 2^{pyramid_levels}"
        )));
    }
    let n = h * w;
    let c = drv_feat.channels();

    // Repack to pixel-major so each inner product runs over contiguous
    // memory.
    let pixel_major = |t: &ImageTensor| -> Vec<f64> {
        let mut pm = vec![0.0; n * c];
        for ch in 0..c {
            let plane = t.plane(ch);
            for i in 0..n {
                pm[i * c + ch] = plane[i];
            }
        }
        pm
    };
    let drv = pixel_major(drv_feat);
    let src = pixel_major(src_feat);

    let mut base = vec![0.0; n * n];
    for zd in 0..n {
        let dv = &drv[zd * c..(zd + 1) * c];
        let row = &mut base[zd * n..(zd + 1) * n];
        for (zs, out) in row.iter_mut().enumerate() {
            let sv = &src[zs * c..(zs + 1) * c];
            let mut acc = 0.0;
            for (a, b) in dv.iter().zip(sv) {
                acc += a * b;
            }
            *out = acc;
        }
    }

    let mut levels = vec![base];
    for l in 0..pyramid_levels {
        let (sh, sw) = (h >> l, w >> l);
        let (th, tw) = (sh / 2, sw / 2);
        let prev = &levels[l];
        let mut next = vec![0.0; n * th * tw];
        for zd in 0..n {
            let src_slice = &prev[zd * sh * sw..(zd + 1) * sh * sw];
            let dst_slice = &mut next[zd * th * tw..(zd + 1) * th * tw];
            for ty in 0..th {
                for tx in 0..tw {
                    let a = src_slice[(2 * ty) * sw + 2 * tx];
                    let b = src_slice[(2 * ty) * sw + 2 * tx + 1];
                    let cc = src_slice[(2 * ty + 1) * sw + 2 * tx];
                    let d = src_slice[(2 * ty + 1) * sw + 2 * tx + 1];
                    dst_slice[ty * tw + tx] = (a + b + cc + d) * 0.25;
                }
            }
        }
        levels.push(next);
    }

    Ok(CorrelationVolume { h, w, levels })
}

/// Structure encoders for both sides of the volume.
///
/// The driving encoder sees only the driving keypoint heatmaps; the source
/// encoder sees the quarter-resolution source image concatenated with its
/// heatmaps. Both must emit the same feature channel count.
pub trait StructureEncoder {
    /// Encode the source side from the downsampled image and its heatmaps.
    fn encode_source(&self, image_q: &ImageTensor, heatmaps: &ImageTensor) -> Result<ImageTensor>;
    /// Encode the driving side from heatmaps alone.
    fn encode_driving(&self, heatmaps: &ImageTensor) -> Result<ImageTensor>;
}

/// Test double: features are the heatmaps themselves (the source image is
/// ignored).
pub struct PassThroughStructureEncoder;

impl StructureEncoder for PassThroughStructureEncoder {
    fn encode_source(&self, _image_q: &ImageTensor, heatmaps: &ImageTensor) -> Result<ImageTensor> {
        Ok(heatmaps.clone())
    }

    fn encode_driving(&self, heatmaps: &ImageTensor) -> Result<ImageTensor> {
        Ok(heatmaps.clone())
    }
}

/// Seeded two-layer reference structure encoders.
pub struct SeededStructureEncoder {
    src_conv1: crate::nn::Conv3x3,
    src_conv2: crate::nn::Conv3x3,
    drv_conv1: crate::nn::Conv3x3,
    drv_conv2: crate::nn::Conv3x3,
}

/// Structure feature channel count of the seeded encoder.
pub const STRUCTURE_CHANNELS: usize = 32;
const STRUCTURE_HIDDEN: usize = 32;

impl SeededStructureEncoder {
    pub fn new(keypoints: usize, seed: u64) -> Self {
        use crate::nn::{Conv3x3, WeightScale};
        let mut rng = crate::rng::SplitMix64::new(seed);
        let src_conv1 = Conv3x3::seeded(3 + keypoints, STRUCTURE_HIDDEN, 1, WeightScale::FanIn, &mut rng);
        let src_conv2 =
            Conv3x3::seeded(STRUCTURE_HIDDEN, STRUCTURE_CHANNELS, 1, WeightScale::FanIn, &mut rng);
        let drv_conv1 = Conv3x3::seeded(keypoints, STRUCTURE_HIDDEN, 1, WeightScale::FanIn, &mut rng);
        let drv_conv2 =
            Conv3x3::seeded(STRUCTURE_HIDDEN, STRUCTURE_CHANNELS, 1, WeightScale::FanIn, &mut rng);
        Self {
            src_conv1,
            src_conv2,
            drv_conv1,
            drv_conv2,
        }
    }
}

impl StructureEncoder for SeededStructureEncoder {
    fn encode_source(&self, image_q: &ImageTensor, heatmaps: &ImageTensor) -> Result<ImageTensor> {
        let input = ImageTensor::concat_channels(&[image_q, heatmaps])?;
        let mut x = self.src_conv1.forward(&input);
        crate::nn::relu_in_place(&mut x);
        Ok(self.src_conv2.forward(&x))
    }

    fn encode_driving(&self, heatmaps: &ImageTensor) -> Result<ImageTensor> {
        let mut x = self.drv_conv1.forward(heatmaps);
        crate::nn::relu_in_place(&mut x);
        Ok(self.drv_conv2.forward(&x))
    }
}

/// Encode both structure features at quarter resolution.
///
/// The source input is the channel concatenation of the 4x-downsampled
/// source image and its keypoint heatmaps; the driving input is heatmaps
/// only. Returns `(source_feature, driving_feature)`.
pub fn encode_structures(
    encoder: &dyn StructureEncoder,
    source: &ImageTensor,
    src_kp: &KeypointSet,
    drv_kp: &KeypointSet,
    sigma: f64,
) -> Result<(ImageTensor, ImageTensor)> {
    let (h, w) = source.resolution();
    if h % 4 != 0 || w % 4 != 0 {
        return Err(CoreError::invalid_argument(
            "structure encoding requires resolution divisible by 4",
        ));
    }
    let (h4, w4) = (h / 4, w / 4);
    let source_q = resize_tensor(source, (h4, w4))?;
    let heat_s = render_heatmaps(src_kp, (h4, w4), sigma)?;
    let heat_d = render_heatmaps(drv_kp, (h4, w4), sigma)?;
    let src_feat = encoder.encode_source(&source_q, &heat_s)?;
    let drv_feat = encoder.encode_driving(&heat_d)?;
    if src_feat.channels() != drv_feat.channels() {
        return Err(CoreError::invalid_configuration(format!(
            "structure encoders disagree on channels: source {}, driving {}",
            src_feat.channels(),
            drv_feat.channels()
        )));
    }
    if src_feat.resolution() != (h4, w4) || drv_feat.resolution() != (h4, w4) {
        return Err(CoreError::invalid_configuration(
            "structure features must be at quarter resolution",
        ));
    }
    Ok((src_feat, drv_feat))
}

/// Gather `(2r+1)^2` correlation patches per pyramid level around each flow
/// target.
///
/// Per output pixel `zd` (at the flow's resolution): the driving dims are
/// bilinearly interpolated at `zd`'s grid coordinate (an exact slice when
/// the flow resolution equals the volume's), then each level's slice is
/// bilinearly sampled at the integer-offset lattice centered on the flow
/// target mapped into level pixel coordinates. Offsets are in level pixel
/// units; out-of-range taps read zero. Channels are flattened level-major,
/// then offset row-major.
pub fn lookup(volume: &CorrelationVolume, flow: &FlowField, r: usize) -> Result<ImageTensor> {
    if !flow.is_finite() {
        return Err(CoreError::invalid_argument(
            "lookup flow contains non-finite coordinates",
        ));
    }
    let (vh, vw) = volume.resolution();
    if vh < 2 || vw < 2 {
        return Err(CoreError::invalid_argument(
            "lookup requires driving dims of at least 2 per axis",
        ));
    }
    let (fh, fw) = flow.resolution();
    let side = 2 * r + 1;
    let patch = side * side;
    let n_levels = volume.level_count();
    let mut out = ImageTensor::zeros(fh, fw, n_levels * patch);

    // Driving-dim interpolation taps per output pixel. Grid coordinates are
    // always inside [-1, 1], so plain interior bilinear taps suffice.
    let interior_tap = |p: f64, n: usize| -> (usize, f64) {
        let mut i0 = p as usize;
        if i0 > n - 2 {
            i0 = n - 2;
        }
        (i0, p - i0 as f64)
    };

    let fxs = flow.x_plane();
    let fys = flow.y_plane();
    // Candidate column/row indices per level, reused across offsets.
    let mut cols: Vec<(usize, f64)> = vec![(0, 0.0); side + 1];
    let mut rows: Vec<(usize, f64)> = vec![(0, 0.0); side + 1];

    for oy in 0..fh {
        let gy = axis_coord_or_center(oy, fh);
        let (dy0, fy) = interior_tap(norm_to_px(gy, vh), vh);
        let (wdy0, wdy1) = (1.0 - fy, fy);
        for ox in 0..fw {
            let gx = axis_coord_or_center(ox, fw);
            let (dx0, fx) = interior_tap(norm_to_px(gx, vw), vw);
            let (wdx0, wdx1) = (1.0 - fx, fx);
            let wd = [
                wdy0 * wdx0,
                wdy0 * wdx1,
                wdy1 * wdx0,
                wdy1 * wdx1,
            ];
            let zd = [
                dy0 * vw + dx0,
                dy0 * vw + dx0 + 1,
                (dy0 + 1) * vw + dx0,
                (dy0 + 1) * vw + dx0 + 1,
            ];
            let pix = oy * fw + ox;
            let tx = fxs[pix];
            let ty = fys[pix];

            for l in 0..n_levels {
                let (sh, sw) = (vh >> l, vw >> l);
                let slice_len = sh * sw;
                let level = volume.level(l);
                let slices = [
                    &level[zd[0] * slice_len..(zd[0] + 1) * slice_len],
                    &level[zd[1] * slice_len..(zd[1] + 1) * slice_len],
                    &level[zd[2] * slice_len..(zd[2] + 1) * slice_len],
                    &level[zd[3] * slice_len..(zd[3] + 1) * slice_len],
                ];
                // Center in level pixel coordinates.
                let cpx = norm_to_px(tx, sw);
                let cpy = norm_to_px(ty, sh);
                let bx = libm::floor(cpx);
                let by = libm::floor(cpy);
                let (sx1, sx0) = {
                    let f = cpx - bx;
                    (f, 1.0 - f)
                };
                let (sy1, sy0) = {
                    let f = cpy - by;
                    (f, 1.0 - f)
                };
                // Candidate columns bx - r .. bx + r + 1 with zero weight
                // outside the slice.
                for (d, slot) in cols.iter_mut().enumerate() {
                    let ix = bx as i64 - r as i64 + d as i64;
                    *slot = if bx.is_finite() && ix >= 0 && (ix as usize) < sw {
                        (ix as usize, 1.0)
                    } else {
                        (0, 0.0)
                    };
                }
                for (d, slot) in rows.iter_mut().enumerate() {
                    let iy = by as i64 - r as i64 + d as i64;
                    *slot = if by.is_finite() && iy >= 0 && (iy as usize) < sh {
                        (iy as usize * sw, 1.0)
                    } else {
                        (0, 0.0)
                    };
                }

                for dy in 0..side {
                    let (r0, m0) = rows[dy];
                    let (r1, m1) = rows[dy + 1];
                    let (wy0, wy1) = (sy0 * m0, sy1 * m1);
                    for dx in 0..side {
                        let (c0, n0) = cols[dx];
                        let (c1, n1) = cols[dx + 1];
                        let (wx0, wx1) = (sx0 * n0, sx1 * n1);
                        let mut acc = 0.0;
                        for (s, &wdk) in slices.iter().zip(&wd) {
                            let top = wx0 * s[r0 + c0] + wx1 * s[r0 + c1];
                            let bot = wx0 * s[r1 + c0] + wx1 * s[r1 + c1];
                            acc += wdk * (wy0 * top + wy1 * bot);
                        }
                        let ch = l * patch + dy * side + dx;
                        out.plane_mut(ch)[pix] = acc;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Soft-argmax flow from the volume alone: per driving pixel, softmax over
/// the flattened source dimension, then the expectation of the source grid
/// coordinates under those weights.
pub fn non_prior_init(volume: &CorrelationVolume) -> FlowField {
    let (h, w) = volume.resolution();
    let n = h * w;
    let base = volume.base();
    let mut out = FlowField::constant(h, w, GridCoord::new(0.0, 0.0));
    let gx: Vec<f64> = (0..n).map(|i| axis_coord_or_center(i % w, w)).collect();
    let gy: Vec<f64> = (0..n).map(|i| axis_coord_or_center(i / w, h)).collect();
    let mut weights = vec![0.0; n];
    for zd in 0..n {
        let row = &base[zd * n..(zd + 1) * n];
        let mut max = f64::NEG_INFINITY;
        for &v in row {
            max = max.max(v);
        }
        let mut sum = 0.0;
        for (wgt, &v) in weights.iter_mut().zip(row) {
            let e = libm::exp(v - max);
            *wgt = e;
            sum += e;
        }
        let inv = 1.0 / sum;
        let mut ex = 0.0;
        let mut ey = 0.0;
        for i in 0..n {
            let p = weights[i] * inv;
            ex += p * gx[i];
            ey += p * gy[i];
        }
        out.x_plane_mut()[zd] = ex;
        out.y_plane_mut()[zd] = ey;
    }
    out
}

/// Directional derivative of [`non_prior_init`] with respect to the base
/// volume entries, in direction `tangent` (same layout as the base).
pub fn non_prior_init_jvp(volume: &CorrelationVolume, tangent: &[f64]) -> Result<FlowField> {
    let (h, w) = volume.resolution();
    let n = h * w;
    if tangent.len() != n * n {
        return Err(CoreError::invalid_argument(
            "tangent length must match the base volume",
        ));
    }
    let base = volume.base();
    let mut out = FlowField::constant(h, w, GridCoord::new(0.0, 0.0));
    let gx: Vec<f64> = (0..n).map(|i| axis_coord_or_center(i % w, w)).collect();
    let gy: Vec<f64> = (0..n).map(|i| axis_coord_or_center(i / w, h)).collect();
    let mut weights = vec![0.0; n];
    for zd in 0..n {
        let row = &base[zd * n..(zd + 1) * n];
        let trow = &tangent[zd * n..(zd + 1) * n];
        let mut max = f64::NEG_INFINITY;
        for &v in row {
            max = max.max(v);
        }
        let mut sum = 0.0;
        for (wgt, &v) in weights.iter_mut().zip(row) {
            let e = libm::exp(v - max);
            *wgt = e;
            sum += e;
        }
        let inv = 1.0 / sum;
        // d(sum_i g_i s_i) = sum_i g_i s_i (t_i - tbar), tbar = sum_j s_j t_j
        let mut tbar = 0.0;
        for i in 0..n {
            tbar += weights[i] * inv * trow[i];
        }
        let mut dx = 0.0;
        let mut dy = 0.0;
        for i in 0..n {
            let s = weights[i] * inv;
            let dt = trow[i] - tbar;
            dx += gx[i] * s * dt;
            dy += gy[i] * s * dt;
        }
        out.x_plane_mut()[zd] = dx;
        out.y_plane_mut()[zd] = dy;
    }
    Ok(out)
}
