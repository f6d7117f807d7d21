//! Coarse prior motion estimation from keypoints and affine Jacobians.
//!
//! Each keypoint pair defines a local affine part flow
//! `T^k(z) = p_s^k + A_s^k (A_d^k)^-1 (z - p_d^k)`; a composition mask
//! blends the part flows with a static background flow (the identity) into
//! the dense coarse flow `F_0` at quarter resolution, alongside occlusion
//! logits `O_0`. Keypoints, mask, and occlusion come from a pluggable
//! provider: either fixed values (loaded from files by the companion crate)
//! or a seeded reference network.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::grid::{identity_grid, FlowField, GridCoord};
use crate::nn::{relu_in_place, Conv3x3, WeightScale};
use crate::rng::SplitMix64;
use crate::tensor::{resize_tensor, ImageTensor};

/// Row-major 2x2 matrix: `[[a, b], [c, d]]` maps `(x, y)` to
/// `(a*x + b*y, c*x + d*y)`.
pub type Mat2 = [[f64; 2]; 2];

/// Determinant magnitudes at or below this are treated as singular.
/// A singular driving Jacobian is always a hard error, never silently
/// regularized.
pub const SINGULAR_DET_THRESHOLD: f64 = 1e-8;

pub fn mat2_det(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

pub fn mat2_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

fn mat2_inv(m: &Mat2, det: f64) -> Mat2 {
    let inv = 1.0 / det;
    [
        [m[1][1] * inv, -m[0][1] * inv],
        [-m[1][0] * inv, m[0][0] * inv],
    ]
}

/// K keypoints with per-keypoint affine Jacobians.
///
/// The Jacobians describe transformations to an abstract reference frame;
/// the engine only ever uses the composed form `A_s (A_d)^-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet {
    points: Vec<GridCoord>,
    jacobians: Vec<Mat2>,
}

impl KeypointSet {
    pub fn new(points: Vec<GridCoord>, jacobians: Vec<Mat2>) -> Result<Self> {
        if points.len() != jacobians.len() {
            return Err(CoreError::invalid_argument(
                "keypoint and jacobian counts differ",
            ));
        }
        if points.is_empty() {
            return Err(CoreError::invalid_argument("keypoint set is empty"));
        }
        for (k, p) in points.iter().enumerate() {
            if !p.is_finite() {
                return Err(CoreError::invalid_argument(format!(
                    "keypoint {k} is not finite"
                )));
            }
        }
        for (k, j) in jacobians.iter().enumerate() {
            if !j.iter().flatten().all(|v| v.is_finite()) {
                return Err(CoreError::invalid_argument(format!(
                    "jacobian {k} is not finite"
                )));
            }
        }
        Ok(Self { points, jacobians })
    }

    /// Identity Jacobians at the given points.
    pub fn with_identity_jacobians(points: Vec<GridCoord>) -> Result<Self> {
        let jacobians = vec![[[1.0, 0.0], [0.0, 1.0]]; points.len()];
        Self::new(points, jacobians)
    }

    pub fn count(&self) -> usize {
        self.points.len()
    }

    pub fn point(&self, k: usize) -> GridCoord {
        self.points[k]
    }

    pub fn jacobian(&self, k: usize) -> &Mat2 {
        &self.jacobians[k]
    }

    pub fn points(&self) -> &[GridCoord] {
        &self.points
    }

    pub fn jacobians(&self) -> &[Mat2] {
        &self.jacobians
    }
}

/// Evaluate the part flow of keypoint `k` on every grid coordinate.
pub fn part_flow(
    src_kp: &KeypointSet,
    drv_kp: &KeypointSet,
    k: usize,
    grid: &FlowField,
) -> Result<FlowField> {
    if k >= src_kp.count() || k >= drv_kp.count() {
        return Err(CoreError::invalid_argument(format!(
            "keypoint index {k} out of range"
        )));
    }
    let a_d = drv_kp.jacobian(k);
    let det = mat2_det(a_d);
    if det.abs() <= SINGULAR_DET_THRESHOLD {
        return Err(CoreError::SingularJacobian { index: k, det });
    }
    let m = mat2_mul(src_kp.jacobian(k), &mat2_inv(a_d, det));
    let p_s = src_kp.point(k);
    let p_d = drv_kp.point(k);

    let (h, w) = grid.resolution();
    let mut out = FlowField::constant(h, w, GridCoord::new(0.0, 0.0));
    {
        let gx = grid.x_plane();
        let gy = grid.y_plane();
        let n = h * w;
        for i in 0..n {
            let dx = gx[i] - p_d.x;
            let dy = gy[i] - p_d.y;
            out.x_plane_mut()[i] = p_s.x + m[0][0] * dx + m[0][1] * dy;
        }
        for i in 0..n {
            let dx = gx[i] - p_d.x;
            let dy = gy[i] - p_d.y;
            out.y_plane_mut()[i] = p_s.y + m[1][0] * dx + m[1][1] * dy;
        }
    }
    Ok(out)
}

/// Per-pixel convex weights over K part flows plus the background flow
/// (channel 0). Channels sum to 1 at every pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionMask {
    weights: ImageTensor,
}

impl CompositionMask {
    /// Validate and wrap raw weights. Channels must be non-negative and sum
    /// to 1 within 1e-6 at every pixel.
    pub fn from_tensor(weights: ImageTensor) -> Result<Self> {
        let n = weights.height() * weights.width();
        for i in 0..n {
            let mut sum = 0.0;
            for c in 0..weights.channels() {
                let v = weights.plane(c)[i];
                if !(v >= 0.0) {
                    return Err(CoreError::invalid_argument(
                        "composition mask weights must be non-negative",
                    ));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(CoreError::invalid_argument(
                    "composition mask channels must sum to 1",
                ));
            }
        }
        Ok(Self { weights })
    }

    /// One-hot mask selecting a single channel everywhere.
    pub fn one_hot(height: usize, width: usize, channels: usize, hot: usize) -> Result<Self> {
        if hot >= channels {
            return Err(CoreError::invalid_argument("one-hot channel out of range"));
        }
        let mut weights = ImageTensor::zeros(height, width, channels);
        weights.plane_mut(hot).fill(1.0);
        Ok(Self { weights })
    }

    pub fn tensor(&self) -> &ImageTensor {
        &self.weights
    }

    pub fn channels(&self) -> usize {
        self.weights.channels()
    }

    pub fn resolution(&self) -> (usize, usize) {
        self.weights.resolution()
    }
}

/// Numerically stable per-pixel softmax over channels.
pub fn softmax_mask(logits: &ImageTensor) -> Result<CompositionMask> {
    if !logits.is_finite() {
        return Err(CoreError::invalid_argument("softmax logits must be finite"));
    }
    let (h, w) = logits.resolution();
    let c = logits.channels();
    let n = h * w;
    let mut out = ImageTensor::zeros(h, w, c);
    for i in 0..n {
        let mut max = f64::NEG_INFINITY;
        for k in 0..c {
            max = max.max(logits.plane(k)[i]);
        }
        let mut sum = 0.0;
        for k in 0..c {
            let e = libm::exp(logits.plane(k)[i] - max);
            out.plane_mut(k)[i] = e;
            sum += e;
        }
        let inv = 1.0 / sum;
        for k in 0..c {
            out.plane_mut(k)[i] *= inv;
        }
    }
    Ok(CompositionMask { weights: out })
}

/// Blend part flows with mask weights: `T(z) = sum_k M^k(z) T^k(z)`.
///
/// Index 0 of `part_flows` is the background flow.
pub fn compose_dense_flow(part_flows: &[FlowField], mask: &CompositionMask) -> Result<FlowField> {
    if part_flows.len() != mask.channels() {
        return Err(CoreError::invalid_argument(
            "part flow count must equal mask channel count",
        ));
    }
    let (h, w) = mask.resolution();
    for f in part_flows {
        if f.resolution() != (h, w) {
            return Err(CoreError::invalid_argument(
                "part flows and mask must share one resolution",
            ));
        }
    }
    let n = h * w;
    let mut out = FlowField::constant(h, w, GridCoord::new(0.0, 0.0));
    for (k, f) in part_flows.iter().enumerate() {
        let m = mask.tensor().plane(k);
        let fx = f.x_plane();
        let fy = f.y_plane();
        for i in 0..n {
            out.x_plane_mut()[i] += m[i] * fx[i];
        }
        for i in 0..n {
            out.y_plane_mut()[i] += m[i] * fy[i];
        }
    }
    Ok(out)
}

/// Render one unnormalized Gaussian heatmap channel per keypoint:
/// `exp(-||z - p^k||^2 / (2 sigma^2))` in normalized-coordinate distance.
/// A keypoint sitting exactly on a lattice point peaks at 1.
pub fn render_heatmaps(
    kp: &KeypointSet,
    resolution: (usize, usize),
    sigma: f64,
) -> Result<ImageTensor> {
    if !(sigma > 0.0) {
        return Err(CoreError::invalid_argument("heatmap sigma must be positive"));
    }
    let (h, w) = resolution;
    let grid = identity_grid(h, w)?;
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut out = ImageTensor::zeros(h, w, kp.count());
    for k in 0..kp.count() {
        let p = kp.point(k);
        let plane = out.plane_mut(k);
        for i in 0..h * w {
            let dx = grid.x_plane()[i] - p.x;
            let dy = grid.y_plane()[i] - p.y;
            plane[i] = libm::exp(-(dx * dx + dy * dy) * inv);
        }
    }
    Ok(out)
}

/// Coarse prior output: dense flow and occlusion logits at quarter
/// resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorMotionOutput {
    pub flow: FlowField,
    pub occlusion_logits: ImageTensor,
}

/// Dense-motion head outputs.
pub struct DenseMotion {
    pub mask: CompositionMask,
    pub occlusion_logits: ImageTensor,
}

/// Source of keypoints, Jacobians, composition mask, and occlusion logits.
///
/// Implementations must be deterministic and safe for concurrent read-only
/// use after construction.
pub trait PriorMotionProvider {
    fn source_keypoints(&self, source: &ImageTensor) -> Result<KeypointSet>;
    fn driving_keypoints(&self, driving: &ImageTensor) -> Result<KeypointSet>;
    /// Composition mask and occlusion logits at quarter resolution.
    fn dense_motion(
        &self,
        source: &ImageTensor,
        driving: &ImageTensor,
        src_kp: &KeypointSet,
        drv_kp: &KeypointSet,
    ) -> Result<DenseMotion>;
}

/// Provider with fixed, input-independent outputs.
///
/// Backs keypoint files loaded from disk. When no mask is given, the
/// background channel is one-hot (the composed flow is the identity when
/// keypoints agree); when no occlusion is given, logits are zero
/// (occlusion 0.5 everywhere).
pub struct StaticPrior {
    source: KeypointSet,
    driving: KeypointSet,
    mask: Option<CompositionMask>,
    occlusion_logits: Option<ImageTensor>,
}

impl StaticPrior {
    pub fn new(source: KeypointSet, driving: KeypointSet) -> Result<Self> {
        if source.count() != driving.count() {
            return Err(CoreError::invalid_argument(
                "source and driving keypoint counts differ",
            ));
        }
        Ok(Self {
            source,
            driving,
            mask: None,
            occlusion_logits: None,
        })
    }

    pub fn with_mask(mut self, mask: CompositionMask) -> Result<Self> {
        if mask.channels() != self.source.count() + 1 {
            return Err(CoreError::invalid_argument(
                "mask must have K+1 channels",
            ));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn with_occlusion_logits(mut self, logits: ImageTensor) -> Result<Self> {
        if logits.channels() != 1 {
            return Err(CoreError::invalid_argument(
                "occlusion logits must have one channel",
            ));
        }
        self.occlusion_logits = Some(logits);
        Ok(self)
    }
}

impl PriorMotionProvider for StaticPrior {
    fn source_keypoints(&self, _source: &ImageTensor) -> Result<KeypointSet> {
        Ok(self.source.clone())
    }

    fn driving_keypoints(&self, _driving: &ImageTensor) -> Result<KeypointSet> {
        Ok(self.driving.clone())
    }

    fn dense_motion(
        &self,
        source: &ImageTensor,
        _driving: &ImageTensor,
        src_kp: &KeypointSet,
        _drv_kp: &KeypointSet,
    ) -> Result<DenseMotion> {
        let (h4, w4) = (source.height() / 4, source.width() / 4);
        let mask = match &self.mask {
            Some(m) => {
                if m.resolution() != (h4, w4) {
                    return Err(CoreError::Provider(format!(
                        "stored mask resolution {:?} does not match quarter resolution ({h4}, {w4})",
                        m.resolution()
                    )));
                }
                m.clone()
            }
            None => CompositionMask::one_hot(h4, w4, src_kp.count() + 1, 0)?,
        };
        let occlusion_logits = match &self.occlusion_logits {
            Some(o) => {
                if o.resolution() != (h4, w4) {
                    return Err(CoreError::Provider(format!(
                        "stored occlusion resolution {:?} does not match quarter resolution ({h4}, {w4})",
                        o.resolution()
                    )));
                }
                o.clone()
            }
            None => ImageTensor::zeros(h4, w4, 1),
        };
        Ok(DenseMotion {
            mask,
            occlusion_logits,
        })
    }
}

/// Seeded reference keypoint detector and dense-motion network.
///
/// The detector is a small strided convolution stack with a soft-argmax
/// readout per keypoint channel; Jacobians are read out as small seeded
/// perturbations of the identity so they stay comfortably invertible. The
/// dense-motion head consumes the quarter-resolution images plus both
/// heatmap stacks and emits K+1 mask logits and one occlusion channel.
pub struct SeededPriorNet {
    k: usize,
    sigma: f64,
    det_conv1: Conv3x3,
    det_conv2: Conv3x3,
    det_head: Conv3x3,
    dm_conv1: Conv3x3,
    dm_head: Conv3x3,
}

const PRIOR_NET_WIDTH: usize = 32;
/// Jacobian readout perturbation scale around the identity.
const JACOBIAN_SCALE: f64 = 1e-2;

impl SeededPriorNet {
    pub fn new(k: usize, sigma: f64, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let det_conv1 = Conv3x3::seeded(3, PRIOR_NET_WIDTH, 1, WeightScale::FanIn, &mut rng);
        let det_conv2 = Conv3x3::seeded(
            PRIOR_NET_WIDTH,
            PRIOR_NET_WIDTH,
            2,
            WeightScale::FanIn,
            &mut rng,
        );
        let det_head = Conv3x3::seeded(PRIOR_NET_WIDTH, 5 * k, 1, WeightScale::FanIn, &mut rng);
        let dm_conv1 = Conv3x3::seeded(
            6 + 2 * k,
            PRIOR_NET_WIDTH,
            1,
            WeightScale::FanIn,
            &mut rng,
        );
        let dm_head = Conv3x3::seeded(PRIOR_NET_WIDTH, k + 2, 1, WeightScale::FanIn, &mut rng);
        Self {
            k,
            sigma,
            det_conv1,
            det_conv2,
            det_head,
            dm_conv1,
            dm_head,
        }
    }

    fn detect(&self, image: &ImageTensor) -> Result<KeypointSet> {
        let (h, w) = image.resolution();
        if h % 8 != 0 || w % 8 != 0 || h < 32 || w < 32 {
            return Err(CoreError::Provider(format!(
                "detector requires resolution divisible by 8 and at least 32, got ({h}, {w})"
            )));
        }
        let down = resize_tensor(image, (h / 4, w / 4))?;
        let mut x = self.det_conv1.forward(&down);
        relu_in_place(&mut x);
        let mut x = self.det_conv2.forward(&x);
        relu_in_place(&mut x);
        let maps = self.det_head.forward(&x);

        let (mh, mw) = maps.resolution();
        let grid = identity_grid(mh, mw)?;
        let n = mh * mw;
        let mut points = Vec::with_capacity(self.k);
        let mut jacobians = Vec::with_capacity(self.k);
        let mut weights = vec![0.0; n];
        for kp in 0..self.k {
            let score = maps.plane(kp);
            let mut max = f64::NEG_INFINITY;
            for &v in score {
                max = max.max(v);
            }
            let mut sum = 0.0;
            for i in 0..n {
                let e = libm::exp(score[i] - max);
                weights[i] = e;
                sum += e;
            }
            let inv = 1.0 / sum;
            let mut px = 0.0;
            let mut py = 0.0;
            for i in 0..n {
                let wgt = weights[i] * inv;
                px += wgt * grid.x_plane()[i];
                py += wgt * grid.y_plane()[i];
            }
            points.push(GridCoord::new(px, py));

            // Jacobian entries: expectations of the four readout channels
            // under the same weights, as perturbations of the identity.
            let mut entries = [0.0; 4];
            for (e, entry) in entries.iter_mut().enumerate() {
                let plane = maps.plane(self.k + 4 * kp + e);
                let mut acc = 0.0;
                for i in 0..n {
                    acc += weights[i] * inv * plane[i];
                }
                *entry = acc * JACOBIAN_SCALE;
            }
            jacobians.push([
                [1.0 + entries[0], entries[1]],
                [entries[2], 1.0 + entries[3]],
            ]);
        }
        KeypointSet::new(points, jacobians)
    }
}

impl PriorMotionProvider for SeededPriorNet {
    fn source_keypoints(&self, source: &ImageTensor) -> Result<KeypointSet> {
        self.detect(source)
    }

    fn driving_keypoints(&self, driving: &ImageTensor) -> Result<KeypointSet> {
        self.detect(driving)
    }

    fn dense_motion(
        &self,
        source: &ImageTensor,
        driving: &ImageTensor,
        src_kp: &KeypointSet,
        drv_kp: &KeypointSet,
    ) -> Result<DenseMotion> {
        let (h, w) = source.resolution();
        let (h4, w4) = (h / 4, w / 4);
        let src4 = resize_tensor(source, (h4, w4))?;
        let drv4 = resize_tensor(driving, (h4, w4))?;
        let heat_s = render_heatmaps(src_kp, (h4, w4), self.sigma)?;
        let heat_d = render_heatmaps(drv_kp, (h4, w4), self.sigma)?;
        let input = ImageTensor::concat_channels(&[&src4, &drv4, &heat_s, &heat_d])?;
        let mut x = self.dm_conv1.forward(&input);
        relu_in_place(&mut x);
        let head = self.dm_head.forward(&x);

        let mut mask_logits = ImageTensor::zeros(h4, w4, self.k + 1);
        for c in 0..=self.k {
            mask_logits.plane_mut(c).copy_from_slice(head.plane(c));
        }
        let mut occ = ImageTensor::zeros(h4, w4, 1);
        occ.plane_mut(0).copy_from_slice(head.plane(self.k + 1));
        Ok(DenseMotion {
            mask: softmax_mask(&mask_logits)?,
            occlusion_logits: occ,
        })
    }
}

/// Run the full coarse estimation: keypoints for both images, part flows,
/// mask-weighted composition, and occlusion logits, all at quarter
/// resolution.
pub fn prior_motion(
    provider: &dyn PriorMotionProvider,
    source: &ImageTensor,
    driving: &ImageTensor,
) -> Result<(KeypointSet, KeypointSet, PriorMotionOutput)> {
    let src_kp = provider.source_keypoints(source)?;
    let drv_kp = provider.driving_keypoints(driving)?;
    prior_motion_with_keypoints(provider, source, driving, src_kp, drv_kp)
}

/// As [`prior_motion`], with keypoints already detected (lets callers cache
/// the source side and adjust driving keypoints for relative transfer).
pub fn prior_motion_with_keypoints(
    provider: &dyn PriorMotionProvider,
    source: &ImageTensor,
    driving: &ImageTensor,
    src_kp: KeypointSet,
    drv_kp: KeypointSet,
) -> Result<(KeypointSet, KeypointSet, PriorMotionOutput)> {
    if source.resolution() != driving.resolution() {
        return Err(CoreError::invalid_argument(
            "source and driving must share a resolution",
        ));
    }
    let (h, w) = source.resolution();
    if h % 4 != 0 || w % 4 != 0 || h < 8 || w < 8 {
        return Err(CoreError::invalid_argument(
            "prior motion requires resolution divisible by 4",
        ));
    }
    let (h4, w4) = (h / 4, w / 4);

    let dm = provider.dense_motion(source, driving, &src_kp, &drv_kp)?;
    if dm.mask.resolution() != (h4, w4) || dm.occlusion_logits.resolution() != (h4, w4) {
        return Err(CoreError::Provider(
            "dense motion outputs must be at quarter resolution".into(),
        ));
    }
    if dm.mask.channels() != src_kp.count() + 1 {
        return Err(CoreError::Provider(
            "composition mask must have K+1 channels".into(),
        ));
    }

    let grid = identity_grid(h4, w4)?;
    let mut flows = Vec::with_capacity(src_kp.count() + 1);
    flows.push(grid.clone());
    for k in 0..src_kp.count() {
        flows.push(part_flow(&src_kp, &drv_kp, k, &grid)?);
    }
    let flow = compose_dense_flow(&flows, &dm.mask)?;
    Ok((
        src_kp,
        drv_kp,
        PriorMotionOutput {
            flow,
            occlusion_logits: dm.occlusion_logits,
        },
    ))
}

/// Shift keypoints by the per-keypoint offset `to - from` (relative motion
/// transfer). Jacobians pass through unchanged.
pub fn offset_keypoints(
    kp: &KeypointSet,
    from: &KeypointSet,
    to: &KeypointSet,
) -> Result<KeypointSet> {
    if kp.count() != from.count() || kp.count() != to.count() {
        return Err(CoreError::invalid_argument(
            "keypoint counts differ in offset adjustment",
        ));
    }
    let points = (0..kp.count())
        .map(|k| {
            let p = kp.point(k);
            let f = from.point(k);
            let t = to.point(k);
            GridCoord::new(p.x + (t.x - f.x), p.y + (t.y - f.y))
        })
        .collect();
    KeypointSet::new(points, kp.jacobians.clone())
}
