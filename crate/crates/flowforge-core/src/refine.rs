//! Coarse-to-fine iterative motion refinement.
//!
//! Iterations run from 1/32 of the image resolution up to full resolution,
//! doubling each step. Instead of accumulating flow through repeated
//! upsampling, every iteration reconstructs its flow as
//! `resize(F_0) + accumulated residuals`: the coarse prior is resized
//! directly to the current resolution so no information is lost to the
//! initial downsample, and only the (small) residuals travel through the
//! upsampling chain. Occlusion follows the same rule in logit space;
//! sigmoid is applied only when a map is consumed.

use alloc::format;
use alloc::vec::Vec;

use crate::correlation::{lookup, CorrelationVolume};
use crate::error::{CoreError, Result};
use crate::generate::OcclusionMap;
use crate::grid::{bilinear_sample, resize_field, FlowField};
use crate::nn::{relu_in_place, Conv3x3, WeightScale};
use crate::prior::PriorMotionOutput;
use crate::rng::SplitMix64;
use crate::tensor::{resize_tensor, ImageTensor};

/// Doubling resolution sequence from `(H/32, W/32)` to `(H, W)` inclusive;
/// always 6 entries.
pub fn resolution_schedule(image_res: (usize, usize)) -> Result<Vec<(usize, usize)>> {
    let (h, w) = image_res;
    if h % 32 != 0 || w % 32 != 0 {
        return Err(CoreError::invalid_argument(format!(
            "resolution ({h}, {w}) must be divisible by 32"
        )));
    }
    if h / 32 < 2 || w / 32 < 2 {
        return Err(CoreError::invalid_argument(format!(
            "resolution ({h}, {w}) too small: the coarsest level must be at least 2x2"
        )));
    }
    Ok((0..6).map(|i| ((h / 32) << i, (w / 32) << i)).collect())
}

/// First `iterations` entries of the schedule: shorter settings keep the
/// coarse start and drop the top resolutions.
pub fn truncated_schedule(
    image_res: (usize, usize),
    iterations: usize,
) -> Result<Vec<(usize, usize)>> {
    if iterations == 0 || iterations > 6 {
        return Err(CoreError::invalid_argument(
            "iteration count must be between 1 and 6",
        ));
    }
    let mut s = resolution_schedule(image_res)?;
    s.truncate(iterations);
    Ok(s)
}

/// Residual flow and occlusion emitted by one updater invocation.
pub struct UpdaterOutput {
    /// 2-channel flow residual (x plane, y plane) in normalized units.
    pub flow_residual: ImageTensor,
    /// 1-channel occlusion logit residual.
    pub occlusion_residual: ImageTensor,
}

/// The flow updater: consumes the upsampled input flow, the correlation
/// feature, and the warped source feature; emits residuals. One instance is
/// shared across all iterations.
pub trait UpdaterNetwork {
    fn update(
        &self,
        flow: &FlowField,
        correlation: &ImageTensor,
        warped_feature: &ImageTensor,
    ) -> Result<UpdaterOutput>;
}

/// Stub updater: zero residuals, so flows stay exactly `resize(F_0)`.
pub struct ZeroUpdater;

impl UpdaterNetwork for ZeroUpdater {
    fn update(
        &self,
        flow: &FlowField,
        _correlation: &ImageTensor,
        _warped_feature: &ImageTensor,
    ) -> Result<UpdaterOutput> {
        let (h, w) = flow.resolution();
        Ok(UpdaterOutput {
            flow_residual: ImageTensor::zeros(h, w, 2),
            occlusion_residual: ImageTensor::zeros(h, w, 1),
        })
    }
}

/// Hidden width of the seeded reference updater.
pub const UPDATER_HIDDEN: usize = 32;
/// Weight scale of the seeded reference updater; small weights keep the
/// residuals perturbative.
pub const UPDATER_WEIGHT_SCALE: f64 = 1e-2;

/// Seeded reference updater: four convolution blocks. Correlation feature
/// and input flow pass through separate blocks, concatenate into an
/// intermediate motion feature, which joins the input flow and warped
/// source feature in a final block emitting 2 flow-residual channels and 1
/// occlusion-residual channel.
pub struct SeededUpdater {
    corr_block: Conv3x3,
    flow_block: Conv3x3,
    mix_block: Conv3x3,
    out_block: Conv3x3,
    corr_channels: usize,
    feature_channels: usize,
}

impl SeededUpdater {
    pub fn new(corr_channels: usize, feature_channels: usize, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let scale = WeightScale::Fixed(UPDATER_WEIGHT_SCALE);
        let corr_block = Conv3x3::seeded(corr_channels, UPDATER_HIDDEN, 1, scale, &mut rng);
        let flow_block = Conv3x3::seeded(2, UPDATER_HIDDEN, 1, scale, &mut rng);
        let mix_block = Conv3x3::seeded(2 * UPDATER_HIDDEN, UPDATER_HIDDEN, 1, scale, &mut rng);
        let out_block = Conv3x3::seeded(
            UPDATER_HIDDEN + 2 + feature_channels,
            3,
            1,
            scale,
            &mut rng,
        );
        Self {
            corr_block,
            flow_block,
            mix_block,
            out_block,
            corr_channels,
            feature_channels,
        }
    }
}

impl UpdaterNetwork for SeededUpdater {
    fn update(
        &self,
        flow: &FlowField,
        correlation: &ImageTensor,
        warped_feature: &ImageTensor,
    ) -> Result<UpdaterOutput> {
        if correlation.channels() != self.corr_channels {
            return Err(CoreError::invalid_configuration(format!(
                "updater built for {} correlation channels, got {}",
                self.corr_channels,
                correlation.channels()
            )));
        }
        if warped_feature.channels() != self.feature_channels {
            return Err(CoreError::invalid_configuration(format!(
                "updater built for {} feature channels, got {}",
                self.feature_channels,
                warped_feature.channels()
            )));
        }
        let flow_t = flow.to_tensor();
        let mut a = self.corr_block.forward(correlation);
        relu_in_place(&mut a);
        let mut b = self.flow_block.forward(&flow_t);
        relu_in_place(&mut b);
        let mut m = self
            .mix_block
            .forward(&ImageTensor::concat_channels(&[&a, &b])?);
        relu_in_place(&mut m);
        let out = self
            .out_block
            .forward(&ImageTensor::concat_channels(&[&m, &flow_t, warped_feature])?);
        let (h, w) = out.resolution();
        let mut flow_residual = ImageTensor::zeros(h, w, 2);
        flow_residual.plane_mut(0).copy_from_slice(out.plane(0));
        flow_residual.plane_mut(1).copy_from_slice(out.plane(1));
        let mut occlusion_residual = ImageTensor::zeros(h, w, 1);
        occlusion_residual.plane_mut(0).copy_from_slice(out.plane(2));
        Ok(UpdaterOutput {
            flow_residual,
            occlusion_residual,
        })
    }
}

/// Per-iteration refinement state.
///
/// Invariant: `flow` always equals `resize(F_0)` at the current resolution
/// plus `flow_residual_acc`, exactly as constructed; likewise for the
/// occlusion logits.
#[derive(Clone)]
pub struct RefinementState {
    prior: PriorMotionOutput,
    iteration: usize,
    flow: FlowField,
    occlusion_logits: ImageTensor,
    flow_residual_acc: ImageTensor,
    occlusion_residual_acc: ImageTensor,
}

impl RefinementState {
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn resolution(&self) -> (usize, usize) {
        self.flow.resolution()
    }

    pub fn flow(&self) -> &FlowField {
        &self.flow
    }

    pub fn occlusion_logits(&self) -> &ImageTensor {
        &self.occlusion_logits
    }

    pub fn flow_residual_acc(&self) -> &ImageTensor {
        &self.flow_residual_acc
    }

    pub fn occlusion_residual_acc(&self) -> &ImageTensor {
        &self.occlusion_residual_acc
    }

    pub fn prior(&self) -> &PriorMotionOutput {
        &self.prior
    }

    /// Recompute `resize(F_0) + residuals` and compare bit-for-bit against
    /// the stored flow.
    pub fn residual_identity_holds(&self) -> bool {
        let res = self.flow.resolution();
        let base = match resize_field(&self.prior.flow, res) {
            Ok(b) => b,
            Err(_) => return false,
        };
        let rebuilt = add_flow_residual(&base, &self.flow_residual_acc);
        rebuilt == self.flow
    }
}

fn add_flow_residual(base: &FlowField, residual: &ImageTensor) -> FlowField {
    let (h, w) = base.resolution();
    let mut out = base.clone();
    for (o, r) in out.x_plane_mut().iter_mut().zip(residual.plane(0)) {
        *o += r;
    }
    for (o, r) in out.y_plane_mut().iter_mut().zip(residual.plane(1)) {
        *o += r;
    }
    debug_assert_eq!((h, w), residual.resolution());
    out
}

/// Start the refinement at 1/32 of the image resolution: the prior flow and
/// occlusion logits are resized down, residual accumulators start at zero.
pub fn init_refinement(prior: &PriorMotionOutput) -> Result<RefinementState> {
    let (h4, w4) = prior.flow.resolution();
    if prior.occlusion_logits.resolution() != (h4, w4) {
        return Err(CoreError::invalid_argument(
            "prior flow and occlusion resolutions differ",
        ));
    }
    if h4 % 8 != 0 || w4 % 8 != 0 || h4 / 8 < 2 || w4 / 8 < 2 {
        return Err(CoreError::invalid_argument(format!(
            "prior resolution ({h4}, {w4}) must be 8x a start resolution of at least 2"
        )));
    }
    let start = (h4 / 8, w4 / 8);
    Ok(RefinementState {
        flow: resize_field(&prior.flow, start)?,
        occlusion_logits: resize_tensor(&prior.occlusion_logits, start)?,
        flow_residual_acc: ImageTensor::zeros(start.0, start.1, 2),
        occlusion_residual_acc: ImageTensor::zeros(start.0, start.1, 1),
        iteration: 0,
        prior: prior.clone(),
    })
}

/// One refinement iteration.
///
/// The first iteration runs at the state's own (coarsest) resolution; every
/// later iteration doubles it. `src_feat` must be the source feature at the
/// target resolution.
pub fn refine_step(
    state: &RefinementState,
    volume: &CorrelationVolume,
    src_feat: &ImageTensor,
    updater: &dyn UpdaterNetwork,
    r: usize,
) -> Result<RefinementState> {
    let (h, w) = state.resolution();
    let target = if state.iteration == 0 {
        (h, w)
    } else {
        (h * 2, w * 2)
    };
    if src_feat.resolution() != target {
        return Err(CoreError::invalid_argument(format!(
            "source feature at {:?} is off schedule: iteration {} runs at {:?}",
            src_feat.resolution(),
            state.iteration + 1,
            target
        )));
    }

    let up_flow = resize_field(&state.flow, target)?;
    let up_flow_acc = resize_tensor(&state.flow_residual_acc, target)?;
    let up_occ_acc = resize_tensor(&state.occlusion_residual_acc, target)?;

    let correlation = lookup(volume, &up_flow, r)?;
    let warped = bilinear_sample(src_feat, &up_flow)?;
    let out = updater.update(&up_flow, &correlation, &warped)?;
    if out.flow_residual.resolution() != target
        || out.flow_residual.channels() != 2
        || out.occlusion_residual.resolution() != target
        || out.occlusion_residual.channels() != 1
    {
        return Err(CoreError::invalid_configuration(
            "updater output shapes do not match the iteration resolution",
        ));
    }

    let flow_residual_acc = up_flow_acc.add(&out.flow_residual)?;
    let occlusion_residual_acc = up_occ_acc.add(&out.occlusion_residual)?;
    let flow = add_flow_residual(&resize_field(&state.prior.flow, target)?, &flow_residual_acc);
    let occlusion_logits =
        resize_tensor(&state.prior.occlusion_logits, target)?.add(&occlusion_residual_acc)?;

    Ok(RefinementState {
        prior: state.prior.clone(),
        iteration: state.iteration + 1,
        flow,
        occlusion_logits,
        flow_residual_acc,
        occlusion_residual_acc,
    })
}

/// Run the full refinement: one iteration per source feature, returning the
/// refined flow and sigmoid occlusion map of every iteration in ascending
/// resolution.
pub fn run_refinement(
    prior: &PriorMotionOutput,
    volume: &CorrelationVolume,
    feature_pyramid: &[ImageTensor],
    updater: &dyn UpdaterNetwork,
    r: usize,
) -> Result<Vec<(FlowField, OcclusionMap)>> {
    let (h4, w4) = prior.flow.resolution();
    let schedule = truncated_schedule((h4 * 4, w4 * 4), feature_pyramid.len().clamp(1, 6))?;
    if feature_pyramid.len() != schedule.len() {
        return Err(CoreError::invalid_configuration(format!(
            "feature pyramid has {} levels, schedule has {}",
            feature_pyramid.len(),
            schedule.len()
        )));
    }
    let mut state = init_refinement(prior)?;
    let mut outputs = Vec::with_capacity(schedule.len());
    for (feat, &res) in feature_pyramid.iter().zip(&schedule) {
        if feat.resolution() != res {
            return Err(CoreError::invalid_configuration(format!(
                "feature pyramid level at {:?} does not match schedule entry {:?}",
                feat.resolution(),
                res
            )));
        }
        state = refine_step(&state, volume, feat, updater, r)?;
        outputs.push((
            state.flow.clone(),
            OcclusionMap::from_logits(&state.occlusion_logits)?,
        ));
    }
    Ok(outputs)
}
