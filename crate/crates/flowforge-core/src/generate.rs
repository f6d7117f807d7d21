//! Occlusion-aware multi-scale image generation.
//!
//! Each level warps a source feature with its refined flow and blends it
//! against the decoded output of the previous level, weighted by the
//! occlusion map: visible content comes from the warp, occluded content
//! from the decoder path. The final level is projected to 3 channels and
//! squashed by a sigmoid.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::grid::{bilinear_sample, FlowField};
use crate::nn::{nearest_upsample2, relu_in_place, sigmoid_in_place, Conv1x1, Conv3x3, WeightScale};
use crate::refine::resolution_schedule;
use crate::rng::SplitMix64;
use crate::tensor::{resize_tensor, ImageTensor};

/// Per-pixel visibility weights in `(0, 1)` (a sigmoid image).
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionMap {
    values: ImageTensor,
}

impl OcclusionMap {
    /// Apply the sigmoid to a 1-channel logit map.
    pub fn from_logits(logits: &ImageTensor) -> Result<Self> {
        if logits.channels() != 1 {
            return Err(CoreError::invalid_argument(
                "occlusion logits must have one channel",
            ));
        }
        let mut values = logits.clone();
        sigmoid_in_place(&mut values);
        Ok(Self { values })
    }

    /// Constant map. Values of exactly 0 or 1 are permitted here as a
    /// diagnostic bypass (full visibility / full occlusion).
    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(CoreError::invalid_argument(
                "occlusion values must lie in [0, 1]",
            ));
        }
        Ok(Self {
            values: ImageTensor::constant(height, width, 1, value),
        })
    }

    pub fn tensor(&self) -> &ImageTensor {
        &self.values
    }

    pub fn resolution(&self) -> (usize, usize) {
        self.values.resolution()
    }
}

/// Multi-scale source features, ascending resolution, one per refinement
/// iteration.
#[derive(Debug, Clone)]
pub struct FeaturePyramid {
    levels: Vec<ImageTensor>,
}

impl FeaturePyramid {
    pub fn new(levels: Vec<ImageTensor>) -> Result<Self> {
        if levels.is_empty() {
            return Err(CoreError::invalid_argument("feature pyramid is empty"));
        }
        for pair in levels.windows(2) {
            let (a, b) = (pair[0].resolution(), pair[1].resolution());
            if b.0 != a.0 * 2 || b.1 != a.1 * 2 {
                return Err(CoreError::invalid_argument(
                    "pyramid resolutions must double per level",
                ));
            }
            if pair[0].channels() != pair[1].channels() {
                return Err(CoreError::invalid_argument(
                    "pyramid levels must share a channel count",
                ));
            }
        }
        Ok(Self { levels })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level(&self, i: usize) -> &ImageTensor {
        &self.levels[i]
    }

    pub fn levels(&self) -> &[ImageTensor] {
        &self.levels
    }

    pub fn channels(&self) -> usize {
        self.levels[0].channels()
    }
}

/// Encodes a source image into one feature tensor per schedule level.
pub trait ImageEncoder {
    fn channels(&self) -> usize;
    fn encode(&self, source: &ImageTensor) -> Result<FeaturePyramid>;
}

/// Stub encoder: level `i` is the source image resized to schedule
/// resolution `i`.
pub struct StubEncoder {
    iterations: usize,
}

impl StubEncoder {
    pub fn new(iterations: usize) -> Self {
        Self { iterations }
    }
}

impl ImageEncoder for StubEncoder {
    fn channels(&self) -> usize {
        3
    }

    fn encode(&self, source: &ImageTensor) -> Result<FeaturePyramid> {
        let mut schedule = resolution_schedule(source.resolution())?;
        schedule.truncate(self.iterations.clamp(1, 6));
        let levels = schedule
            .iter()
            .map(|&res| resize_tensor(source, res))
            .collect::<Result<Vec<_>>>()?;
        FeaturePyramid::new(levels)
    }
}

/// Feature width shared by the seeded encoder and decoder.
pub const FEATURE_CHANNELS: usize = 32;

/// Seeded reference encoder: a stride-1 convolution at full resolution,
/// then one convolution per halving down to the coarsest level.
pub struct SeededEncoder {
    head: Conv3x3,
    down: Vec<Conv3x3>,
    iterations: usize,
}

impl SeededEncoder {
    pub fn new(iterations: usize, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let head = Conv3x3::seeded(3, FEATURE_CHANNELS, 1, WeightScale::FanIn, &mut rng);
        let down = (0..5)
            .map(|_| Conv3x3::seeded(FEATURE_CHANNELS, FEATURE_CHANNELS, 1, WeightScale::FanIn, &mut rng))
            .collect();
        Self {
            head,
            down,
            iterations: iterations.clamp(1, 6),
        }
    }
}

impl ImageEncoder for SeededEncoder {
    fn channels(&self) -> usize {
        FEATURE_CHANNELS
    }

    fn encode(&self, source: &ImageTensor) -> Result<FeaturePyramid> {
        let mut schedule = resolution_schedule(source.resolution())?;
        schedule.truncate(self.iterations);
        let mut feat = self.head.forward(source);
        relu_in_place(&mut feat);
        let mut descending = Vec::with_capacity(6);
        descending.push(feat);
        for conv in &self.down {
            let prev = descending.last().unwrap();
            let (h, w) = prev.resolution();
            let mut next = conv.forward(&resize_tensor(prev, (h / 2, w / 2))?);
            relu_in_place(&mut next);
            descending.push(next);
        }
        // Keep the coarsest `iterations` levels, ascending.
        let mut levels: Vec<ImageTensor> = descending
            .into_iter()
            .take(6)
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        levels.truncate(self.iterations);
        FeaturePyramid::new(levels)
    }
}

/// Decoder contract: lift composited features one level up (residual block
/// plus upsample-conv), and project the final level to an image.
pub trait ImageDecoder {
    fn channels(&self) -> usize;
    /// ResBlock + UpBlock: consume level-`i` output, produce the decoded
    /// tensor at the next (doubled) resolution.
    fn res_up(&self, x: &ImageTensor) -> Result<ImageTensor>;
    /// Final projection to 3 channels plus sigmoid.
    fn finalize(&self, x: &ImageTensor) -> Result<ImageTensor>;
}

/// Stub decoder: `res_up` is a bilinear resize, `finalize` passes the
/// tensor through untouched (no sigmoid), so warps and blends can be
/// verified without network weights.
pub struct StubDecoder;

impl ImageDecoder for StubDecoder {
    fn channels(&self) -> usize {
        3
    }

    fn res_up(&self, x: &ImageTensor) -> Result<ImageTensor> {
        let (h, w) = x.resolution();
        resize_tensor(x, (h * 2, w * 2))
    }

    fn finalize(&self, x: &ImageTensor) -> Result<ImageTensor> {
        if x.channels() != 3 {
            return Err(CoreError::invalid_configuration(
                "stub decoder passes through 3-channel tensors only",
            ));
        }
        Ok(x.clone())
    }
}

/// Seeded reference decoder: a pre-activation 2-layer residual block, then
/// nearest upsample and a convolution; the final projection is pointwise
/// plus sigmoid.
pub struct SeededDecoder {
    res1: Conv3x3,
    res2: Conv3x3,
    up: Conv3x3,
    proj: Conv1x1,
}

impl SeededDecoder {
    pub fn new(seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let res1 = Conv3x3::seeded(FEATURE_CHANNELS, FEATURE_CHANNELS, 1, WeightScale::FanIn, &mut rng);
        let res2 = Conv3x3::seeded(FEATURE_CHANNELS, FEATURE_CHANNELS, 1, WeightScale::FanIn, &mut rng);
        let up = Conv3x3::seeded(FEATURE_CHANNELS, FEATURE_CHANNELS, 1, WeightScale::FanIn, &mut rng);
        let proj = Conv1x1::seeded(FEATURE_CHANNELS, 3, WeightScale::FanIn, &mut rng);
        Self {
            res1,
            res2,
            up,
            proj,
        }
    }
}

impl ImageDecoder for SeededDecoder {
    fn channels(&self) -> usize {
        FEATURE_CHANNELS
    }

    fn res_up(&self, x: &ImageTensor) -> Result<ImageTensor> {
        // Pre-activation residual block.
        let mut a = x.clone();
        relu_in_place(&mut a);
        let mut a = self.res1.forward(&a);
        relu_in_place(&mut a);
        let res = x.add(&self.res2.forward(&a))?;
        Ok(self.up.forward(&nearest_upsample2(&res)))
    }

    fn finalize(&self, x: &ImageTensor) -> Result<ImageTensor> {
        let mut out = self.proj.forward(x);
        sigmoid_in_place(&mut out);
        Ok(out)
    }
}

/// Blend a warped feature against the decoded previous level.
///
/// With no previous level this is `warped * O`; otherwise every value is
/// the convex combination `prev + O * (warped - prev)`, which stays inside
/// the per-pixel envelope of its inputs even in floating point.
pub fn composite_layer(
    warped: &ImageTensor,
    occlusion: &OcclusionMap,
    decoded_prev: Option<&ImageTensor>,
) -> Result<ImageTensor> {
    if warped.resolution() != occlusion.resolution() {
        return Err(CoreError::invalid_argument(
            "warped feature and occlusion resolutions differ",
        ));
    }
    let o = occlusion.tensor().plane(0);
    let mut out = warped.clone();
    match decoded_prev {
        None => {
            for c in 0..out.channels() {
                for (v, &w) in out.plane_mut(c).iter_mut().zip(o) {
                    *v *= w;
                }
            }
        }
        Some(prev) => {
            if prev.resolution() != warped.resolution() || prev.channels() != warped.channels() {
                return Err(CoreError::invalid_argument(
                    "decoded previous level does not match the warped feature",
                ));
            }
            for c in 0..out.channels() {
                let p = prev.plane(c);
                for (i, v) in out.plane_mut(c).iter_mut().enumerate() {
                    *v = p[i] + o[i] * (*v - p[i]);
                }
            }
        }
    }
    Ok(out)
}

/// Run the full generation ladder over all levels and finalize to an image.
pub fn generate(
    pyramid: &FeaturePyramid,
    flows_occlusions: &[(FlowField, OcclusionMap)],
    decoder: &dyn ImageDecoder,
) -> Result<ImageTensor> {
    if flows_occlusions.len() != pyramid.len() {
        return Err(CoreError::invalid_configuration(format!(
            "{} flow/occlusion pairs for {} pyramid levels",
            flows_occlusions.len(),
            pyramid.len()
        )));
    }
    let mut out: Option<ImageTensor> = None;
    for (level, (flow, occ)) in flows_occlusions.iter().enumerate() {
        let feat = pyramid.level(level);
        if flow.resolution() != feat.resolution() || occ.resolution() != feat.resolution() {
            return Err(CoreError::invalid_configuration(
                "flow/occlusion resolution does not match the pyramid level",
            ));
        }
        let warped = bilinear_sample(feat, flow)?;
        let prev = match out.take() {
            None => None,
            Some(prev) => Some(decoder.res_up(&prev)?),
        };
        out = Some(composite_layer(&warped, occ, prev.as_ref())?);
    }
    decoder.finalize(&out.expect("at least one level"))
}
