//! End-to-end orchestration of one animation step: prior motion, structure
//! encoding, correlation volume, refinement, and generation.
//!
//! Source-side work (keypoints, feature pyramid, source structure feature)
//! is computed once per source and reused across frames; the volume depends
//! on the driving frame and is rebuilt per frame.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use crate::correlation::{
    build_volume, non_prior_init, CorrelationVolume, SeededStructureEncoder, StructureEncoder,
};
use crate::error::{CoreError, Result};
use crate::generate::{
    generate, FeaturePyramid, ImageDecoder, ImageEncoder, OcclusionMap, SeededDecoder,
    SeededEncoder, StubDecoder, StubEncoder,
};
use crate::grid::{resize_field, FlowField};
use crate::prior::{
    offset_keypoints, prior_motion_with_keypoints, render_heatmaps, KeypointSet,
    PriorMotionOutput, PriorMotionProvider, SeededPriorNet,
};
use crate::refine::{run_refinement, SeededUpdater, UpdaterNetwork, ZeroUpdater};
use crate::tensor::{resize_tensor, ImageTensor};

/// Seeds of the pluggable network components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComponentSeeds {
    pub prior: u64,
    pub structure: u64,
    pub updater: u64,
    pub encoder: u64,
    pub decoder: u64,
    pub extractor: u64,
}

impl Default for ComponentSeeds {
    fn default() -> Self {
        Self {
            prior: 0x70_01,
            structure: 0x70_02,
            updater: 0x70_03,
            encoder: 0x70_04,
            decoder: 0x70_05,
            extractor: 0x70_06,
        }
    }
}

/// Per-component stub switches. Stubs replace learned blocks with exact
/// geometric maps so pipeline invariants are testable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StubFlags {
    /// Zero-residual updater: refined flows stay `resize(F_0)`.
    pub updater: bool,
    /// Feature pyramid levels are resized source images.
    pub encoder: bool,
    /// Decoder is a resize ladder with no final activation.
    pub decoder: bool,
    /// Occlusion maps are forced to constant 1 (full visibility).
    pub occlusion: bool,
}

/// Engine configuration. The JSON config file mirrors these fields.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// Number of keypoints K.
    pub keypoints: usize,
    /// Correlation lookup patch radius r.
    pub radius: usize,
    /// Correlation pyramid levels P (level count is P+1).
    pub pyramid_levels: usize,
    /// Refinement iteration count; `None` runs the full 6-entry schedule.
    pub iterations: Option<usize>,
    /// Gaussian heatmap sigma in normalized coordinates.
    pub heatmap_sigma: f64,
    /// Adjust driving keypoints by the offset between the first driving
    /// frame and the source keypoints.
    pub relative_motion: bool,
    pub seeds: ComponentSeeds,
    pub stubs: StubFlags,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            keypoints: 10,
            radius: 3,
            pyramid_levels: 1,
            iterations: None,
            heatmap_sigma: 0.1,
            relative_motion: false,
            seeds: ComponentSeeds::default(),
            stubs: StubFlags::default(),
        }
    }
}

impl EngineConfig {
    pub fn iterations(&self) -> usize {
        self.iterations.unwrap_or(6)
    }

    /// Validate the configuration on its own.
    pub fn validate(&self) -> Result<()> {
        if self.keypoints == 0 {
            return Err(CoreError::invalid_configuration("keypoints must be >= 1"));
        }
        if !(self.heatmap_sigma > 0.0) {
            return Err(CoreError::invalid_configuration(
                "heatmap sigma must be positive",
            ));
        }
        if !(1..=6).contains(&self.iterations()) {
            return Err(CoreError::invalid_configuration(
                "iterations must be between 1 and 6",
            ));
        }
        Ok(())
    }

    /// Validate the configuration against an image resolution.
    pub fn validate_for(&self, resolution: (usize, usize)) -> Result<()> {
        self.validate()?;
        let (h, w) = resolution;
        if h % 32 != 0 || w % 32 != 0 || h / 32 < 2 || w / 32 < 2 {
            return Err(CoreError::invalid_argument(format!(
                "image resolution ({h}, {w}) must be divisible by 32 with at least 2 pixels at 1/32 scale"
            )));
        }
        let p = self.pyramid_levels;
        if (h / 4) % (1 << p) != 0 || (w / 4) % (1 << p) != 0 {
            return Err(CoreError::invalid_argument(format!(
                "quarter resolution ({}, {}) must be divisible by 2^{p}",
                h / 4,
                w / 4
            )));
        }
        Ok(())
    }
}

/// Source-side computations shared across frames. Immutable once built.
pub struct SourceCache {
    keypoints: KeypointSet,
    pyramid: FeaturePyramid,
    structure_feature: ImageTensor,
}

impl SourceCache {
    pub fn keypoints(&self) -> &KeypointSet {
        &self.keypoints
    }

    pub fn pyramid(&self) -> &FeaturePyramid {
        &self.pyramid
    }

    pub fn structure_feature(&self) -> &ImageTensor {
        &self.structure_feature
    }
}

/// One animated frame with its intermediates.
pub struct FrameOutput {
    pub image: ImageTensor,
    pub refined: Vec<(FlowField, OcclusionMap)>,
    pub prior: PriorMotionOutput,
}

/// The assembled engine: configuration plus the pluggable components.
pub struct Engine {
    config: EngineConfig,
    provider: Box<dyn PriorMotionProvider + Send + Sync>,
    structure: Box<dyn StructureEncoder + Send + Sync>,
    updater: Box<dyn UpdaterNetwork + Send + Sync>,
    encoder: Box<dyn ImageEncoder + Send + Sync>,
    decoder: Box<dyn ImageDecoder + Send + Sync>,
}

impl Engine {
    /// Build an engine with seeded (or stubbed, per flags) components.
    pub fn new(config: EngineConfig) -> Result<Self> {
        config.validate()?;
        let iterations = config.iterations();
        let provider: Box<dyn PriorMotionProvider + Send + Sync> = Box::new(SeededPriorNet::new(
            config.keypoints,
            config.heatmap_sigma,
            config.seeds.prior,
        ));
        let structure: Box<dyn StructureEncoder + Send + Sync> = Box::new(SeededStructureEncoder::new(
            config.keypoints,
            config.seeds.structure,
        ));
        let encoder: Box<dyn ImageEncoder + Send + Sync> = if config.stubs.encoder {
            Box::new(StubEncoder::new(iterations))
        } else {
            Box::new(SeededEncoder::new(iterations, config.seeds.encoder))
        };
        let decoder: Box<dyn ImageDecoder + Send + Sync> = if config.stubs.decoder {
            Box::new(StubDecoder)
        } else {
            Box::new(SeededDecoder::new(config.seeds.decoder))
        };
        if encoder.channels() != decoder.channels() {
            return Err(CoreError::invalid_configuration(format!(
                "encoder emits {} channels but the decoder blends {}: stub flags must pair",
                encoder.channels(),
                decoder.channels()
            )));
        }
        let corr_channels =
            (config.pyramid_levels + 1) * (2 * config.radius + 1) * (2 * config.radius + 1);
        let updater: Box<dyn UpdaterNetwork + Send + Sync> = if config.stubs.updater {
            Box::new(ZeroUpdater)
        } else {
            Box::new(SeededUpdater::new(
                corr_channels,
                encoder.channels(),
                config.seeds.updater,
            ))
        };
        Ok(Self {
            config,
            provider,
            structure,
            updater,
            encoder,
            decoder,
        })
    }

    /// Swap in a different prior provider (keypoint files, an alternate
    /// motion model). Downstream stages consume only its outputs.
    pub fn with_provider(mut self, provider: Box<dyn PriorMotionProvider + Send + Sync>) -> Self {
        self.provider = provider;
        self
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn provider(&self) -> &dyn PriorMotionProvider {
        self.provider.as_ref()
    }

    /// Build the per-source cache: keypoints, feature pyramid, and the
    /// source structure feature.
    pub fn prepare_source(&self, source: &ImageTensor) -> Result<SourceCache> {
        self.config.validate_for(source.resolution())?;
        let keypoints = self
            .provider
            .source_keypoints(source)
            .map_err(|e| e.at_stage("prior"))?;
        if keypoints.count() != self.config.keypoints {
            return Err(CoreError::Provider(format!(
                "provider returned {} keypoints, config expects {}",
                keypoints.count(),
                self.config.keypoints
            ))
            .at_stage("prior"));
        }
        let pyramid = self
            .encoder
            .encode(source)
            .map_err(|e| e.at_stage("encode"))?;
        let (h, w) = source.resolution();
        let (h4, w4) = (h / 4, w / 4);
        let source_q = resize_tensor(source, (h4, w4)).map_err(|e| e.at_stage("structure"))?;
        let heat = render_heatmaps(&keypoints, (h4, w4), self.config.heatmap_sigma)
            .map_err(|e| e.at_stage("structure"))?;
        let structure_feature = self
            .structure
            .encode_source(&source_q, &heat)
            .map_err(|e| e.at_stage("structure"))?;
        Ok(SourceCache {
            keypoints,
            pyramid,
            structure_feature,
        })
    }

    fn driving_structure(&self, drv_kp: &KeypointSet, res4: (usize, usize)) -> Result<ImageTensor> {
        let heat = render_heatmaps(drv_kp, res4, self.config.heatmap_sigma)
            .map_err(|e| e.at_stage("structure"))?;
        let feat = self
            .structure
            .encode_driving(&heat)
            .map_err(|e| e.at_stage("structure"))?;
        Ok(feat)
    }

    fn build_frame_volume(
        &self,
        cache: &SourceCache,
        drv_kp: &KeypointSet,
        res4: (usize, usize),
    ) -> Result<CorrelationVolume> {
        let drv_feat = self.driving_structure(drv_kp, res4)?;
        if drv_feat.channels() != cache.structure_feature.channels() {
            return Err(CoreError::invalid_configuration(
                "structure encoders disagree on channels",
            )
            .at_stage("structure"));
        }
        build_volume(
            &drv_feat,
            &cache.structure_feature,
            self.config.pyramid_levels,
        )
        .map_err(|e| e.at_stage("correlation"))
    }

    fn refine_and_generate(
        &self,
        cache: &SourceCache,
        prior: PriorMotionOutput,
        volume: &CorrelationVolume,
    ) -> Result<FrameOutput> {
        let mut refined = run_refinement(
            &prior,
            volume,
            cache.pyramid.levels(),
            self.updater.as_ref(),
            self.config.radius,
        )
        .map_err(|e| e.at_stage("refine"))?;
        if self.config.stubs.occlusion {
            for (flow, occ) in refined.iter_mut() {
                let (h, w) = flow.resolution();
                *occ = OcclusionMap::constant(h, w, 1.0).map_err(|e| e.at_stage("refine"))?;
            }
        }
        let image = generate(&cache.pyramid, &refined, self.decoder.as_ref())
            .map_err(|e| e.at_stage("generate"))?;
        Ok(FrameOutput {
            image,
            refined,
            prior,
        })
    }

    /// Animate one frame against a prepared source cache.
    ///
    /// `relative_reference` carries the first driving frame's keypoints
    /// when relative motion transfer is on.
    pub fn frame_with_cache(
        &self,
        cache: &SourceCache,
        source: &ImageTensor,
        driving: &ImageTensor,
        relative_reference: Option<&KeypointSet>,
    ) -> Result<FrameOutput> {
        if driving.resolution() != source.resolution() {
            return Err(CoreError::invalid_argument(
                "driving resolution must match the source",
            )
            .at_stage("prior"));
        }
        let drv_raw = self
            .provider
            .driving_keypoints(driving)
            .map_err(|e| e.at_stage("prior"))?;
        let drv_kp = match relative_reference {
            Some(first) => offset_keypoints(&drv_raw, first, &cache.keypoints)
                .map_err(|e| e.at_stage("prior"))?,
            None => drv_raw,
        };
        let (_, drv_kp, prior) = prior_motion_with_keypoints(
            self.provider.as_ref(),
            source,
            driving,
            cache.keypoints.clone(),
            drv_kp,
        )
        .map_err(|e| e.at_stage("prior"))?;
        let volume = self.build_frame_volume(cache, &drv_kp, prior.flow.resolution())?;
        self.refine_and_generate(cache, prior, &volume)
    }

    /// Run the full pipeline on one source/driving pair.
    pub fn animate_frame(&self, source: &ImageTensor, driving: &ImageTensor) -> Result<FrameOutput> {
        let cache = self.prepare_source(source)?;
        let relative = if self.config.relative_motion {
            Some(
                self.provider
                    .driving_keypoints(driving)
                    .map_err(|e| e.at_stage("prior"))?,
            )
        } else {
            None
        };
        self.frame_with_cache(&cache, source, driving, relative.as_ref())
    }

    /// Animate a frame sequence, reusing the source-side cache.
    pub fn animate_sequence(
        &self,
        source: &ImageTensor,
        frames: &[ImageTensor],
    ) -> Result<Vec<ImageTensor>> {
        if frames.is_empty() {
            return Ok(Vec::new());
        }
        let cache = self.prepare_source(source)?;
        let relative = if self.config.relative_motion {
            Some(
                self.provider
                    .driving_keypoints(&frames[0])
                    .map_err(|e| e.at_stage("prior").at_stage("frame 0"))?,
            )
        } else {
            None
        };
        let mut out = Vec::with_capacity(frames.len());
        for (i, frame) in frames.iter().enumerate() {
            let result = self
                .frame_with_cache(&cache, source, frame, relative.as_ref())
                .map_err(|e| e.at_stage(format!("frame {i}")))?;
            out.push(result.image);
        }
        Ok(out)
    }

    /// Build the structure correlation volume for one source/driving pair.
    pub fn correlation_volume(
        &self,
        source: &ImageTensor,
        driving: &ImageTensor,
    ) -> Result<CorrelationVolume> {
        let cache = self.prepare_source(source)?;
        if driving.resolution() != source.resolution() {
            return Err(CoreError::invalid_argument(
                "driving resolution must match the source",
            )
            .at_stage("structure"));
        }
        let drv_kp = self
            .provider
            .driving_keypoints(driving)
            .map_err(|e| e.at_stage("prior"))?;
        let (h, w) = source.resolution();
        self.build_frame_volume(&cache, &drv_kp, (h / 4, w / 4))
    }

    /// The fully non-prior variant: the coarse flow comes from the
    /// correlation volume's soft-argmax instead of the keypoint prior, and
    /// the initial occlusion logits are zero.
    pub fn non_prior_frame(
        &self,
        source: &ImageTensor,
        driving: &ImageTensor,
    ) -> Result<FrameOutput> {
        let cache = self.prepare_source(source)?;
        if driving.resolution() != source.resolution() {
            return Err(CoreError::invalid_argument(
                "driving resolution must match the source",
            )
            .at_stage("prior"));
        }
        let drv_kp = self
            .provider
            .driving_keypoints(driving)
            .map_err(|e| e.at_stage("prior"))?;
        let (h, w) = source.resolution();
        let (h4, w4) = (h / 4, w / 4);
        let volume = self.build_frame_volume(&cache, &drv_kp, (h4, w4))?;
        let q = non_prior_init(&volume);
        let flow = resize_field(&q, (h4, w4)).map_err(|e| e.at_stage("correlation"))?;
        let prior = PriorMotionOutput {
            flow,
            occlusion_logits: ImageTensor::zeros(h4, w4, 1),
        };
        self.refine_and_generate(&cache, prior, &volume)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{identity_grid, GridCoord};
    use crate::prior::StaticPrior;
    use crate::rng::SplitMix64;
    use alloc::vec;

    fn test_image(res: usize, seed: u64) -> ImageTensor {
        let mut rng = SplitMix64::new(seed);
        let mut img = ImageTensor::zeros(res, res, 3);
        for v in img.data_mut() {
            *v = rng.next_f64();
        }
        img
    }

    fn identity_prior_provider(k: usize) -> StaticPrior {
        let pts: Vec<GridCoord> = (0..k)
            .map(|i| GridCoord::new(-0.5 + 0.2 * i as f64, 0.1 * i as f64 - 0.2))
            .collect();
        let kp = KeypointSet::with_identity_jacobians(pts).unwrap();
        StaticPrior::new(kp.clone(), kp).unwrap()
    }

    fn stub_config(k: usize) -> EngineConfig {
        EngineConfig {
            keypoints: k,
            radius: 1,
            pyramid_levels: 1,
            stubs: StubFlags {
                updater: true,
                encoder: true,
                decoder: true,
                occlusion: true,
            },
            ..EngineConfig::default()
        }
    }

    #[test]
    fn identity_setup_reproduces_source() {
        let source = test_image(64, 1);
        let engine = Engine::new(stub_config(3))
            .unwrap()
            .with_provider(Box::new(identity_prior_provider(3)));
        let out = engine.animate_frame(&source, &source).unwrap();
        assert_eq!(out.image.resolution(), (64, 64));
        for (a, b) in out.image.data().iter().zip(source.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        // The prior flow is the identity.
        assert_eq!(out.prior.flow, identity_grid(16, 16).unwrap());
    }

    #[test]
    fn deterministic_runs_bit_identical() {
        let source = test_image(64, 2);
        let driving = test_image(64, 3);
        let config = EngineConfig {
            keypoints: 4,
            radius: 2,
            ..EngineConfig::default()
        };
        let run = || {
            let engine = Engine::new(config.clone()).unwrap();
            engine.animate_frame(&source, &driving).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.image.data(), b.image.data());
        assert_eq!(a.refined.len(), b.refined.len());
        for ((fa, oa), (fb, ob)) in a.refined.iter().zip(&b.refined) {
            assert_eq!(fa, fb);
            assert_eq!(oa.tensor(), ob.tensor());
        }
        assert_eq!(a.prior.flow, b.prior.flow);
    }

    #[test]
    fn six_intermediates_per_frame() {
        let source = test_image(64, 4);
        let driving = test_image(64, 5);
        let engine = Engine::new(EngineConfig {
            keypoints: 2,
            radius: 1,
            ..EngineConfig::default()
        })
        .unwrap();
        let out = engine.animate_frame(&source, &driving).unwrap();
        assert_eq!(out.refined.len(), 6);
        let schedule = crate::refine::resolution_schedule((64, 64)).unwrap();
        for (i, (flow, _)) in out.refined.iter().enumerate() {
            assert_eq!(flow.resolution(), schedule[i]);
        }
    }

    #[test]
    fn sequence_matches_single_frame_bit_exactly() {
        let source = test_image(64, 6);
        let driving = test_image(64, 7);
        let engine = Engine::new(EngineConfig {
            keypoints: 3,
            radius: 1,
            ..EngineConfig::default()
        })
        .unwrap();
        let single = engine.animate_frame(&source, &driving).unwrap();
        let seq = engine
            .animate_sequence(&source, core::slice::from_ref(&driving))
            .unwrap();
        assert_eq!(seq.len(), 1);
        assert_eq!(seq[0].data(), single.image.data());
    }

    #[test]
    fn empty_sequence_is_empty() {
        let source = test_image(64, 8);
        let engine = Engine::new(EngineConfig::default()).unwrap();
        assert!(engine.animate_sequence(&source, &[]).unwrap().is_empty());
    }

    #[test]
    fn repeated_frames_give_identical_outputs() {
        let source = test_image(64, 9);
        let driving = test_image(64, 10);
        let engine = Engine::new(EngineConfig {
            keypoints: 2,
            radius: 1,
            iterations: Some(3),
            ..EngineConfig::default()
        })
        .unwrap();
        let out = engine
            .animate_sequence(&source, &[driving.clone(), driving.clone()])
            .unwrap();
        assert_eq!(out[0].data(), out[1].data());
    }

    #[test]
    fn non_prior_identity_with_delta_volume() {
        // Orthonormal per-pixel structure features make the volume a
        // scaled identity, so the soft-argmax initialization returns the
        // identity flow; with stubs and full visibility the frame equals
        // the source.
        struct DeltaEncoder;
        impl StructureEncoder for DeltaEncoder {
            fn encode_source(
                &self,
                image_q: &ImageTensor,
                _heat: &ImageTensor,
            ) -> crate::error::Result<ImageTensor> {
                let (h, w) = image_q.resolution();
                let n = h * w;
                let mut f = ImageTensor::zeros(h, w, n);
                for i in 0..n {
                    f.plane_mut(i)[i] = 1000.0;
                }
                Ok(f)
            }
            fn encode_driving(&self, heat: &ImageTensor) -> crate::error::Result<ImageTensor> {
                let (h, w) = heat.resolution();
                let n = h * w;
                let mut f = ImageTensor::zeros(h, w, n);
                for i in 0..n {
                    f.plane_mut(i)[i] = 1.0;
                }
                Ok(f)
            }
        }
        let source = test_image(64, 11);
        let mut engine = Engine::new(stub_config(2))
            .unwrap()
            .with_provider(Box::new(identity_prior_provider(2)));
        engine.structure = Box::new(DeltaEncoder);
        let out = engine.non_prior_frame(&source, &source).unwrap();
        // Initial flow is the identity up to softmax saturation.
        let grid = identity_grid(16, 16).unwrap();
        for i in 0..256 {
            assert!((out.prior.flow.x_plane()[i] - grid.x_plane()[i]).abs() < 1e-6);
            assert!((out.prior.flow.y_plane()[i] - grid.y_plane()[i]).abs() < 1e-6);
        }
        for (a, b) in out.image.data().iter().zip(source.data()) {
            assert!((a - b).abs() < 1e-5);
        }
        assert_eq!(out.refined.len(), 6);
    }

    #[test]
    fn non_prior_deterministic() {
        let source = test_image(64, 12);
        let driving = test_image(64, 13);
        let config = EngineConfig {
            keypoints: 2,
            radius: 1,
            iterations: Some(2),
            ..EngineConfig::default()
        };
        let a = Engine::new(config.clone())
            .unwrap()
            .non_prior_frame(&source, &driving)
            .unwrap();
        let b = Engine::new(config)
            .unwrap()
            .non_prior_frame(&source, &driving)
            .unwrap();
        assert_eq!(a.image.data(), b.image.data());
    }

    #[test]
    fn provider_swap_keeps_downstream_behavior() {
        // Any provider producing the same (F_0, O_0) yields the same frame.
        let source = test_image(64, 14);
        let engine_a = Engine::new(stub_config(2))
            .unwrap()
            .with_provider(Box::new(identity_prior_provider(2)));
        let out_a = engine_a.animate_frame(&source, &source).unwrap();

        // A different provider type with identical outputs.
        let pts: Vec<GridCoord> = (0..2)
            .map(|i| GridCoord::new(-0.5 + 0.2 * i as f64, 0.1 * i as f64 - 0.2))
            .collect();
        let kp = KeypointSet::with_identity_jacobians(pts).unwrap();
        let provider = StaticPrior::new(kp.clone(), kp)
            .unwrap()
            .with_occlusion_logits(ImageTensor::zeros(16, 16, 1))
            .unwrap();
        let engine_b = Engine::new(stub_config(2))
            .unwrap()
            .with_provider(Box::new(provider));
        let out_b = engine_b.animate_frame(&source, &source).unwrap();
        assert_eq!(out_a.image.data(), out_b.image.data());
    }

    #[test]
    fn config_validation() {
        assert!(EngineConfig {
            keypoints: 0,
            ..EngineConfig::default()
        }
        .validate()
        .is_err());
        assert!(EngineConfig {
            iterations: Some(7),
            ..EngineConfig::default()
        }
        .validate()
        .is_err());
        let cfg = EngineConfig::default();
        assert!(cfg.validate_for((64, 64)).is_ok());
        assert!(cfg.validate_for((65, 64)).is_err());
        assert!(cfg.validate_for((32, 32)).is_err());
        // Pyramid divisibility: H/4 = 16 must divide by 2^P.
        let deep = EngineConfig {
            pyramid_levels: 5,
            ..EngineConfig::default()
        };
        assert!(deep.validate_for((64, 64)).is_err());
    }

    #[test]
    fn errors_carry_stage() {
        let source = test_image(64, 15);
        // Provider returning the wrong keypoint count.
        let engine = Engine::new(stub_config(5))
            .unwrap()
            .with_provider(Box::new(identity_prior_provider(2)));
        match engine.animate_frame(&source, &source) {
            Err(CoreError::Staged { stage, .. }) => assert_eq!(stage, "prior"),
            Err(other) => panic!("expected staged error, got {other:?}"),
            Ok(_) => panic!("expected staged error, got success"),
        }
    }

    #[test]
    fn relative_motion_first_frame_freezes_prior() {
        // With relative transfer, the first driving frame maps its own
        // keypoints onto the source's, so the part flows cancel.
        let source = test_image(64, 16);
        let driving = test_image(64, 17);
        let config = EngineConfig {
            keypoints: 2,
            radius: 1,
            relative_motion: true,
            stubs: StubFlags {
                updater: true,
                encoder: true,
                decoder: true,
                occlusion: true,
            },
            ..EngineConfig::default()
        };
        // Provider detects different keypoints for source and driving but
        // identity Jacobians; with relative transfer the adjusted driving
        // keypoints coincide with the source ones.
        let src_kp = KeypointSet::with_identity_jacobians(vec![
            GridCoord::new(0.2, 0.1),
            GridCoord::new(-0.3, 0.0),
        ])
        .unwrap();
        let drv_kp = KeypointSet::with_identity_jacobians(vec![
            GridCoord::new(0.5, -0.2),
            GridCoord::new(0.1, 0.4),
        ])
        .unwrap();
        let provider = StaticPrior::new(src_kp, drv_kp).unwrap();
        let engine = Engine::new(config).unwrap().with_provider(Box::new(provider));
        let out = engine.animate_frame(&source, &driving).unwrap();
        assert_eq!(out.prior.flow, identity_grid(16, 16).unwrap());
    }
}
