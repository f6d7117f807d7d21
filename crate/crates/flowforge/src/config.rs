//! Engine configuration as JSON. The file mirrors `EngineConfig`
//! field-for-field; unknown keys are an error so a typo cannot silently
//! change an experiment.

use std::fs;
use std::path::Path;

use flowforge_core::pipeline::{ComponentSeeds, EngineConfig, StubFlags};
use serde::{Deserialize, Serialize};

use crate::error::{FlowForgeError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedsFile {
    pub prior: u64,
    pub structure: u64,
    pub updater: u64,
    pub encoder: u64,
    pub decoder: u64,
    pub extractor: u64,
}

impl Default for SeedsFile {
    fn default() -> Self {
        ComponentSeeds::default().into()
    }
}

impl From<ComponentSeeds> for SeedsFile {
    fn from(s: ComponentSeeds) -> Self {
        Self {
            prior: s.prior,
            structure: s.structure,
            updater: s.updater,
            encoder: s.encoder,
            decoder: s.decoder,
            extractor: s.extractor,
        }
    }
}

impl From<SeedsFile> for ComponentSeeds {
    fn from(s: SeedsFile) -> Self {
        Self {
            prior: s.prior,
            structure: s.structure,
            updater: s.updater,
            encoder: s.encoder,
            decoder: s.decoder,
            extractor: s.extractor,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StubsFile {
    pub updater: bool,
    pub encoder: bool,
    pub decoder: bool,
    pub occlusion: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub keypoints: usize,
    pub radius: usize,
    pub pyramid_levels: usize,
    pub iterations: Option<usize>,
    pub heatmap_sigma: f64,
    pub relative_motion: bool,
    pub seeds: SeedsFile,
    pub stubs: StubsFile,
}

impl Default for ConfigFile {
    fn default() -> Self {
        EngineConfig::default().into()
    }
}

impl From<EngineConfig> for ConfigFile {
    fn from(c: EngineConfig) -> Self {
        Self {
            keypoints: c.keypoints,
            radius: c.radius,
            pyramid_levels: c.pyramid_levels,
            iterations: c.iterations,
            heatmap_sigma: c.heatmap_sigma,
            relative_motion: c.relative_motion,
            seeds: c.seeds.into(),
            stubs: StubsFile {
                updater: c.stubs.updater,
                encoder: c.stubs.encoder,
                decoder: c.stubs.decoder,
                occlusion: c.stubs.occlusion,
            },
        }
    }
}

impl From<ConfigFile> for EngineConfig {
    fn from(c: ConfigFile) -> Self {
        Self {
            keypoints: c.keypoints,
            radius: c.radius,
            pyramid_levels: c.pyramid_levels,
            iterations: c.iterations,
            heatmap_sigma: c.heatmap_sigma,
            relative_motion: c.relative_motion,
            seeds: c.seeds.into(),
            stubs: StubFlags {
                updater: c.stubs.updater,
                encoder: c.stubs.encoder,
                decoder: c.stubs.decoder,
                occlusion: c.stubs.occlusion,
            },
        }
    }
}

/// Load a config file; missing fields take defaults, unknown keys fail.
pub fn load_config(path: &Path) -> Result<EngineConfig> {
    let bytes = fs::read(path).map_err(|e| FlowForgeError::io(path, e))?;
    let file: ConfigFile = serde_json::from_slice(&bytes)
        .map_err(|e| FlowForgeError::format(path, 0, format!("bad config JSON: {e}")))?;
    Ok(file.into())
}

pub fn save_config(config: &EngineConfig, path: &Path) -> Result<()> {
    let file: ConfigFile = config.clone().into();
    let mut bytes = serde_json::to_vec_pretty(&file).expect("config serializes");
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| FlowForgeError::io(path, e))
}
