//! Keypoint JSON files, one per image:
//! `{"points": [[x, y], ...], "jacobians": [[[a, b], [c, d]], ...]}`
//! in normalized coordinates.

use std::fs;
use std::path::Path;

use flowforge_core::prior::KeypointSet;
use flowforge_core::GridCoord;
use serde::{Deserialize, Serialize};

use crate::error::{FlowForgeError, Result};

#[derive(Serialize, Deserialize)]
struct KeypointFile {
    points: Vec<[f64; 2]>,
    jacobians: Vec<[[f64; 2]; 2]>,
}

pub fn load_keypoints(path: &Path) -> Result<KeypointSet> {
    let bytes = fs::read(path).map_err(|e| FlowForgeError::io(path, e))?;
    let file: KeypointFile = serde_json::from_slice(&bytes)
        .map_err(|e| FlowForgeError::format(path, 0, format!("bad keypoint JSON: {e}")))?;
    let points = file
        .points
        .iter()
        .map(|&[x, y]| GridCoord::new(x, y))
        .collect();
    KeypointSet::new(points, file.jacobians).map_err(Into::into)
}

pub fn save_keypoints(kp: &KeypointSet, path: &Path) -> Result<()> {
    let file = KeypointFile {
        points: kp.points().iter().map(|p| [p.x, p.y]).collect(),
        jacobians: kp.jacobians().to_vec(),
    };
    let mut bytes = serde_json::to_vec_pretty(&file).expect("keypoints serialize");
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| FlowForgeError::io(path, e))
}
