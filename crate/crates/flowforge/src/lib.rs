//! IO, file formats, visualization, and the command-line surface for the
//! flowforge motion engine.
//!
//! The numerics all live in `flowforge-core`; this crate adds what touches
//! the filesystem: Middlebury flow files, raw float rasters, correlation
//! volume dumps, keypoint and config JSON, PNG/PPM images, the flow
//! colorwheel renderer, and the CLI.

pub use flowforge_core as core;

pub mod cli;
pub mod config;
pub mod error;
pub mod flo;
pub mod images;
pub mod keypoints;
pub mod raster;
pub mod viz;
pub mod volume_io;

pub use error::FlowForgeError;
