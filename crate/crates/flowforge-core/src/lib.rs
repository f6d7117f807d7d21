//! Deterministic motion engine for keypoint-driven face animation.
//!
//! The crate implements the full motion pipeline on the CPU with plain
//! `f64` arithmetic: coarse prior flow from keypoints and affine Jacobians,
//! a 4D structure correlation volume with a pooled pyramid, coarse-to-fine
//! iterative flow refinement, occlusion-composited generation, and the
//! forward training losses. Learned networks are replaced by seeded
//! deterministic reference networks behind pluggable traits, so every
//! geometric operation is verifiable by oracles and finite differences.
//!
//! The crate is `no_std` (with `alloc`); all IO, file formats, and the CLI
//! live in the companion `flowforge` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod correlation;
pub mod error;
pub mod generate;
pub mod gradcheck;
pub mod grid;
pub mod losses;
pub mod nn;
pub mod pipeline;
pub mod prior;
pub mod refine;
pub mod rng;
pub mod tensor;

pub use error::{CoreError, Result};
pub use grid::{
    bilinear_sample, bilinear_sample_jvp, identity_grid, resize_field, FlowField, GridCoord,
};
pub use tensor::{resize_tensor, ImageTensor};
