//! Finite-difference verification of the analytic derivative paths.
//!
//! Central differences are the independent oracle: they only ever invoke
//! the forward operations. The suites here back both the `gradcheck` CLI
//! subcommand and the acceptance tests.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::correlation::{non_prior_init, non_prior_init_jvp, CorrelationVolume};
use crate::grid::{bilinear_sample, bilinear_sample_jvp, FlowField, GridCoord};
use crate::rng::SplitMix64;
use crate::tensor::ImageTensor;

/// Finite-difference step in the perturbed parameter.
pub const FD_STEP: f64 = 1e-3;
/// Maximum allowed relative error between analytic and central-difference
/// derivatives.
pub const FD_TOLERANCE: f64 = 1e-4;

/// Outcome of one derivative suite.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: String,
    pub cases: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Per-case relative error: the largest component deviation normalized by
/// the largest derivative magnitude of the case. Componentwise ratios are
/// ill-posed where a single derivative happens to vanish.
fn case_rel_err(analytic: &[f64], fd: &[f64]) -> f64 {
    let mut num = 0.0f64;
    let mut den = 1e-9f64;
    for (a, f) in analytic.iter().zip(fd) {
        num = num.max((a - f).abs());
        den = den.max(a.abs()).max(f.abs());
    }
    num / den
}

/// Warp derivative vs. central differences on random smooth fields and
/// interior flows (kept away from cell boundaries so the difference stays
/// inside one bilinear cell).
pub fn check_bilinear_sample_jvp(seed: u64, cases: usize) -> SuiteReport {
    let mut rng = SplitMix64::new(seed);
    let (h, w) = (8usize, 8usize);
    let mut max_rel = 0.0f64;
    for _ in 0..cases {
        let mut field = ImageTensor::zeros(h, w, 2);
        for v in field.data_mut() {
            *v = rng.symmetric(1.0);
        }
        let (fh, fw) = (3usize, 3usize);
        let mut flow = FlowField::constant(fh, fw, GridCoord::new(0.0, 0.0));
        let mut tangent = FlowField::constant(fh, fw, GridCoord::new(0.0, 0.0));
        let sx = 0.5 * (w - 1) as f64;
        let sy = 0.5 * (h - 1) as f64;
        for y in 0..fh {
            for x in 0..fw {
                let px = libm::floor(rng.uniform(0.0, (w - 2) as f64)) + rng.uniform(0.1, 0.9);
                let py = libm::floor(rng.uniform(0.0, (h - 2) as f64)) + rng.uniform(0.1, 0.9);
                flow.set_coord(y, x, GridCoord::new(px / sx - 1.0, py / sy - 1.0));
                tangent.set_coord(y, x, GridCoord::new(rng.symmetric(1.0), rng.symmetric(1.0)));
            }
        }
        let analytic = bilinear_sample_jvp(&field, &flow, &tangent).expect("valid inputs");
        let mut plus = flow.clone();
        let mut minus = flow.clone();
        let n = fh * fw;
        for i in 0..n {
            plus.x_plane_mut()[i] += FD_STEP * tangent.x_plane()[i];
            minus.x_plane_mut()[i] -= FD_STEP * tangent.x_plane()[i];
            plus.y_plane_mut()[i] += FD_STEP * tangent.y_plane()[i];
            minus.y_plane_mut()[i] -= FD_STEP * tangent.y_plane()[i];
        }
        let fp = bilinear_sample(&field, &plus).expect("valid inputs");
        let fm = bilinear_sample(&field, &minus).expect("valid inputs");
        let fd: Vec<f64> = fp
            .data()
            .iter()
            .zip(fm.data())
            .map(|(p, m)| (p - m) / (2.0 * FD_STEP))
            .collect();
        max_rel = max_rel.max(case_rel_err(analytic.data(), &fd));
    }
    SuiteReport {
        name: String::from("bilinear_sample_jvp"),
        cases,
        max_rel_err: max_rel,
        tolerance: FD_TOLERANCE,
        passed: max_rel < FD_TOLERANCE,
    }
}

/// Soft-argmax initialization derivative (with respect to volume entries)
/// vs. central differences.
pub fn check_non_prior_init_jvp(seed: u64, cases: usize) -> SuiteReport {
    let mut rng = SplitMix64::new(seed);
    let (h, w) = (8usize, 8usize);
    let n = h * w;
    let mut max_rel = 0.0f64;
    for _ in 0..cases {
        let base: Vec<f64> = (0..n * n).map(|_| rng.symmetric(1.0)).collect();
        let tangent: Vec<f64> = (0..n * n).map(|_| rng.symmetric(1.0)).collect();
        let volume = CorrelationVolume::from_levels(h, w, vec![base.clone()]).expect("valid");
        let analytic = non_prior_init_jvp(&volume, &tangent).expect("valid");
        let mut plus = base.clone();
        let mut minus = base;
        for i in 0..n * n {
            plus[i] += FD_STEP * tangent[i];
            minus[i] -= FD_STEP * tangent[i];
        }
        let qp = non_prior_init(&CorrelationVolume::from_levels(h, w, vec![plus]).expect("valid"));
        let qm = non_prior_init(&CorrelationVolume::from_levels(h, w, vec![minus]).expect("valid"));
        let mut an = Vec::with_capacity(2 * n);
        let mut fd = Vec::with_capacity(2 * n);
        for i in 0..n {
            an.push(analytic.x_plane()[i]);
            an.push(analytic.y_plane()[i]);
            fd.push((qp.x_plane()[i] - qm.x_plane()[i]) / (2.0 * FD_STEP));
            fd.push((qp.y_plane()[i] - qm.y_plane()[i]) / (2.0 * FD_STEP));
        }
        max_rel = max_rel.max(case_rel_err(&an, &fd));
    }
    SuiteReport {
        name: String::from("non_prior_init_jvp"),
        cases,
        max_rel_err: max_rel,
        tolerance: FD_TOLERANCE,
        passed: max_rel < FD_TOLERANCE,
    }
}

/// Run both derivative suites with 50 cases each.
pub fn run_all(seed: u64) -> Vec<SuiteReport> {
    vec![
        check_bilinear_sample_jvp(seed, 50),
        check_non_prior_init_jvp(seed ^ 0x9E37_79B9_7F4A_7C15, 50),
    ]
}
