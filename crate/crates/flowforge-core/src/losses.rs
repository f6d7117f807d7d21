//! Forward computation of the training objectives: multi-resolution
//! perceptual loss, keypoint equivariance loss, and their unweighted sum.
//!
//! Losses here are diagnostics; no gradients flow anywhere.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::grid::{bilinear_sample, identity_grid, FlowField, GridCoord};
use crate::nn::{relu_in_place, Conv3x3, WeightScale};
use crate::prior::{mat2_det, Mat2, PriorMotionProvider};
use crate::rng::SplitMix64;
use crate::tensor::{resize_tensor, ImageTensor};

/// Layered feature extractor (the perceptual network stand-in). Drop in a
/// pretrained extractor by implementing this trait.
pub trait FeatureExtractor {
    fn extract(&self, image: &ImageTensor) -> Result<Vec<ImageTensor>>;
}

/// Single layer returning the image itself.
pub struct IdentityExtractor;

impl FeatureExtractor for IdentityExtractor {
    fn extract(&self, image: &ImageTensor) -> Result<Vec<ImageTensor>> {
        Ok(vec![image.clone()])
    }
}

/// Seeded 3-layer stride-2 convolution stack; each activation map is one
/// feature layer.
pub struct SeededExtractor {
    conv1: Conv3x3,
    conv2: Conv3x3,
    conv3: Conv3x3,
}

impl SeededExtractor {
    pub fn new(seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        Self {
            conv1: Conv3x3::seeded(3, 8, 2, WeightScale::FanIn, &mut rng),
            conv2: Conv3x3::seeded(8, 16, 2, WeightScale::FanIn, &mut rng),
            conv3: Conv3x3::seeded(16, 16, 2, WeightScale::FanIn, &mut rng),
        }
    }
}

impl FeatureExtractor for SeededExtractor {
    fn extract(&self, image: &ImageTensor) -> Result<Vec<ImageTensor>> {
        if image.channels() != 3 {
            return Err(CoreError::invalid_argument(
                "seeded extractor expects 3-channel images",
            ));
        }
        let mut l1 = self.conv1.forward(image);
        relu_in_place(&mut l1);
        let mut l2 = self.conv2.forward(&l1);
        relu_in_place(&mut l2);
        let mut l3 = self.conv3.forward(&l2);
        relu_in_place(&mut l3);
        Ok(vec![l1, l2, l3])
    }
}

/// The image resolution and three halvings (stopping early if a scale
/// would drop below 2 pixels).
pub fn default_perceptual_resolutions(res: (usize, usize)) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(4);
    let (mut h, mut w) = res;
    for _ in 0..4 {
        if h < 2 || w < 2 {
            break;
        }
        out.push((h, w));
        h /= 2;
        w /= 2;
    }
    out
}

/// Multi-resolution perceptual loss: resize both images to every listed
/// resolution, extract features, sum mean absolute differences over layers
/// and resolutions.
pub fn perceptual_loss(
    target: &ImageTensor,
    generated: &ImageTensor,
    extractor: &dyn FeatureExtractor,
    resolutions: &[(usize, usize)],
) -> Result<f64> {
    if target.resolution() != generated.resolution() || target.channels() != generated.channels() {
        return Err(CoreError::invalid_argument(
            "target and generated images must share a shape",
        ));
    }
    if resolutions.is_empty() {
        return Err(CoreError::invalid_argument(
            "perceptual loss needs at least one resolution",
        ));
    }
    let mut total = 0.0;
    for &res in resolutions {
        let t = resize_tensor(target, res)?;
        let g = resize_tensor(generated, res)?;
        let ft = extractor.extract(&t)?;
        let fg = extractor.extract(&g)?;
        if ft.len() != fg.len() {
            return Err(CoreError::invalid_configuration(
                "extractor returned differing layer counts",
            ));
        }
        for (a, b) in ft.iter().zip(&fg) {
            if a.data().len() != b.data().len() {
                return Err(CoreError::invalid_configuration(
                    "extractor layer shapes differ between images",
                ));
            }
            let mut acc = 0.0;
            for (x, y) in a.data().iter().zip(b.data()) {
                acc += (x - y).abs();
            }
            total += acc / a.data().len() as f64;
        }
    }
    Ok(total)
}

/// Thin-plate-spline kernel `U(r) = r^2 ln r` (zero at the origin).
fn tps_kernel(r2: f64) -> f64 {
    if r2 <= 0.0 {
        0.0
    } else {
        0.5 * r2 * libm::log(r2)
    }
}

/// Dense linear solve by Gaussian elimination with partial pivoting.
fn solve_dense(a: &[f64], b: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let mut pivot = col;
        let mut best = m[col * n + col].abs();
        for row in col + 1..n {
            let v = m[row * n + col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best < 1e-12 {
            return Err(CoreError::invalid_argument(
                "singular system in spline solve",
            ));
        }
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
            }
            x.swap(col, pivot);
        }
        let inv = 1.0 / m[col * n + col];
        for row in col + 1..n {
            let f = m[row * n + col] * inv;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[row * n + k] -= f * m[col * n + k];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for k in col + 1..n {
            acc -= m[col * n + k] * x[k];
        }
        x[col] = acc / m[col * n + col];
    }
    Ok(x)
}

/// Affine point map `p -> A p + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineTransform {
    pub matrix: Mat2,
    pub translation: [f64; 2],
}

impl AffineTransform {
    pub fn identity() -> Self {
        Self {
            matrix: [[1.0, 0.0], [0.0, 1.0]],
            translation: [0.0, 0.0],
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            matrix: [[1.0, 0.0], [0.0, 1.0]],
            translation: [tx, ty],
        }
    }

    fn apply(&self, p: GridCoord) -> GridCoord {
        GridCoord::new(
            self.matrix[0][0] * p.x + self.matrix[0][1] * p.y + self.translation[0],
            self.matrix[1][0] * p.x + self.matrix[1][1] * p.y + self.translation[1],
        )
    }

    fn inverse_apply(&self, p: GridCoord) -> Result<GridCoord> {
        let det = mat2_det(&self.matrix);
        if det.abs() < 1e-12 {
            return Err(CoreError::invalid_argument("affine transform not invertible"));
        }
        let (x, y) = (p.x - self.translation[0], p.y - self.translation[1]);
        let inv = 1.0 / det;
        Ok(GridCoord::new(
            (self.matrix[1][1] * x - self.matrix[0][1] * y) * inv,
            (-self.matrix[1][0] * x + self.matrix[0][0] * y) * inv,
        ))
    }
}

/// Thin-plate-spline point map fitted through anchor/target pairs, with
/// the standard radial-basis coefficients plus an affine part.
#[derive(Debug, Clone, PartialEq)]
pub struct TpsTransform {
    anchors: Vec<GridCoord>,
    targets: Vec<GridCoord>,
    /// Per-axis coefficients: `n` kernel weights then `(a0, ax, ay)`.
    coeff_x: Vec<f64>,
    coeff_y: Vec<f64>,
}

impl TpsTransform {
    /// Fit the interpolating spline mapping each anchor to its target.
    pub fn fit(anchors: Vec<GridCoord>, targets: Vec<GridCoord>) -> Result<Self> {
        let n = anchors.len();
        if n < 3 || targets.len() != n {
            return Err(CoreError::invalid_argument(
                "thin-plate-spline needs at least 3 anchor/target pairs",
            ));
        }
        let dim = n + 3;
        let mut a = vec![0.0; dim * dim];
        for i in 0..n {
            for j in 0..n {
                let dx = anchors[i].x - anchors[j].x;
                let dy = anchors[i].y - anchors[j].y;
                a[i * dim + j] = tps_kernel(dx * dx + dy * dy);
            }
            a[i * dim + n] = 1.0;
            a[i * dim + n + 1] = anchors[i].x;
            a[i * dim + n + 2] = anchors[i].y;
            a[n * dim + i] = 1.0;
            a[(n + 1) * dim + i] = anchors[i].x;
            a[(n + 2) * dim + i] = anchors[i].y;
        }
        let mut bx = vec![0.0; dim];
        let mut by = vec![0.0; dim];
        for i in 0..n {
            bx[i] = targets[i].x;
            by[i] = targets[i].y;
        }
        let coeff_x = solve_dense(&a, &bx, dim)?;
        let coeff_y = solve_dense(&a, &by, dim)?;
        Ok(Self {
            anchors,
            targets,
            coeff_x,
            coeff_y,
        })
    }

    pub fn anchors(&self) -> &[GridCoord] {
        &self.anchors
    }

    pub fn targets(&self) -> &[GridCoord] {
        &self.targets
    }

    fn apply(&self, p: GridCoord) -> GridCoord {
        let n = self.anchors.len();
        let mut x = self.coeff_x[n] + self.coeff_x[n + 1] * p.x + self.coeff_x[n + 2] * p.y;
        let mut y = self.coeff_y[n] + self.coeff_y[n + 1] * p.x + self.coeff_y[n + 2] * p.y;
        for (i, c) in self.anchors.iter().enumerate() {
            let dx = p.x - c.x;
            let dy = p.y - c.y;
            let u = tps_kernel(dx * dx + dy * dy);
            x += self.coeff_x[i] * u;
            y += self.coeff_y[i] * u;
        }
        GridCoord::new(x, y)
    }

    fn jacobian(&self, p: GridCoord) -> Mat2 {
        let n = self.anchors.len();
        let mut j = [
            [self.coeff_x[n + 1], self.coeff_x[n + 2]],
            [self.coeff_y[n + 1], self.coeff_y[n + 2]],
        ];
        for (i, c) in self.anchors.iter().enumerate() {
            let dx = p.x - c.x;
            let dy = p.y - c.y;
            let r2 = dx * dx + dy * dy;
            if r2 <= 0.0 {
                continue;
            }
            // grad of r^2 ln r: (ln r^2 + 1) * (p - c)
            let g = libm::log(r2) + 1.0;
            j[0][0] += self.coeff_x[i] * g * dx;
            j[0][1] += self.coeff_x[i] * g * dy;
            j[1][0] += self.coeff_y[i] * g * dx;
            j[1][1] += self.coeff_y[i] * g * dy;
        }
        j
    }
}

/// A random geometric transformation: the forward point map is directly
/// evaluable; warping an image by the transform samples through the
/// numerically inverted map.
#[derive(Debug, Clone, PartialEq)]
pub enum GeometricTransform {
    Affine(AffineTransform),
    ThinPlateSpline(TpsTransform),
}

impl GeometricTransform {
    pub fn identity() -> Self {
        GeometricTransform::Affine(AffineTransform::identity())
    }

    /// Forward point map `T(p)`.
    pub fn apply(&self, p: GridCoord) -> GridCoord {
        match self {
            GeometricTransform::Affine(a) => a.apply(p),
            GeometricTransform::ThinPlateSpline(t) => t.apply(p),
        }
    }

    /// Jacobian of the forward map at `p`.
    pub fn jacobian(&self, p: GridCoord) -> Mat2 {
        match self {
            GeometricTransform::Affine(a) => a.matrix,
            GeometricTransform::ThinPlateSpline(t) => t.jacobian(p),
        }
    }

    /// Invert the forward map at one point (Newton for the spline).
    pub fn invert_point(&self, z: GridCoord) -> Result<GridCoord> {
        match self {
            GeometricTransform::Affine(a) => a.inverse_apply(z),
            GeometricTransform::ThinPlateSpline(t) => {
                // Initialize from the affine part of the fit.
                let n = t.anchors.len();
                let affine = AffineTransform {
                    matrix: [
                        [t.coeff_x[n + 1], t.coeff_x[n + 2]],
                        [t.coeff_y[n + 1], t.coeff_y[n + 2]],
                    ],
                    translation: [t.coeff_x[n], t.coeff_y[n]],
                };
                let mut s = affine.inverse_apply(z).unwrap_or(z);
                for _ in 0..50 {
                    let f = t.apply(s);
                    let rx = f.x - z.x;
                    let ry = f.y - z.y;
                    if rx.abs() < 1e-12 && ry.abs() < 1e-12 {
                        return Ok(s);
                    }
                    let j = t.jacobian(s);
                    let det = mat2_det(&j);
                    if det.abs() < 1e-9 {
                        break;
                    }
                    let inv = 1.0 / det;
                    s = GridCoord::new(
                        s.x - (j[1][1] * rx - j[0][1] * ry) * inv,
                        s.y - (-j[1][0] * rx + j[0][0] * ry) * inv,
                    );
                }
                let f = t.apply(s);
                if (f.x - z.x).abs() < 1e-9 && (f.y - z.y).abs() < 1e-9 {
                    Ok(s)
                } else {
                    Err(CoreError::invalid_argument(
                        "transform inversion did not converge; transform may not be invertible on the domain",
                    ))
                }
            }
        }
    }

    /// The sampling field realizing this transform as an image warp:
    /// `flow(z) = T^-1(z)`, so `bilinear_sample(image, flow)` moves content
    /// at `p` to `T(p)`.
    pub fn sampling_flow(&self, resolution: (usize, usize)) -> Result<FlowField> {
        let (h, w) = resolution;
        let grid = identity_grid(h, w)?;
        let mut out = grid.clone();
        for y in 0..h {
            for x in 0..w {
                let s = self.invert_point(grid.coord(y, x))?;
                out.set_coord(y, x, s);
            }
        }
        Ok(out)
    }
}

/// Parameter ranges for random transform sampling.
#[derive(Debug, Clone)]
pub struct TransformSampler {
    /// Anchors per axis of the TPS grid.
    pub anchor_grid: usize,
    /// TPS displacement magnitude in normalized units.
    pub displacement: f64,
    /// Rotation bound of the affine component, radians.
    pub max_rotation: f64,
    /// Scale range of the affine component.
    pub scale_range: (f64, f64),
    /// Translation bound of the affine component.
    pub max_translation: f64,
}

impl Default for TransformSampler {
    fn default() -> Self {
        Self {
            anchor_grid: 5,
            displacement: 0.15,
            max_rotation: 15.0 * core::f64::consts::PI / 180.0,
            scale_range: (0.9, 1.1),
            max_translation: 0.1,
        }
    }
}

impl TransformSampler {
    fn draw_affine(&self, rng: &mut SplitMix64) -> AffineTransform {
        let th = rng.symmetric(self.max_rotation);
        let (s1, s2) = (
            rng.uniform(self.scale_range.0, self.scale_range.1),
            rng.uniform(self.scale_range.0, self.scale_range.1),
        );
        let (c, s) = (libm::cos(th), libm::sin(th));
        AffineTransform {
            matrix: [[c * s1, -s * s2], [s * s1, c * s2]],
            translation: [
                rng.symmetric(self.max_translation),
                rng.symmetric(self.max_translation),
            ],
        }
    }

    /// Deterministically sample a thin-plate-spline transform: targets are
    /// a random affine map of the anchor grid plus per-anchor displacement.
    /// Draws failing the invertibility margin (Jacobian determinant at all
    /// anchors) are rejected and redrawn from the same stream.
    pub fn sample(&self, seed: u64) -> Result<GeometricTransform> {
        let mut rng = SplitMix64::new(seed);
        let g = self.anchor_grid.max(2);
        let mut anchors = Vec::with_capacity(g * g);
        for iy in 0..g {
            for ix in 0..g {
                anchors.push(GridCoord::new(
                    crate::grid::axis_lattice_coord(ix, g),
                    crate::grid::axis_lattice_coord(iy, g),
                ));
            }
        }
        for _attempt in 0..32 {
            let affine = self.draw_affine(&mut rng);
            let targets: Vec<GridCoord> = anchors
                .iter()
                .map(|&a| {
                    let m = affine.apply(a);
                    GridCoord::new(
                        m.x + rng.symmetric(self.displacement),
                        m.y + rng.symmetric(self.displacement),
                    )
                })
                .collect();
            let tps = TpsTransform::fit(anchors.clone(), targets)?;
            let invertible = anchors
                .iter()
                .all(|&a| mat2_det(&tps.jacobian(a)) > 0.05);
            if invertible {
                return Ok(GeometricTransform::ThinPlateSpline(tps));
            }
        }
        Err(CoreError::invalid_argument(
            "could not sample an invertible transform within 32 attempts",
        ))
    }

    /// Deterministically sample a plain affine transform.
    pub fn sample_affine(&self, seed: u64) -> GeometricTransform {
        let mut rng = SplitMix64::new(seed);
        GeometricTransform::Affine(self.draw_affine(&mut rng))
    }
}

/// Keypoint equivariance: detect on the image and on the warped image,
/// map the original detections through the transform, and sum the L1
/// coordinate distance over keypoints.
pub fn equivariance_loss(
    detector: &dyn PriorMotionProvider,
    image: &ImageTensor,
    transform: &GeometricTransform,
) -> Result<f64> {
    let kp = detector.driving_keypoints(image)?;
    let flow = transform.sampling_flow(image.resolution())?;
    let warped = bilinear_sample(image, &flow)?;
    let kp_warped = detector.driving_keypoints(&warped)?;
    if kp.count() != kp_warped.count() {
        return Err(CoreError::Provider(format!(
            "detector returned {} keypoints on the image but {} on the warped image",
            kp.count(),
            kp_warped.count()
        )));
    }
    let mut loss = 0.0;
    for k in 0..kp.count() {
        let mapped = transform.apply(kp.point(k));
        let got = kp_warped.point(k);
        loss += (mapped.x - got.x).abs() + (mapped.y - got.y).abs();
    }
    Ok(loss)
}

/// Combined loss report; `total` is exactly `perceptual + equivariance`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub perceptual: f64,
    pub equivariance: f64,
    pub total: f64,
}

/// Sample one transform from the seed, compute both objectives, and sum
/// them without weighting.
pub fn total_loss(
    target: &ImageTensor,
    generated: &ImageTensor,
    detector: &dyn PriorMotionProvider,
    extractor: &dyn FeatureExtractor,
    sampler: &TransformSampler,
    seed: u64,
) -> Result<LossReport> {
    let transform = sampler.sample(seed)?;
    let resolutions = default_perceptual_resolutions(target.resolution());
    let perceptual = perceptual_loss(target, generated, extractor, &resolutions)?;
    let equivariance = equivariance_loss(detector, target, &transform)?;
    Ok(LossReport {
        perceptual,
        equivariance,
        total: perceptual + equivariance,
    })
}
