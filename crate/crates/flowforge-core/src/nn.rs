//! Seeded deterministic convolution blocks.
//!
//! These are the reference stand-ins for the learned networks: weights come
//! from a [`rng::SplitMix64`](crate::rng::SplitMix64) stream, so a seed fully
//! determines every output bit. The layers implement exactly what the
//! engine needs: 3x3 convolutions (stride 1 or 2, zero padding), pointwise
//! projections, ReLU, nearest upsampling, and sigmoid.

use alloc::vec;
use alloc::vec::Vec;

use crate::rng::SplitMix64;
use crate::tensor::ImageTensor;

/// Weight initialization scale.
#[derive(Debug, Clone, Copy)]
pub enum WeightScale {
    /// Uniform in `±sqrt(3 / fan_in)`: keeps activation magnitudes stable
    /// through a stack.
    FanIn,
    /// Uniform in `±s`.
    Fixed(f64),
}

impl WeightScale {
    fn bound(self, fan_in: usize) -> f64 {
        match self {
            WeightScale::FanIn => libm::sqrt(3.0 / fan_in as f64),
            WeightScale::Fixed(s) => s,
        }
    }
}

/// 3x3 convolution with zero padding of one pixel.
#[derive(Debug, Clone)]
pub struct Conv3x3 {
    in_ch: usize,
    out_ch: usize,
    stride: usize,
    /// `[out][in][ky][kx]`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Conv3x3 {
    pub fn seeded(
        in_ch: usize,
        out_ch: usize,
        stride: usize,
        scale: WeightScale,
        rng: &mut SplitMix64,
    ) -> Self {
        assert!(stride == 1 || stride == 2, "supported strides are 1 and 2");
        let bound = scale.bound(in_ch * 9);
        let weights = (0..out_ch * in_ch * 9)
            .map(|_| rng.symmetric(bound))
            .collect();
        let bias = vec![0.0; out_ch];
        Self {
            in_ch,
            out_ch,
            stride,
            weights,
            bias,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.out_ch
    }

    pub fn forward(&self, input: &ImageTensor) -> ImageTensor {
        assert_eq!(input.channels(), self.in_ch, "conv input channel mismatch");
        match self.stride {
            1 => self.forward_s1(input),
            _ => self.forward_s2(input),
        }
    }

    fn forward_s1(&self, input: &ImageTensor) -> ImageTensor {
        let (h, w) = input.resolution();
        let mut out = ImageTensor::zeros(h, w, self.out_ch);
        for co in 0..self.out_ch {
            let dst = out.plane_mut(co);
            dst.fill(self.bias[co]);
            for ci in 0..self.in_ch {
                let k = &self.weights[(co * self.in_ch + ci) * 9..(co * self.in_ch + ci) * 9 + 9];
                let src = input.plane(ci);
                for y in 0..h {
                    let dst_row = &mut dst[y * w..(y + 1) * w];
                    for ky in 0..3usize {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let src_row = &src[sy as usize * w..(sy as usize + 1) * w];
                        let (wl, wm, wr) = (k[ky * 3], k[ky * 3 + 1], k[ky * 3 + 2]);
                        dst_row[0] += wm * src_row[0] + wr * src_row[1];
                        // Interior columns: dense fused 3-tap pass.
                        let left = &src_row[..w - 2];
                        let mid = &src_row[1..w - 1];
                        let right = &src_row[2..];
                        for (((d, a), b), c) in
                            dst_row[1..w - 1].iter_mut().zip(left).zip(mid).zip(right)
                        {
                            *d += wl * a + wm * b + wr * c;
                        }
                        dst_row[w - 1] += wl * src_row[w - 2] + wm * src_row[w - 1];
                    }
                }
            }
        }
        out
    }

    fn forward_s2(&self, input: &ImageTensor) -> ImageTensor {
        let (h, w) = input.resolution();
        let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
        let mut out = ImageTensor::zeros(oh, ow, self.out_ch);
        for co in 0..self.out_ch {
            for ci in 0..self.in_ch {
                let k = &self.weights[(co * self.in_ch + ci) * 9..(co * self.in_ch + ci) * 9 + 9];
                let src = input.plane(ci);
                let dst = out.plane_mut(co);
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0.0;
                        for ky in 0..3usize {
                            let sy = (oy * 2) as isize + ky as isize - 1;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            for kx in 0..3usize {
                                let sx = (ox * 2) as isize + kx as isize - 1;
                                if sx < 0 || sx >= w as isize {
                                    continue;
                                }
                                acc += k[ky * 3 + kx] * src[sy as usize * w + sx as usize];
                            }
                        }
                        dst[oy * ow + ox] += acc;
                    }
                }
            }
            let b = self.bias[co];
            for v in out.plane_mut(co) {
                *v += b;
            }
        }
        out
    }
}

/// 1x1 convolution (per-pixel linear projection).
#[derive(Debug, Clone)]
pub struct Conv1x1 {
    in_ch: usize,
    out_ch: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Conv1x1 {
    pub fn seeded(in_ch: usize, out_ch: usize, scale: WeightScale, rng: &mut SplitMix64) -> Self {
        let bound = scale.bound(in_ch);
        let weights = (0..out_ch * in_ch)
            .map(|_| rng.symmetric(bound))
            .collect();
        Self {
            in_ch,
            out_ch,
            weights,
            bias: vec![0.0; out_ch],
        }
    }

    pub fn forward(&self, input: &ImageTensor) -> ImageTensor {
        assert_eq!(input.channels(), self.in_ch, "conv input channel mismatch");
        let (h, w) = input.resolution();
        let mut out = ImageTensor::zeros(h, w, self.out_ch);
        for co in 0..self.out_ch {
            let dst = out.plane_mut(co);
            dst.fill(self.bias[co]);
            for ci in 0..self.in_ch {
                let wv = self.weights[co * self.in_ch + ci];
                for (d, s) in dst.iter_mut().zip(input.plane(ci)) {
                    *d += wv * s;
                }
            }
        }
        out
    }
}

pub fn relu_in_place(t: &mut ImageTensor) {
    for v in t.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

pub fn sigmoid_in_place(t: &mut ImageTensor) {
    for v in t.data_mut() {
        *v = sigmoid(*v);
    }
}

/// Nearest-neighbor 2x upsample.
pub fn nearest_upsample2(t: &ImageTensor) -> ImageTensor {
    let (h, w) = t.resolution();
    let mut out = ImageTensor::zeros(h * 2, w * 2, t.channels());
    for c in 0..t.channels() {
        let src = t.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..h * 2 {
            let sr = &src[(y / 2) * w..(y / 2 + 1) * w];
            let dr = &mut dst[y * w * 2..(y + 1) * w * 2];
            for x in 0..w * 2 {
                dr[x] = sr[x / 2];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_conv3x3(conv: &Conv3x3, input: &ImageTensor) -> ImageTensor {
        let (h, w) = input.resolution();
        let s = conv.stride;
        let (oh, ow) = (h.div_ceil(s), w.div_ceil(s));
        let mut out = ImageTensor::zeros(oh, ow, conv.out_ch);
        for co in 0..conv.out_ch {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = conv.bias[co];
                    for ci in 0..conv.in_ch {
                        for ky in 0..3usize {
                            for kx in 0..3usize {
                                let sy = (oy * s) as isize + ky as isize - 1;
                                let sx = (ox * s) as isize + kx as isize - 1;
                                if sy < 0 || sy >= h as isize || sx < 0 || sx >= w as isize {
                                    continue;
                                }
                                acc += conv.weights[((co * conv.in_ch + ci) * 3 + ky) * 3 + kx]
                                    * input.get(ci, sy as usize, sx as usize);
                            }
                        }
                    }
                    out.set(co, oy, ox, acc);
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_brute_force() {
        let mut rng = SplitMix64::new(7);
        for &(h, w, ic, oc, stride) in &[
            (5usize, 6usize, 3usize, 4usize, 1usize),
            (8, 8, 2, 3, 2),
            (4, 7, 1, 1, 1),
        ] {
            let conv = Conv3x3::seeded(ic, oc, stride, WeightScale::FanIn, &mut rng);
            let mut input = ImageTensor::zeros(h, w, ic);
            for v in input.data_mut() {
                *v = rng.symmetric(1.0);
            }
            let fast = conv.forward(&input);
            let slow = brute_conv3x3(&conv, &input);
            assert_eq!(fast.resolution(), slow.resolution());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn conv_deterministic() {
        let make = || {
            let mut rng = SplitMix64::new(99);
            Conv3x3::seeded(4, 4, 1, WeightScale::FanIn, &mut rng)
        };
        let mut input = ImageTensor::zeros(16, 16, 4);
        let mut rng = SplitMix64::new(5);
        for v in input.data_mut() {
            *v = rng.symmetric(1.0);
        }
        let a = make().forward(&input);
        let b = make().forward(&input);
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn upsample_repeats_pixels() {
        let t = ImageTensor::from_planes(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let u = nearest_upsample2(&t);
        assert_eq!(u.get(0, 0, 0), 1.0);
        assert_eq!(u.get(0, 0, 1), 1.0);
        assert_eq!(u.get(0, 1, 1), 1.0);
        assert_eq!(u.get(0, 0, 2), 2.0);
        assert_eq!(u.get(0, 3, 3), 4.0);
    }

    #[test]
    fn pointwise_projection() {
        let mut rng = SplitMix64::new(11);
        let proj = Conv1x1::seeded(3, 2, WeightScale::FanIn, &mut rng);
        let mut input = ImageTensor::zeros(4, 4, 3);
        for v in input.data_mut() {
            *v = rng.symmetric(1.0);
        }
        let out = proj.forward(&input);
        let mut acc0 = 0.0;
        for ci in 0..3 {
            acc0 += proj.weights[ci] * input.get(ci, 1, 2);
        }
        assert!((out.get(0, 1, 2) - acc0).abs() < 1e-12);
    }
}
