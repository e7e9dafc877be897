//! Separable resampling with support-scaled kernels.
//!
//! Output pixel `i` samples the source at `(i + 0.5) * scale - 0.5`. When
//! downscaling, the kernel support widens by the scale factor so every source
//! pixel contributes (area-aware antialiasing); taps falling outside the
//! image are dropped and the remaining weights renormalised.

use ndarray::{Array3, ArrayView3};
use serde::{Deserialize, Serialize};

use super::{clamp01, Image};
use crate::error::{arg, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeMethod {
    Nearest,
    Bilinear,
    Bicubic,
}

/// Bicubic kernel parameter.
const CUBIC_A: f64 = -0.5;

fn triangle(x: f64) -> f64 {
    let x = x.abs();
    if x < 1.0 {
        1.0 - x
    } else {
        0.0
    }
}

fn cubic(x: f64) -> f64 {
    let a = CUBIC_A;
    let x = x.abs();
    if x < 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        (((x - 5.0) * x + 8.0) * x - 4.0) * a
    } else {
        0.0
    }
}

/// Contribution list for one axis: `(first source index, weights)` per output index.
struct AxisWeights {
    taps: Vec<(usize, Vec<f64>)>,
}

impl AxisWeights {
    fn new(in_size: usize, out_size: usize, method: ResizeMethod) -> Self {
        let scale = in_size as f64 / out_size as f64;
        let taps = match method {
            ResizeMethod::Nearest => (0..out_size)
                .map(|i| {
                    let src = (((i as f64 + 0.5) * scale).floor() as usize).min(in_size - 1);
                    (src, vec![1.0])
                })
                .collect(),
            ResizeMethod::Bilinear | ResizeMethod::Bicubic => {
                let (kernel, radius): (fn(f64) -> f64, f64) = match method {
                    ResizeMethod::Bilinear => (triangle, 1.0),
                    _ => (cubic, 2.0),
                };
                let filter_scale = scale.max(1.0);
                let support = radius * filter_scale;
                (0..out_size)
                    .map(|i| {
                        let center = (i as f64 + 0.5) * scale;
                        let lo = ((center - support + 0.5).floor().max(0.0)) as usize;
                        let hi = ((center + support + 0.5).floor() as usize).min(in_size);
                        let mut w: Vec<f64> = (lo..hi)
                            .map(|x| kernel((x as f64 - center + 0.5) / filter_scale))
                            .collect();
                        let total: f64 = w.iter().sum();
                        if total != 0.0 {
                            w.iter_mut().for_each(|v| *v /= total);
                        }
                        (lo, w)
                    })
                    .collect()
            }
        };
        AxisWeights { taps }
    }
}

fn resample_rows(src: ArrayView3<f32>, weights: &AxisWeights) -> Array3<f32> {
    let (h, _, c) = src.dim();
    let out_w = weights.taps.len();
    let mut out = Array3::zeros((h, out_w, c));
    for y in 0..h {
        for (x, (start, w)) in weights.taps.iter().enumerate() {
            for ch in 0..c {
                let mut acc = 0.0f64;
                for (k, wk) in w.iter().enumerate() {
                    acc += wk * src[[y, start + k, ch]] as f64;
                }
                out[[y, x, ch]] = acc as f32;
            }
        }
    }
    out
}

fn resample_cols(src: ArrayView3<f32>, weights: &AxisWeights) -> Array3<f32> {
    let (_, w, c) = src.dim();
    let out_h = weights.taps.len();
    let mut out = Array3::zeros((out_h, w, c));
    for (y, (start, wts)) in weights.taps.iter().enumerate() {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0f64;
                for (k, wk) in wts.iter().enumerate() {
                    acc += wk * src[[start + k, x, ch]] as f64;
                }
                out[[y, x, ch]] = acc as f32;
            }
        }
    }
    out
}

pub fn resize(img: &Image, target_h: usize, target_w: usize, method: ResizeMethod) -> Result<Image> {
    if target_h == 0 || target_w == 0 {
        return arg(format!("resize target must be positive, got {target_h}x{target_w}"));
    }
    let (h, w, _) = img.dims();
    if method == ResizeMethod::Nearest && (h, w) == (target_h, target_w) {
        return Ok(img.clone());
    }
    let horizontal = AxisWeights::new(w, target_w, method);
    let vertical = AxisWeights::new(h, target_h, method);
    let tmp = resample_rows(img.pixels().view(), &horizontal);
    let out = resample_cols(tmp.view(), &vertical);
    Image::from_clamped(out.mapv(clamp01), img.colorspace())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::ColorSpace;

    fn ramp(n: usize) -> Image {
        let px = Array3::from_shape_fn((n, n, 1), |(y, x, _)| (x + 2 * y) as f32 / (3 * n) as f32);
        Image::new(px, ColorSpace::YCbCr).unwrap()
    }

    #[test]
    fn constant_is_fixed_point_for_every_method() {
        let img = Image::filled(2, 2, 3, 0.5, ColorSpace::Rgb).unwrap();
        for m in [ResizeMethod::Nearest, ResizeMethod::Bilinear, ResizeMethod::Bicubic] {
            let out = resize(&img, 4, 4, m).unwrap();
            assert_eq!(out.dims(), (4, 4, 3));
            assert!(out.pixels().iter().all(|&v| (v - 0.5).abs() < 1e-6), "{m:?}");
        }
    }

    #[test]
    fn identity_nearest_is_bit_identical() {
        let img = ramp(7);
        assert_eq!(resize(&img, 7, 7, ResizeMethod::Nearest).unwrap(), img);
    }

    #[test]
    fn identity_bicubic_reproduces_input() {
        let img = ramp(9);
        let out = resize(&img, 9, 9, ResizeMethod::Bicubic).unwrap();
        for (a, b) in out.pixels().iter().zip(img.pixels()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_zero_target() {
        assert!(resize(&ramp(4), 0, 4, ResizeMethod::Bilinear).is_err());
    }

    /// Direct 2-D evaluation of renormalised triangle weights over every
    /// source pixel, independent of the separable implementation.
    fn bilinear_oracle(src: &Image, out_h: usize, out_w: usize) -> Vec<f64> {
        let (h, w, _) = src.dims();
        let (sy, sx) = (h as f64 / out_h as f64, w as f64 / out_w as f64);
        let mut out = Vec::new();
        for oy in 0..out_h {
            for ox in 0..out_w {
                let cy = (oy as f64 + 0.5) * sy - 0.5;
                let cx = (ox as f64 + 0.5) * sx - 0.5;
                let (mut num, mut den) = (0.0, 0.0);
                for y in 0..h {
                    for x in 0..w {
                        let wgt = (1.0 - (y as f64 - cy).abs()).max(0.0)
                            * (1.0 - (x as f64 - cx).abs()).max(0.0);
                        num += wgt * src.pixels()[[y, x, 0]] as f64;
                        den += wgt;
                    }
                }
                out.push(num / den);
            }
        }
        out
    }

    #[test]
    fn bilinear_upscale_matches_direct_weights() {
        let img = ramp(8);
        let out = resize(&img, 16, 16, ResizeMethod::Bilinear).unwrap();
        let expected = bilinear_oracle(&img, 16, 16);
        for (a, b) in out.pixels().iter().zip(expected) {
            assert!((*a as f64 - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn bicubic_kernel_partition_of_unity() {
        for i in 0..20 {
            let t = i as f64 / 20.0;
            let s: f64 = (-2..=2).map(|k| cubic(t - k as f64)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn downscale_output_stays_in_range() {
        let px = Array3::from_shape_fn((160, 160, 3), |(y, x, c)| ((x * 7 + y * 13 + c) % 2) as f32);
        let img = Image::new(px, ColorSpace::Rgb).unwrap();
        let out = resize(&img, 40, 40, ResizeMethod::Bicubic).unwrap();
        assert_eq!(out.dims(), (40, 40, 3));
        assert!(out.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
