//! PSNR, SSIM and inference timing.

use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{arg, Error, Result};
use crate::imaging::{rgb_to_ycbcr, ColorSpace, FacePairSample, Image};
use crate::models::Upscaler;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const DEFAULT_TIMING_RUNS: usize = 10;

/// `10·log10(peak²/mse)` over all channels jointly; `+∞` for identical images.
pub fn psnr(x: &Image, y: &Image, peak: f64) -> Result<f64> {
    if x.dims() != y.dims() {
        return arg(format!("shape mismatch: {:?} vs {:?}", x.dims(), y.dims()));
    }
    let n = x.pixels().len() as f64;
    let mse: f64 = x
        .pixels()
        .iter()
        .zip(y.pixels().iter())
        .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Which planes SSIM is averaged over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SsimMode {
    #[default]
    RgbMean,
    Luma,
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let sum: f64 = w.iter().sum();
    w.into_iter().map(|v| v / sum).collect()
}

/// Separable Gaussian filter over valid positions only.
fn filter_valid(plane: &Array2<f64>, k: &[f64]) -> Array2<f64> {
    let (h, w) = plane.dim();
    let n = k.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let rows: Array2<f64> = Array2::from_shape_fn((h, ow), |(y, x)| (0..n).map(|i| k[i] * plane[[y, x + i]]).sum::<f64>());
    Array2::from_shape_fn((oh, ow), |(y, x)| (0..n).map(|i| k[i] * rows[[y + i, x]]).sum::<f64>())
}

/// Mean local SSIM of one plane pair with peak 1.
pub fn ssim_plane(x: ArrayView2<f32>, y: ArrayView2<f32>) -> Result<f64> {
    if x.dim() != y.dim() {
        return arg(format!("shape mismatch: {:?} vs {:?}", x.dim(), y.dim()));
    }
    let (h, w) = x.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return arg(format!("image {h}x{w} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"));
    }
    let c1 = 0.01f64.powi(2);
    let c2 = 0.03f64.powi(2);
    let k = gaussian_window();
    let xf = x.mapv(|v| v as f64);
    let yf = y.mapv(|v| v as f64);
    let mx = filter_valid(&xf, &k);
    let my = filter_valid(&yf, &k);
    let sxx = filter_valid(&(&xf * &xf), &k);
    let syy = filter_valid(&(&yf * &yf), &k);
    let sxy = filter_valid(&(&xf * &yf), &k);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx.as_slice().unwrap()[i], my.as_slice().unwrap()[i]);
        let vx = sxx.as_slice().unwrap()[i] - ux * ux;
        let vy = syy.as_slice().unwrap()[i] - uy * uy;
        let cxy = sxy.as_slice().unwrap()[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    Ok(total / mx.len() as f64)
}

/// SSIM averaged over RGB planes, or on the luma plane only.
pub fn ssim_with(x: &Image, y: &Image, mode: SsimMode) -> Result<f64> {
    if x.dims() != y.dims() {
        return arg(format!("shape mismatch: {:?} vs {:?}", x.dims(), y.dims()));
    }
    match mode {
        SsimMode::RgbMean => {
            let c = x.channels();
            let mut acc = 0.0;
            for ch in 0..c {
                acc += ssim_plane(x.channel(ch), y.channel(ch))?;
            }
            Ok(acc / c as f64)
        }
        SsimMode::Luma => {
            let luma = |img: &Image| -> Result<Image> {
                match img.colorspace() {
                    ColorSpace::Rgb => rgb_to_ycbcr(img),
                    ColorSpace::YCbCr => Ok(img.clone()),
                }
            };
            let (lx, ly) = (luma(x)?, luma(y)?);
            ssim_plane(lx.channel(0), ly.channel(0))
        }
    }
}

pub fn ssim(x: &Image, y: &Image) -> Result<f64> {
    ssim_with(x, y, SsimMode::RgbMean)
}

pub fn serialize_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

pub fn deserialize_db<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Db {
        Num(f64),
        Str(String),
    }
    match Db::deserialize(d)? {
        Db::Num(v) => Ok(v),
        Db::Str(s) if s == "inf" => Ok(f64::INFINITY),
        Db::Str(s) => Err(serde::de::Error::custom(format!("bad PSNR value {s:?}"))),
    }
}

/// Formats PSNR for reports, printing the identical-image sentinel as `inf`.
pub fn format_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.2}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityResult {
    #[serde(serialize_with = "serialize_db", deserialize_with = "deserialize_db")]
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingResult {
    pub mean_seconds: f64,
    pub fps: f64,
    pub runs: usize,
}

/// One warm-up call followed by `runs` timed calls; arithmetic mean.
pub fn time_inference(mut f: impl FnMut() -> Result<()>, runs: usize) -> Result<TimingResult> {
    if runs == 0 {
        return arg("timing needs at least one run");
    }
    f()?;
    let start = Instant::now();
    for _ in 0..runs {
        f()?;
    }
    let mean_seconds = (start.elapsed().as_secs_f64() / runs as f64).max(1e-9);
    Ok(TimingResult { mean_seconds, fps: 1.0 / mean_seconds, runs })
}

/// One row of a quality report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRow {
    pub model: String,
    #[serde(serialize_with = "serialize_db", deserialize_with = "deserialize_db")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub avg_inference_seconds: f64,
    pub fps: f64,
    pub channel: String,
}

/// Mean PSNR/SSIM of `upscaler` over `samples` (peak 1, RGB) and single-image
/// inference timing on the first sample.
pub fn evaluate_sr(
    upscaler: &Upscaler<'_>,
    samples: &[FacePairSample],
    mode: SsimMode,
    runs: usize,
) -> Result<QualityRow> {
    if samples.is_empty() {
        return Err(Error::Data("no validation samples".into()));
    }
    let (mut p, mut s) = (0.0, 0.0);
    for sample in samples {
        let sr = upscaler.upscale(&sample.lr)?;
        p += psnr(&sr, &sample.hr, 1.0)?;
        s += ssim_with(&sr, &sample.hr, mode)?;
    }
    let n = samples.len() as f64;
    let first = &samples[0].lr;
    let timing = time_inference(|| upscaler.upscale(first).map(|_| ()), runs)?;
    Ok(QualityRow {
        model: upscaler.name(),
        psnr_db: p / n,
        ssim: s / n,
        avg_inference_seconds: timing.mean_seconds,
        fps: timing.fps,
        channel: upscaler.channel_label().into(),
    })
}
