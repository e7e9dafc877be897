//! Pixel-level primitives and the LR/HR pair generator.

mod color;
mod crappify;
pub mod dataset;
mod jpeg;
mod resize;
pub mod synthetic;

use std::path::Path;

use ndarray::{Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::tensor::{Float, Tensor};

pub use color::{rgb_to_ycbcr, ycbcr_to_rgb};
pub use crappify::{crappify, crappify_encoded, draw_quality, EncodedPair, FacePairSample, HR_SIZE, LR_SIZE};
pub use jpeg::{decode_jpeg, encode_jpeg, jpeg_degrade, JPEG_CODEC_ID};
pub use resize::{resize, ResizeMethod};
pub use dataset::{
    append_jsonl, list_images, normalize_face, prepare_dataset, read_jsonl, split_sizes, write_jsonl, PairDataset, PairRecord, Split,
};
pub use synthetic::SyntheticFaces;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    Rgb,
    YCbCr,
}

/// An H×W×C image with values in [0,1].
///
/// Single-channel images carry a luminance plane and are tagged `YCbCr`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pixels: Array3<f32>,
    colorspace: ColorSpace,
}

impl Image {
    pub fn new(pixels: Array3<f32>, colorspace: ColorSpace) -> Result<Self> {
        let (h, w, c) = pixels.dim();
        if h == 0 || w == 0 {
            return arg(format!("image dims must be positive, got {h}x{w}"));
        }
        match (c, colorspace) {
            (3, _) | (1, ColorSpace::YCbCr) => {}
            (1, ColorSpace::Rgb) => return arg("single-channel images must be tagged YCbCr"),
            _ => return arg(format!("unsupported channel count {c}")),
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return arg(format!("pixel value {v} outside [0,1]"));
        }
        Ok(Image { pixels, colorspace })
    }

    /// Builds an image, clamping every value into [0,1]. NaN maps to 0.
    pub fn from_clamped(mut pixels: Array3<f32>, colorspace: ColorSpace) -> Result<Self> {
        pixels.mapv_inplace(clamp01);
        Image::new(pixels, colorspace)
    }

    pub fn filled(h: usize, w: usize, c: usize, value: f32, colorspace: ColorSpace) -> Result<Self> {
        Image::new(Array3::from_elem((h, w, c), value), colorspace)
    }

    pub fn from_luma(plane: ArrayView2<f32>) -> Result<Self> {
        Image::from_clamped(plane.to_owned().insert_axis(Axis(2)), ColorSpace::YCbCr)
    }

    pub fn pixels(&self) -> &Array3<f32> {
        &self.pixels
    }

    pub fn into_pixels(self) -> Array3<f32> {
        self.pixels
    }

    pub fn colorspace(&self) -> ColorSpace {
        self.colorspace
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn channels(&self) -> usize {
        self.pixels.dim().2
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.pixels.dim()
    }

    pub fn channel(&self, c: usize) -> ArrayView2<'_, f32> {
        self.pixels.index_axis(Axis(2), c)
    }

    /// Rectangular crop; the region must lie inside the image.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Image> {
        if h == 0 || w == 0 || top + h > self.height() || left + w > self.width() {
            return arg(format!(
                "crop {h}x{w}@({top},{left}) outside {}x{}",
                self.height(),
                self.width()
            ));
        }
        let view = self.pixels.slice(ndarray::s![top..top + h, left..left + w, ..]);
        Ok(Image {
            pixels: view.to_owned(),
            colorspace: self.colorspace,
        })
    }

    /// Largest centred square crop.
    pub fn center_square(&self) -> Image {
        let side = self.height().min(self.width());
        let top = (self.height() - side) / 2;
        let left = (self.width() - side) / 2;
        self.crop(top, left, side, side).expect("square fits")
    }

    /// Rounds every value to the nearest 8-bit level.
    pub fn quantized(&self) -> Image {
        Image {
            pixels: self.pixels.mapv(|v| to_u8(v) as f32 / 255.0),
            colorspace: self.colorspace,
        }
    }

    /// Layout change to a 1×C×H×W tensor.
    pub fn to_tensor<F: Float>(&self) -> Tensor<F> {
        let chw = self.pixels.view().permuted_axes([2, 0, 1]);
        chw.mapv(|v| F::lit(v as f64)).insert_axis(Axis(0))
    }

    /// Inverse of [`Image::to_tensor`] for sample `n` of a batch, clamping to [0,1].
    pub fn from_tensor<F: Float>(t: &Tensor<F>, n: usize, colorspace: ColorSpace) -> Result<Image> {
        if n >= t.dim().0 {
            return arg(format!("sample {n} out of batch of {}", t.dim().0));
        }
        let hwc = t.index_axis(Axis(0), n).permuted_axes([1, 2, 0]);
        let pixels = hwc.mapv(|v| v.as_f64() as f32);
        Image::from_clamped(pixels.as_standard_layout().to_owned(), colorspace)
    }

    pub fn to_rgb8(&self) -> Result<image::RgbImage> {
        let rgb = match self.colorspace {
            ColorSpace::Rgb => self.clone(),
            ColorSpace::YCbCr if self.channels() == 3 => ycbcr_to_rgb(self)?,
            ColorSpace::YCbCr => return Err(Error::State("luma plane has no RGB form".into())),
        };
        let (h, w, _) = rgb.dims();
        let mut out = image::RgbImage::new(w as u32, h as u32);
        for (x, y, px) in out.enumerate_pixels_mut() {
            for c in 0..3 {
                px.0[c] = to_u8(rgb.pixels[[y as usize, x as usize, c]]);
            }
        }
        Ok(out)
    }

    pub fn from_dynamic(img: &image::DynamicImage) -> Result<Image> {
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        let mut pixels = Array3::zeros((h as usize, w as usize, 3));
        for (x, y, px) in rgb.enumerate_pixels() {
            for c in 0..3 {
                pixels[[y as usize, x as usize, c]] = px.0[c] as f32 / 255.0;
            }
        }
        Image::new(pixels, ColorSpace::Rgb)
    }

    pub fn load(path: &Path) -> Result<Image> {
        let img = image::open(path)?;
        Image::from_dynamic(&img)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_rgb8()?
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(Error::from)
    }
}

#[inline]
pub(crate) fn clamp01(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[inline]
pub(crate) fn to_u8(v: f32) -> u8 {
    (clamp01(v) * 255.0).round() as u8
}
