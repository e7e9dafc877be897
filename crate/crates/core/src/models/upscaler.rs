use ndarray::{s, Array3, Axis};

use super::{Channel, Generator, SCALE};
use crate::error::{arg, Result};
use crate::imaging::{resize, rgb_to_ycbcr, ycbcr_to_rgb, ColorSpace, Image, ResizeMethod};

/// An image-level ×4 upscaler: bicubic interpolation or a trained generator.
///
/// RGB images in, RGB images out. Y-channel generators super-resolve the luma
/// plane while the chroma planes are bicubic-interpolated.
#[derive(Clone, Copy)]
pub enum Upscaler<'a> {
    Bicubic,
    Model(&'a Generator<f32>),
}

impl Upscaler<'_> {
    pub fn name(&self) -> String {
        match self {
            Upscaler::Bicubic => super::ModelChoice::Bicubic.name(),
            Upscaler::Model(g) => g.spec().name(),
        }
    }

    /// Operating channel label as printed in quality reports.
    pub fn channel_label(&self) -> &'static str {
        match self {
            Upscaler::Bicubic => "-",
            Upscaler::Model(g) => g.spec().channel.label(),
        }
    }

    pub fn upscale(&self, lr: &Image) -> Result<Image> {
        if lr.colorspace() != ColorSpace::Rgb {
            return arg("upscaler expects an RGB image");
        }
        let (h, w) = (lr.height() * SCALE, lr.width() * SCALE);
        match self {
            Upscaler::Bicubic => resize(lr, h, w, ResizeMethod::Bicubic),
            Upscaler::Model(g) => match g.spec().channel {
                Channel::Rgb => {
                    let sr = g.upscale(&lr.to_tensor::<f32>())?;
                    Image::from_tensor(&sr, 0, ColorSpace::Rgb)
                }
                Channel::Y => {
                    let ycc = rgb_to_ycbcr(lr)?;
                    let luma = Image::from_luma(ycc.channel(0))?;
                    let sr_y = g.upscale(&luma.to_tensor::<f32>())?;
                    let chroma = resize(&ycc, h, w, ResizeMethod::Bicubic)?;
                    let mut px: Array3<f32> = chroma.into_pixels();
                    px.slice_mut(s![.., .., 0])
                        .assign(&sr_y.index_axis(Axis(0), 0).index_axis(Axis(0), 0));
                    ycbcr_to_rgb(&Image::from_clamped(px, ColorSpace::YCbCr)?)
                }
            },
        }
    }

    /// Upscale by ×4 and then bicubic-resize to `size`×`size` if needed.
    pub fn upscale_to(&self, lr: &Image, size: usize) -> Result<Image> {
        let sr = self.upscale(lr)?;
        if sr.height() == size && sr.width() == size {
            return Ok(sr);
        }
        resize(&sr, size, size, ResizeMethod::Bicubic)
    }
}
