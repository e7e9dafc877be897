//! JPEG degradation. Quantisation to 8 bits happens only here.

use std::io::Cursor;

use image::codecs::jpeg::JpegEncoder;
use image::{ExtendedColorType, ImageEncoder, ImageFormat};
use ndarray::Array3;

use super::{rgb_to_ycbcr, to_u8, ColorSpace, Image};
use crate::error::{arg, Error, Result};

/// Identity of the codec pair used for degradation; recorded in run metadata
/// because the quality→artifact mapping is codec specific.
pub const JPEG_CODEC_ID: &str = "image-rs 0.25 JpegEncoder (baseline) / zune-jpeg decoder";

pub fn encode_jpeg(img: &Image, quality: u8) -> Result<Vec<u8>> {
    if !(1..=95).contains(&quality) {
        return arg(format!("jpeg quality must be in [1,95], got {quality}"));
    }
    let (h, w, c) = img.dims();
    let mut buf = Vec::new();
    let encoder = JpegEncoder::new_with_quality(&mut buf, quality);
    if c == 1 {
        let bytes: Vec<u8> = img.pixels().iter().map(|&v| to_u8(v)).collect();
        encoder.write_image(&bytes, w as u32, h as u32, ExtendedColorType::L8)?;
    } else {
        let rgb = img.to_rgb8()?;
        encoder.write_image(rgb.as_raw(), w as u32, h as u32, ExtendedColorType::Rgb8)?;
    }
    Ok(buf)
}

/// Decodes to RGB, or to a luma plane when the stream is grayscale.
pub fn decode_jpeg(bytes: &[u8]) -> Result<Image> {
    let dynamic = image::load(Cursor::new(bytes), ImageFormat::Jpeg)?;
    if dynamic.color().channel_count() == 1 {
        let luma = dynamic.to_luma8();
        let (w, h) = luma.dimensions();
        let px = Array3::from_shape_vec((h as usize, w as usize, 1), luma.as_raw().iter().map(|&v| v as f32 / 255.0).collect())
            .map_err(|e| Error::Data(e.to_string()))?;
        return Image::new(px, ColorSpace::YCbCr);
    }
    Image::from_dynamic(&dynamic)
}

/// Encode-then-decode at `quality`; the colorspace tag of the input is kept.
pub fn jpeg_degrade(img: &Image, quality: u8) -> Result<Image> {
    let decoded = decode_jpeg(&encode_jpeg(img, quality)?)?;
    match (img.colorspace(), img.channels()) {
        (ColorSpace::YCbCr, 3) => rgb_to_ycbcr(&decoded),
        _ => Ok(decoded),
    }
}
