//! LR/HR pair generation: bicubic ×4 downscale followed by JPEG at a random
//! quality drawn once per sample.

use rand::Rng;

use super::{decode_jpeg, encode_jpeg, resize, ColorSpace, Image, ResizeMethod};
use crate::error::{arg, Result};

pub const HR_SIZE: usize = 160;
pub const LR_SIZE: usize = 40;
pub const MIN_QUALITY: u8 = 10;
pub const MAX_QUALITY: u8 = 70;

#[derive(Debug, Clone, PartialEq)]
pub struct FacePairSample {
    pub lr: Image,
    pub hr: Image,
    pub source_id: String,
    pub jpeg_quality: u8,
}

/// A pair together with the exact JPEG stream the LR image was decoded from.
#[derive(Debug, Clone)]
pub struct EncodedPair {
    pub sample: FacePairSample,
    pub lr_jpeg: Vec<u8>,
}

/// Quality factor for one sample, uniform on the inclusive range.
pub fn draw_quality<R: Rng + ?Sized>(rng: &mut R) -> u8 {
    rng.random_range(MIN_QUALITY..=MAX_QUALITY)
}

pub fn crappify_encoded<R: Rng + ?Sized>(hr: &Image, source_id: &str, rng: &mut R) -> Result<EncodedPair> {
    if hr.dims() != (HR_SIZE, HR_SIZE, 3) || hr.colorspace() != ColorSpace::Rgb {
        return arg(format!(
            "crappify expects a {HR_SIZE}x{HR_SIZE}x3 RGB image, got {:?} {:?}",
            hr.dims(),
            hr.colorspace()
        ));
    }
    let quality = draw_quality(rng);
    let small = resize(hr, LR_SIZE, LR_SIZE, ResizeMethod::Bicubic)?;
    let lr_jpeg = encode_jpeg(&small, quality)?;
    let lr = decode_jpeg(&lr_jpeg)?;
    Ok(EncodedPair {
        sample: FacePairSample {
            lr,
            hr: hr.clone(),
            source_id: source_id.to_string(),
            jpeg_quality: quality,
        },
        lr_jpeg,
    })
}

pub fn crappify<R: Rng + ?Sized>(hr: &Image, source_id: &str, rng: &mut R) -> Result<FacePairSample> {
    crappify_encoded(hr, source_id, rng).map(|p| p.sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::synthetic::SyntheticFaces;
    use crate::rng::rng_from_seed;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn lr_is_forty_square_and_deterministic() {
        let hr = SyntheticFaces::new(3).face(0, 0);
        let a = crappify_encoded(&hr, "s0", &mut rng_from_seed(5)).unwrap();
        let b = crappify_encoded(&hr, "s0", &mut rng_from_seed(5)).unwrap();
        assert_eq!(a.sample.lr.dims(), (40, 40, 3));
        assert_eq!(a.lr_jpeg, b.lr_jpeg);
        assert_eq!(a.sample, b.sample);
        assert!((10..=70).contains(&a.sample.jpeg_quality));
    }

    #[test]
    fn wrong_dims_rejected() {
        let hr = Image::filled(100, 160, 3, 0.5, ColorSpace::Rgb).unwrap();
        assert!(crappify(&hr, "x", &mut rng_from_seed(1)).is_err());
    }

    #[test]
    fn quality_draws_are_uniform() {
        let mut counts = [0u32; 61];
        for seed in 0..10_000u64 {
            let q = draw_quality(&mut rng_from_seed(seed));
            counts[(q - MIN_QUALITY) as usize] += 1;
        }
        let expected = 10_000.0 / 61.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let p = 1.0 - ChiSquared::new(60.0).unwrap().cdf(chi2);
        assert!(p > 0.01, "chi2 {chi2}, p {p}");
    }
}
