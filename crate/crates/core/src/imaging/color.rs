//! Full-range BT.601 (JPEG/JFIF) RGB ↔ YCbCr.

use ndarray::Array3;

use super::{clamp01, ColorSpace, Image};
use crate::error::{Error, Result};

const FWD: [[f64; 3]; 3] = [
    [0.299, 0.587, 0.114],
    [-0.168_736, -0.331_264, 0.5],
    [0.5, -0.418_688, -0.081_312],
];

const INV: [[f64; 3]; 3] = [
    [1.0, 0.0, 1.402],
    [1.0, -0.344_136, -0.714_136],
    [1.0, 1.772, 0.0],
];

fn convert(img: &Image, m: &[[f64; 3]; 3], pre: [f64; 3], post: [f64; 3], to: ColorSpace) -> Result<Image> {
    let (h, w, _) = img.dims();
    let src = img.pixels();
    let mut out = Array3::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            let v = [0, 1, 2].map(|c| src[[y, x, c]] as f64 + pre[c]);
            for (r, row) in m.iter().enumerate() {
                let acc = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + post[r];
                out[[y, x, r]] = clamp01(acc as f32);
            }
        }
    }
    Image::new(out, to)
}

pub fn rgb_to_ycbcr(img: &Image) -> Result<Image> {
    if img.colorspace() != ColorSpace::Rgb {
        return Err(Error::State("rgb_to_ycbcr expects an RGB image".into()));
    }
    convert(img, &FWD, [0.0; 3], [0.0, 0.5, 0.5], ColorSpace::YCbCr)
}

pub fn ycbcr_to_rgb(img: &Image) -> Result<Image> {
    if img.colorspace() != ColorSpace::YCbCr || img.channels() != 3 {
        return Err(Error::State("ycbcr_to_rgb expects a 3-channel YCbCr image".into()));
    }
    convert(img, &INV, [0.0, -0.5, -0.5], [0.0; 3], ColorSpace::Rgb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn pixel(r: f32, g: f32, b: f32) -> Image {
        Image::new(Array3::from_shape_vec((1, 1, 3), vec![r, g, b]).unwrap(), ColorSpace::Rgb).unwrap()
    }

    #[test]
    fn luminance_of_white_and_red() {
        let white = rgb_to_ycbcr(&pixel(1.0, 1.0, 1.0)).unwrap();
        assert!((white.pixels()[[0, 0, 0]] - 1.0).abs() < 1e-6);
        let red = rgb_to_ycbcr(&pixel(1.0, 0.0, 0.0)).unwrap();
        assert!((red.pixels()[[0, 0, 0]] - 0.299).abs() < 1e-6);
    }

    #[test]
    fn wrong_tag_is_state_error() {
        let ycc = rgb_to_ycbcr(&pixel(0.2, 0.3, 0.4)).unwrap();
        assert!(matches!(rgb_to_ycbcr(&ycc), Err(Error::State(_))));
        assert!(matches!(ycbcr_to_rgb(&pixel(0.2, 0.3, 0.4)), Err(Error::State(_))));
    }

    #[test]
    fn round_trip_on_cube_corners_and_random_colors() {
        let mut colors: Vec<[f32; 3]> = (0..8)
            .map(|i| [(i & 1) as f32, ((i >> 1) & 1) as f32, ((i >> 2) & 1) as f32])
            .collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        colors.extend((0..1000).map(|_| [rng.random(), rng.random(), rng.random()]));
        let n = colors.len();
        let flat: Vec<f32> = colors.iter().flatten().copied().collect();
        let img = Image::new(Array3::from_shape_vec((1, n, 3), flat).unwrap(), ColorSpace::Rgb).unwrap();
        let back = ycbcr_to_rgb(&rgb_to_ycbcr(&img).unwrap()).unwrap();
        assert_eq!(back.colorspace(), ColorSpace::Rgb);
        let max_err = back
            .pixels()
            .iter()
            .zip(img.pixels())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_err <= 1e-3, "max round-trip error {max_err}");
    }
}
