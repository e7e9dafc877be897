//! Parameter-free layers: coordinate channels, sub-pixel shuffle, pooling.

use ndarray::{Array4, Axis};

use super::{missing_cache, Layer};
use crate::error::Result;
use crate::srops;
use crate::tensor::{Float, Tensor};

/// Appends the two coordinate planes ahead of a CoordConv's convolution.
#[derive(Default)]
pub struct CoordChannels {
    primed: bool,
}

impl CoordChannels {
    pub fn new() -> Self {
        CoordChannels { primed: false }
    }
}

impl<F: Float> Layer<F> for CoordChannels {
    fn infer(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(srops::coord_augment(x))
    }

    fn forward(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        self.primed = true;
        Ok(srops::coord_augment(x))
    }

    fn backward(&mut self, grad: &Tensor<F>) -> Result<Tensor<F>> {
        if !std::mem::take(&mut self.primed) {
            return Err(missing_cache("coord_channels"));
        }
        srops::coord_augment_backward(grad)
    }
}

pub struct PixelShuffle {
    factor: usize,
    primed: bool,
}

impl PixelShuffle {
    pub fn new(factor: usize) -> Self {
        PixelShuffle { factor, primed: false }
    }
}

impl<F: Float> Layer<F> for PixelShuffle {
    fn infer(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        srops::pixel_shuffle(x, self.factor)
    }

    fn forward(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let y = srops::pixel_shuffle(x, self.factor)?;
        self.primed = true;
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<F>) -> Result<Tensor<F>> {
        if !std::mem::take(&mut self.primed) {
            return Err(missing_cache("pixel_shuffle"));
        }
        srops::pixel_unshuffle(grad, self.factor)
    }
}

/// N×C×H×W → N×C×1×1 spatial mean.
#[derive(Default)]
pub struct GlobalAvgPool {
    cache: Option<(usize, usize)>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        GlobalAvgPool { cache: None }
    }
}

impl<F: Float> Layer<F> for GlobalAvgPool {
    fn infer(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let (n, c, h, w) = x.dim();
        let area = F::lit((h * w) as f64);
        let sums = x.sum_axis(Axis(3)).sum_axis(Axis(2));
        Ok(sums.mapv(|v| v / area).into_shape_with_order((n, c, 1, 1)).expect("contiguous"))
    }

    fn forward(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let (_, _, h, w) = x.dim();
        self.cache = Some((h, w));
        self.infer(x)
    }

    fn backward(&mut self, grad: &Tensor<F>) -> Result<Tensor<F>> {
        let (h, w) = self.cache.take().ok_or_else(|| missing_cache("global_avg_pool"))?;
        let (n, c, _, _) = grad.dim();
        let area = F::lit((h * w) as f64);
        Ok(Array4::from_shape_fn((n, c, h, w), |(b, ch, _, _)| grad[[b, ch, 0, 0]] / area))
    }
}
