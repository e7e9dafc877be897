use ndarray::{Array1, ArrayD, Axis, IxDyn};

use super::{
    check_channels, join, missing_cache, BufferVisitor, BufferVisitorMut, Layer, Param, ParamVisitor,
    ParamVisitorMut,
};
use crate::error::{arg, Result};
use crate::tensor::{Float, Tensor};

const EPS: f64 = 1e-5;
const MOMENTUM: f64 = 0.1;

/// Per-channel batch normalisation. Training uses batch statistics and
/// updates running estimates; inference uses the running estimates.
pub struct BatchNorm2d<F: Float> {
    pub gamma: Param<F>,
    pub beta: Param<F>,
    pub running_mean: ArrayD<F>,
    pub running_var: ArrayD<F>,
    channels: usize,
    cache: Option<(Tensor<F>, Array1<F>)>,
}

impl<F: Float> BatchNorm2d<F> {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Param::new(ArrayD::ones(IxDyn(&[channels]))),
            beta: Param::new(ArrayD::zeros(IxDyn(&[channels]))),
            running_mean: ArrayD::zeros(IxDyn(&[channels])),
            running_var: ArrayD::ones(IxDyn(&[channels])),
            channels,
            cache: None,
        }
    }

    fn normalize(&self, x: &Tensor<F>, mean: &Array1<F>, inv_std: &Array1<F>) -> Tensor<F> {
        let mut y = x.clone();
        for mut sample in y.axis_iter_mut(Axis(0)) {
            for (c, mut plane) in sample.axis_iter_mut(Axis(0)).enumerate() {
                let (m, s) = (mean[c], inv_std[c]);
                let (g, b) = (self.gamma.value[[c]], self.beta.value[[c]]);
                plane.mapv_inplace(|v| (v - m) * s * g + b);
            }
        }
        y
    }
}

impl<F: Float> Layer<F> for BatchNorm2d<F> {
    fn infer(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        check_channels("batch_norm", self.channels, x)?;
        let mean = Array1::from_iter(self.running_mean.iter().copied());
        let inv_std = Array1::from_iter(self.running_var.iter().map(|&v| F::one() / (v + F::lit(EPS)).sqrt()));
        Ok(self.normalize(x, &mean, &inv_std))
    }

    fn forward(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        check_channels("batch_norm", self.channels, x)?;
        let (n, c, h, w) = x.dim();
        let count = n * h * w;
        if count < 2 {
            return arg("batch_norm: training needs more than one value per channel");
        }
        let m = F::lit(count as f64);
        let mut mean = Array1::zeros(c);
        let mut var = Array1::zeros(c);
        for ch in 0..c {
            let plane = x.index_axis(Axis(1), ch);
            let mu = plane.sum() / m;
            let v = plane.mapv(|t| (t - mu) * (t - mu)).sum() / m;
            mean[ch] = mu;
            var[ch] = v;
        }
        let inv_std = var.mapv(|v: F| F::one() / (v + F::lit(EPS)).sqrt());
        let y = self.normalize(x, &mean, &inv_std);
        let mom = F::lit(MOMENTUM);
        let unbias = m / (m - F::one());
        for ch in 0..c {
            self.running_mean[[ch]] = (F::one() - mom) * self.running_mean[[ch]] + mom * mean[ch];
            self.running_var[[ch]] = (F::one() - mom) * self.running_var[[ch]] + mom * var[ch] * unbias;
        }
        // Cache the normalised input (before the affine map) and 1/σ.
        let mut xhat = x.clone();
        for mut sample in xhat.axis_iter_mut(Axis(0)) {
            for (ch, mut plane) in sample.axis_iter_mut(Axis(0)).enumerate() {
                let (mu, s) = (mean[ch], inv_std[ch]);
                plane.mapv_inplace(|v| (v - mu) * s);
            }
        }
        self.cache = Some((xhat, inv_std));
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<F>) -> Result<Tensor<F>> {
        let (xhat, inv_std) = self.cache.take().ok_or_else(|| missing_cache("batch_norm"))?;
        let (n, c, h, w) = xhat.dim();
        let m = F::lit((n * h * w) as f64);
        let mut gx = Tensor::zeros(xhat.raw_dim());
        for ch in 0..c {
            let g = grad.index_axis(Axis(1), ch);
            let xh = xhat.index_axis(Axis(1), ch);
            let sum_g = g.sum();
            let sum_gx = (&g * &xh).sum();
            self.beta.grad[[ch]] += sum_g;
            self.gamma.grad[[ch]] += sum_gx;
            let scale = self.gamma.value[[ch]] * inv_std[ch] / m;
            let mut out = gx.index_axis_mut(Axis(1), ch);
            ndarray::Zip::from(&mut out).and(&g).and(&xh).for_each(|o, &gv, &xv| {
                *o = scale * (m * gv - sum_g - xv * sum_gx);
            });
        }
        Ok(gx)
    }

    fn visit_params(&self, prefix: &str, f: &mut ParamVisitor<'_, F>) {
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "beta"), &self.beta);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_, F>) {
        f(&join(prefix, "gamma"), &mut self.gamma);
        f(&join(prefix, "beta"), &mut self.beta);
    }

    fn visit_buffers(&self, prefix: &str, f: &mut BufferVisitor<'_, F>) {
        f(&join(prefix, "running_mean"), &self.running_mean);
        f(&join(prefix, "running_var"), &self.running_var);
    }

    fn visit_buffers_mut(&mut self, prefix: &str, f: &mut BufferVisitorMut<'_, F>) {
        f(&join(prefix, "running_mean"), &mut self.running_mean);
        f(&join(prefix, "running_var"), &mut self.running_var);
    }
}
