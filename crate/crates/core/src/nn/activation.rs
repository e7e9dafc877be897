use ndarray::{ArrayD, Axis, IxDyn, Zip};

use super::{check_channels, join, missing_cache, Layer, Param, ParamVisitor, ParamVisitorMut};
use crate::error::Result;
use crate::tensor::{Float, Tensor};

#[derive(Default)]
pub struct Relu<F: Float> {
    cache: Option<Tensor<F>>,
}

impl<F: Float> Relu<F> {
    pub fn new() -> Self {
        Relu { cache: None }
    }
}

impl<F: Float> Layer<F> for Relu<F> {
    fn infer(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(x.mapv(|v| v.max(F::zero())))
    }

    fn forward(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        self.cache = Some(x.clone());
        self.infer(x)
    }

    fn backward(&mut self, grad: &Tensor<F>) -> Result<Tensor<F>> {
        let x = self.cache.take().ok_or_else(|| missing_cache("relu"))?;
        Ok(Zip::from(grad).and(&x).map_collect(|&g, &v| if v > F::zero() { g } else { F::zero() }))
    }
}

pub struct LeakyRelu<F: Float> {
    slope: F,
    cache: Option<Tensor<F>>,
}

impl<F: Float> LeakyRelu<F> {
    pub fn new(slope: f64) -> Self {
        LeakyRelu {
            slope: F::lit(slope),
            cache: None,
        }
    }
}

impl<F: Float> Layer<F> for LeakyRelu<F> {
    fn infer(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let s = self.slope;
        Ok(x.mapv(|v| if v > F::zero() { v } else { v * s }))
    }

    fn forward(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        self.cache = Some(x.clone());
        self.infer(x)
    }

    fn backward(&mut self, grad: &Tensor<F>) -> Result<Tensor<F>> {
        let x = self.cache.take().ok_or_else(|| missing_cache("leaky_relu"))?;
        let s = self.slope;
        Ok(Zip::from(grad).and(&x).map_collect(|&g, &v| if v > F::zero() { g } else { g * s }))
    }
}

/// Parametric ReLU with one learned slope per channel.
pub struct PRelu<F: Float> {
    pub slope: Param<F>,
    channels: usize,
    cache: Option<Tensor<F>>,
}

impl<F: Float> PRelu<F> {
    pub fn new(channels: usize) -> Self {
        PRelu {
            slope: Param::new(ArrayD::from_elem(IxDyn(&[channels]), F::lit(0.25))),
            channels,
            cache: None,
        }
    }
}

impl<F: Float> Layer<F> for PRelu<F> {
    fn infer(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        check_channels("prelu", self.channels, x)?;
        let mut y = x.clone();
        for mut sample in y.axis_iter_mut(Axis(0)) {
            for (mut plane, &a) in sample.axis_iter_mut(Axis(0)).zip(self.slope.value.iter()) {
                plane.mapv_inplace(|v| if v > F::zero() { v } else { v * a });
            }
        }
        Ok(y)
    }

    fn forward(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let y = self.infer(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<F>) -> Result<Tensor<F>> {
        let x = self.cache.take().ok_or_else(|| missing_cache("prelu"))?;
        let mut gx = grad.clone();
        let zero = F::zero();
        for (mut gs, xs) in gx.axis_iter_mut(Axis(0)).zip(x.axis_iter(Axis(0))) {
            for (c, (mut gp, xp)) in gs.axis_iter_mut(Axis(0)).zip(xs.axis_iter(Axis(0))).enumerate() {
                let a = self.slope.value[[c]];
                let mut ga = zero;
                Zip::from(&mut gp).and(&xp).for_each(|g, &v| {
                    if v <= zero {
                        ga += *g * v;
                        *g *= a;
                    }
                });
                self.slope.grad[[c]] += ga;
            }
        }
        Ok(gx)
    }

    fn visit_params(&self, prefix: &str, f: &mut ParamVisitor<'_, F>) {
        f(&join(prefix, "slope"), &self.slope);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_, F>) {
        f(&join(prefix, "slope"), &mut self.slope);
    }
}

#[derive(Default)]
pub struct Tanh<F: Float> {
    cache: Option<Tensor<F>>,
}

impl<F: Float> Tanh<F> {
    pub fn new() -> Self {
        Tanh { cache: None }
    }
}

impl<F: Float> Layer<F> for Tanh<F> {
    fn infer(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(x.mapv(F::tanh))
    }

    fn forward(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let y = self.infer(x)?;
        self.cache = Some(y.clone());
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<F>) -> Result<Tensor<F>> {
        let y = self.cache.take().ok_or_else(|| missing_cache("tanh"))?;
        Ok(Zip::from(grad).and(&y).map_collect(|&g, &t| g * (F::one() - t * t)))
    }
}

#[derive(Default)]
pub struct Sigmoid<F: Float> {
    cache: Option<Tensor<F>>,
}

impl<F: Float> Sigmoid<F> {
    pub fn new() -> Self {
        Sigmoid { cache: None }
    }
}

pub(crate) fn sigmoid<F: Float>(v: F) -> F {
    F::one() / (F::one() + (-v).exp())
}

impl<F: Float> Layer<F> for Sigmoid<F> {
    fn infer(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(x.mapv(sigmoid))
    }

    fn forward(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let y = self.infer(x)?;
        self.cache = Some(y.clone());
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<F>) -> Result<Tensor<F>> {
        let y = self.cache.take().ok_or_else(|| missing_cache("sigmoid"))?;
        Ok(Zip::from(grad).and(&y).map_collect(|&g, &s| g * s * (F::one() - s)))
    }
}
