//! Minimal layer library with explicit, cached backward passes.
//!
//! Training-mode [`Layer::forward`] caches whatever [`Layer::backward`] needs;
//! [`Layer::infer`] is cache-free and takes `&self`, so a trained network can
//! be shared for evaluation. Backward accumulates parameter gradients; callers
//! zero them between steps.

mod activation;
mod conv;
mod norm;
mod optim;
mod structural;

use ndarray::ArrayD;

use crate::error::{Error, Result};
use crate::tensor::{Checksum, Float, Tensor};

pub use activation::{LeakyRelu, PRelu, Relu, Sigmoid, Tanh};
pub use conv::{col2im, im2col, Conv2d, ConvTranspose2d};
pub use norm::BatchNorm2d;
pub use optim::Adam;
pub use structural::{CoordChannels, GlobalAvgPool, PixelShuffle};


#[derive(Debug, Clone)]
pub struct Param<F: Float> {
    pub value: ArrayD<F>,
    pub grad: ArrayD<F>,
}

impl<F: Float> Param<F> {
    pub fn new(value: ArrayD<F>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Param { value, grad }
    }
}

pub type ParamVisitor<'a, F> = dyn FnMut(&str, &Param<F>) + 'a;
pub type ParamVisitorMut<'a, F> = dyn FnMut(&str, &mut Param<F>) + 'a;
pub type BufferVisitor<'a, F> = dyn FnMut(&str, &ArrayD<F>) + 'a;
pub type BufferVisitorMut<'a, F> = dyn FnMut(&str, &mut ArrayD<F>) + 'a;

pub trait Layer<F: Float>: Send {
    fn infer(&self, x: &Tensor<F>) -> Result<Tensor<F>>;

    fn forward(&mut self, x: &Tensor<F>) -> Result<Tensor<F>>;

    fn backward(&mut self, grad: &Tensor<F>) -> Result<Tensor<F>>;

    fn visit_params(&self, _prefix: &str, _f: &mut ParamVisitor<'_, F>) {}

    fn visit_params_mut(&mut self, _prefix: &str, _f: &mut ParamVisitorMut<'_, F>) {}

    /// Non-trainable state (batch-norm running statistics).
    fn visit_buffers(&self, _prefix: &str, _f: &mut BufferVisitor<'_, F>) {}

    fn visit_buffers_mut(&mut self, _prefix: &str, _f: &mut BufferVisitorMut<'_, F>) {}
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub(crate) fn missing_cache(layer: &str) -> Error {
    Error::State(format!("{layer}: backward called without a training-mode forward"))
}

pub(crate) fn check_channels(layer: &str, expected: usize, x: &Tensor<impl Float>) -> Result<()> {
    if x.dim().1 != expected {
        return Err(Error::Argument(format!(
            "{layer}: expected {expected} input channels, got shape {:?}",
            x.dim()
        )));
    }
    Ok(())
}

/// Layers applied in order.
pub struct Sequential<F: Float> {
    layers: Vec<(String, Box<dyn Layer<F>>)>,
}

impl<F: Float> Default for Sequential<F> {
    fn default() -> Self {
        Sequential { layers: Vec::new() }
    }
}

impl<F: Float> Sequential<F> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(mut self, name: &str, layer: impl Layer<F> + 'static) -> Self {
        self.layers.push((name.to_string(), Box::new(layer)));
        self
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

impl<F: Float> Layer<F> for Sequential<F> {
    fn infer(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let mut cur = x.clone();
        for (_, layer) in &self.layers {
            cur = layer.infer(&cur)?;
        }
        Ok(cur)
    }

    fn forward(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let mut cur = x.clone();
        for (_, layer) in &mut self.layers {
            cur = layer.forward(&cur)?;
        }
        Ok(cur)
    }

    fn backward(&mut self, grad: &Tensor<F>) -> Result<Tensor<F>> {
        let mut cur = grad.clone();
        for (_, layer) in self.layers.iter_mut().rev() {
            cur = layer.backward(&cur)?;
        }
        Ok(cur)
    }

    fn visit_params(&self, prefix: &str, f: &mut ParamVisitor<'_, F>) {
        for (name, layer) in &self.layers {
            layer.visit_params(&join(prefix, name), f);
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_, F>) {
        for (name, layer) in &mut self.layers {
            layer.visit_params_mut(&join(prefix, name), f);
        }
    }

    fn visit_buffers(&self, prefix: &str, f: &mut BufferVisitor<'_, F>) {
        for (name, layer) in &self.layers {
            layer.visit_buffers(&join(prefix, name), f);
        }
    }

    fn visit_buffers_mut(&mut self, prefix: &str, f: &mut BufferVisitorMut<'_, F>) {
        for (name, layer) in &mut self.layers {
            layer.visit_buffers_mut(&join(prefix, name), f);
        }
    }
}

pub fn zero_grads<F: Float>(layer: &mut dyn Layer<F>) {
    layer.visit_params_mut("", &mut |_, p| p.grad.fill(F::zero()));
}

pub fn param_count<F: Float>(layer: &dyn Layer<F>) -> usize {
    let mut n = 0;
    layer.visit_params("", &mut |_, p| n += p.value.len());
    n
}

/// Checksum over every trainable parameter value, in visiting order.
pub fn param_checksum<F: Float>(layer: &dyn Layer<F>) -> u64 {
    let mut sum = Checksum::default();
    layer.visit_params("", &mut |name, p| {
        sum.update_bytes(name.as_bytes());
        sum.update(p.value.iter().copied());
    });
    sum.value()
}

/// Flattened copy of every parameter gradient, in visiting order.
pub fn collect_grads<F: Float>(layer: &dyn Layer<F>) -> Vec<F> {
    let mut out = Vec::new();
    layer.visit_params("", &mut |_, p| out.extend(p.grad.iter().copied()));
    out
}

#[cfg(test)]
pub(crate) mod gradcheck;
