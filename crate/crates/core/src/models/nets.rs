use rand::Rng;

use crate::error::Result;
use crate::nn::{
    join, BatchNorm2d, BufferVisitor, BufferVisitorMut, Conv2d, ConvTranspose2d, CoordChannels, GlobalAvgPool,
    Layer, LeakyRelu, PRelu, ParamVisitor, ParamVisitorMut, PixelShuffle, Relu, Sequential, Tanh,
};
use crate::tensor::{Float, Tensor};

/// Optional coordinate planes ahead of the first convolution.
fn head<F: Float>(coord: bool) -> (Sequential<F>, usize) {
    if coord {
        (Sequential::new().push("coord", CoordChannels::new()), 2)
    } else {
        (Sequential::new(), 0)
    }
}

pub(super) fn srcnn<F: Float, R: Rng + ?Sized>(c: usize, n1: usize, n2: usize, coord: bool, rng: &mut R) -> Sequential<F> {
    let (seq, extra) = head(coord);
    seq.push("conv1", Conv2d::same(c + extra, n1, 9, rng))
        .push("relu1", Relu::new())
        .push("conv2", Conv2d::same(n1, n2, 1, rng))
        .push("relu2", Relu::new())
        .push("conv3", Conv2d::same(n2, c, 5, rng))
}

pub(super) fn subcnn<F: Float, R: Rng + ?Sized>(
    c: usize,
    n1: usize,
    n2: usize,
    scale: usize,
    coord: bool,
    rng: &mut R,
) -> Sequential<F> {
    let (seq, extra) = head(coord);
    seq.push("conv1", Conv2d::same(c + extra, n1, 5, rng))
        .push("tanh1", Tanh::new())
        .push("conv2", Conv2d::same(n1, n2, 3, rng))
        .push("tanh2", Tanh::new())
        .push("conv3", Conv2d::same(n2, c * scale * scale, 3, rng))
        .push("shuffle", PixelShuffle::new(scale))
}

pub(super) fn fsrcnn<F: Float, R: Rng + ?Sized>(
    c: usize,
    d: usize,
    s: usize,
    m: usize,
    scale: usize,
    coord: bool,
    rng: &mut R,
) -> Sequential<F> {
    let (seq, extra) = head(coord);
    let mut seq = seq
        .push("feature", Conv2d::same(c + extra, d, 5, rng))
        .push("feature_act", PRelu::new(d))
        .push("shrink", Conv2d::same(d, s, 1, rng))
        .push("shrink_act", PRelu::new(s));
    for i in 0..m {
        seq = seq
            .push(&format!("map{i}"), Conv2d::same(s, s, 3, rng))
            .push(&format!("map{i}_act"), PRelu::new(s));
    }
    // Output size (n-1)·4 − 8 + 9 + 3 = 4n.
    seq.push("expand", Conv2d::same(s, d, 1, rng))
        .push("expand_act", PRelu::new(d))
        .push("deconv", ConvTranspose2d::new(d, c, 9, scale, 4, scale - 1, rng))
}

/// conv-BN-PReLU-conv-BN with an identity skip.
pub(super) struct ResidualBlock<F: Float> {
    inner: Sequential<F>,
}

impl<F: Float> ResidualBlock<F> {
    fn new<R: Rng + ?Sized>(f: usize, rng: &mut R) -> Self {
        ResidualBlock {
            inner: Sequential::new()
                .push("conv1", Conv2d::same(f, f, 3, rng))
                .push("bn1", BatchNorm2d::new(f))
                .push("act", PRelu::new(f))
                .push("conv2", Conv2d::same(f, f, 3, rng))
                .push("bn2", BatchNorm2d::new(f)),
        }
    }
}

impl<F: Float> Layer<F> for ResidualBlock<F> {
    fn infer(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(self.inner.infer(x)? + x)
    }

    fn forward(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(self.inner.forward(x)? + x)
    }

    fn backward(&mut self, grad: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(self.inner.backward(grad)? + grad)
    }

    fn visit_params(&self, prefix: &str, f: &mut ParamVisitor<'_, F>) {
        self.inner.visit_params(prefix, f)
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_, F>) {
        self.inner.visit_params_mut(prefix, f)
    }

    fn visit_buffers(&self, prefix: &str, f: &mut BufferVisitor<'_, F>) {
        self.inner.visit_buffers(prefix, f)
    }

    fn visit_buffers_mut(&mut self, prefix: &str, f: &mut BufferVisitorMut<'_, F>) {
        self.inner.visit_buffers_mut(prefix, f)
    }
}

/// Residual generator: head, residual trunk with a long skip, two ×2
/// sub-pixel stages, output convolution.
pub(super) struct SrganGenerator<F: Float> {
    head: Sequential<F>,
    blocks: Sequential<F>,
    trunk_tail: Sequential<F>,
    upsample: Sequential<F>,
}

impl<F: Float> SrganGenerator<F> {
    pub(super) fn new<R: Rng + ?Sized>(c: usize, f: usize, n_blocks: usize, coord: bool, rng: &mut R) -> Self {
        let (seq, extra) = head(coord);
        let head = seq.push("conv", Conv2d::same(c + extra, f, 9, rng)).push("act", PRelu::new(f));
        let mut blocks = Sequential::new();
        for i in 0..n_blocks {
            blocks = blocks.push(&i.to_string(), ResidualBlock::new(f, rng));
        }
        let trunk_tail = Sequential::new()
            .push("conv", Conv2d::same(f, f, 3, rng))
            .push("bn", BatchNorm2d::new(f));
        let upsample = Sequential::new()
            .push("conv1", Conv2d::same(f, 4 * f, 3, rng))
            .push("shuffle1", PixelShuffle::new(2))
            .push("act1", PRelu::new(f))
            .push("conv2", Conv2d::same(f, 4 * f, 3, rng))
            .push("shuffle2", PixelShuffle::new(2))
            .push("act2", PRelu::new(f))
            .push("out", Conv2d::same(f, c, 9, rng));
        SrganGenerator {
            head,
            blocks,
            trunk_tail,
            upsample,
        }
    }

    fn parts(&self) -> [(&'static str, &Sequential<F>); 4] {
        [
            ("head", &self.head),
            ("blocks", &self.blocks),
            ("trunk", &self.trunk_tail),
            ("upsample", &self.upsample),
        ]
    }

    fn parts_mut(&mut self) -> [(&'static str, &mut Sequential<F>); 4] {
        [
            ("head", &mut self.head),
            ("blocks", &mut self.blocks),
            ("trunk", &mut self.trunk_tail),
            ("upsample", &mut self.upsample),
        ]
    }
}

impl<F: Float> Layer<F> for SrganGenerator<F> {
    fn infer(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let h = self.head.infer(x)?;
        let r = self.trunk_tail.infer(&self.blocks.infer(&h)?)? + &h;
        self.upsample.infer(&r)
    }

    fn forward(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let h = self.head.forward(x)?;
        let r = self.trunk_tail.forward(&self.blocks.forward(&h)?)? + &h;
        self.upsample.forward(&r)
    }

    fn backward(&mut self, grad: &Tensor<F>) -> Result<Tensor<F>> {
        let g = self.upsample.backward(grad)?;
        let g_trunk = self.blocks.backward(&self.trunk_tail.backward(&g)?)?;
        self.head.backward(&(g_trunk + &g))
    }

    fn visit_params(&self, prefix: &str, f: &mut ParamVisitor<'_, F>) {
        for (name, part) in self.parts() {
            part.visit_params(&join(prefix, name), f);
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_, F>) {
        for (name, part) in self.parts_mut() {
            part.visit_params_mut(&join(prefix, name), f);
        }
    }

    fn visit_buffers(&self, prefix: &str, f: &mut BufferVisitor<'_, F>) {
        for (name, part) in self.parts() {
            part.visit_buffers(&join(prefix, name), f);
        }
    }

    fn visit_buffers_mut(&mut self, prefix: &str, f: &mut BufferVisitorMut<'_, F>) {
        for (name, part) in self.parts_mut() {
            part.visit_buffers_mut(&join(prefix, name), f);
        }
    }
}

/// Eight 3×3 convolutions (widths b, b, 2b, 2b, 4b, 4b, 8b, 8b; every second
/// one strided), global pooling and a 1×1 dense head emitting one logit.
pub(super) fn discriminator<F: Float, R: Rng + ?Sized>(c: usize, b: usize, rng: &mut R) -> Sequential<F> {
    let mut seq = Sequential::new()
        .push("conv0", Conv2d::same(c, b, 3, rng))
        .push("act0", LeakyRelu::new(0.2));
    let widths = [(b, b, 2), (b, 2 * b, 1), (2 * b, 2 * b, 2), (2 * b, 4 * b, 1), (4 * b, 4 * b, 2), (4 * b, 8 * b, 1), (8 * b, 8 * b, 2)];
    for (i, (cin, cout, stride)) in widths.into_iter().enumerate() {
        let i = i + 1;
        seq = seq
            .push(&format!("conv{i}"), Conv2d::new(cin, cout, 3, stride, 1, rng))
            .push(&format!("bn{i}"), BatchNorm2d::new(cout))
            .push(&format!("act{i}"), LeakyRelu::new(0.2));
    }
    seq.push("pool", GlobalAvgPool::new())
        .push("dense1", Conv2d::new(8 * b, 16 * b, 1, 1, 0, rng))
        .push("dense_act", LeakyRelu::new(0.2))
        .push("dense2", Conv2d::new(16 * b, 1, 1, 1, 0, rng))
}
