use ndarray::{Array2, Array3, Array4, ArrayD, ArrayView3, Axis, Ix2, Ix4, IxDyn};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{check_channels, join, missing_cache, Layer, Param, ParamVisitor, ParamVisitorMut};
use crate::error::{arg, Result};
use crate::tensor::{Float, Tensor};

/// Unfolds `x` (C×H×W) into a (C·k·k)×(out_h·out_w) patch matrix.
pub fn im2col<F: Float>(
    x: ArrayView3<F>,
    k: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
) -> Array2<F> {
    let (c, h, w) = x.dim();
    let mut cols = Array2::zeros((c * k * k, out_h * out_w));
    let cols_slice = cols.as_slice_mut().expect("fresh array");
    let xs = x.as_standard_layout();
    let xs = xs.as_slice().expect("standard layout");
    for ch in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let dst = &mut cols_slice[row * out_h * out_w..(row + 1) * out_h * out_w];
                for oy in 0..out_h {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = &xs[(ch * h + iy as usize) * w..(ch * h + iy as usize + 1) * w];
                    let dst_row = &mut dst[oy * out_w..(oy + 1) * out_w];
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            *d = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters-and-adds a patch matrix back into C×H×W.
#[allow(clippy::too_many_arguments)]
pub fn col2im<F: Float>(
    cols: &Array2<F>,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
) -> Array3<F> {
    let mut x = Array3::zeros((c, h, w));
    let xs = x.as_slice_mut().expect("fresh array");
    let cs = cols.as_standard_layout();
    let cs = cs.as_slice().expect("standard layout");
    for ch in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let src = &cs[row * out_h * out_w..(row + 1) * out_h * out_w];
                for oy in 0..out_h {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let base = (ch * h + iy as usize) * w;
                    for ox in 0..out_w {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            xs[base + ix as usize] += src[oy * out_w + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

fn kaiming<F: Float, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> ArrayD<F> {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    ArrayD::from_shape_simple_fn(IxDyn(shape), || F::lit(normal.sample(rng)))
}

/// 2-D convolution, square kernel, zero padding. Weight layout Cout×Cin×k×k.
pub struct Conv2d<F: Float> {
    pub weight: Param<F>,
    pub bias: Param<F>,
    in_ch: usize,
    out_ch: usize,
    k: usize,
    stride: usize,
    pad: usize,
    cache: Option<Tensor<F>>,
}

impl<F: Float> Conv2d<F> {
    pub fn new<R: Rng + ?Sized>(in_ch: usize, out_ch: usize, k: usize, stride: usize, pad: usize, rng: &mut R) -> Self {
        Conv2d {
            weight: Param::new(kaiming(&[out_ch, in_ch, k, k], in_ch * k * k, rng)),
            bias: Param::new(ArrayD::zeros(IxDyn(&[out_ch]))),
            in_ch,
            out_ch,
            k,
            stride,
            pad,
            cache: None,
        }
    }

    /// Same-size convolution (odd kernel, stride 1).
    pub fn same<R: Rng + ?Sized>(in_ch: usize, out_ch: usize, k: usize, rng: &mut R) -> Self {
        Self::new(in_ch, out_ch, k, 1, k / 2, rng)
    }

    pub fn in_channels(&self) -> usize {
        self.in_ch
    }

    pub fn out_channels(&self) -> usize {
        self.out_ch
    }

    fn out_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (hp, wp) = (h + 2 * self.pad, w + 2 * self.pad);
        if hp < self.k || wp < self.k {
            return arg(format!("conv: input {h}x{w} smaller than kernel {}", self.k));
        }
        Ok(((hp - self.k) / self.stride + 1, (wp - self.k) / self.stride + 1))
    }

    fn weight_matrix(&self) -> ndarray::ArrayView2<'_, F> {
        self.weight
            .value
            .view()
            .into_shape_with_order((self.out_ch, self.in_ch * self.k * self.k))
            .expect("contiguous weight")
    }

    fn run(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        check_channels("conv2d", self.in_ch, x)?;
        let (n, _, h, w) = x.dim();
        let (oh, ow) = self.out_dims(h, w)?;
        let wm = self.weight_matrix();
        let bias = self.bias.value.view().into_dimensionality::<ndarray::Ix1>().expect("1-d bias");
        let mut out = Array4::zeros((n, self.out_ch, oh, ow));
        for (b, mut dst) in out.axis_iter_mut(Axis(0)).enumerate() {
            let cols = im2col(x.index_axis(Axis(0), b), self.k, self.stride, self.pad, oh, ow);
            let mut y = wm.dot(&cols);
            for (mut row, &bv) in y.axis_iter_mut(Axis(0)).zip(bias.iter()) {
                row.mapv_inplace(|v| v + bv);
            }
            dst.assign(&y.into_shape_with_order((self.out_ch, oh, ow)).expect("contiguous"));
        }
        Ok(out)
    }
}

impl<F: Float> Layer<F> for Conv2d<F> {
    fn infer(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        self.run(x)
    }

    fn forward(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let y = self.run(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<F>) -> Result<Tensor<F>> {
        let x = self.cache.take().ok_or_else(|| missing_cache("conv2d"))?;
        let (n, _, h, w) = x.dim();
        let (_, _, oh, ow) = grad.dim();
        let kk = self.in_ch * self.k * self.k;
        let mut gx = Array4::zeros(x.raw_dim());
        let mut gw = Array2::<F>::zeros((self.out_ch, kk));
        let mut gb = ndarray::Array1::<F>::zeros(self.out_ch);
        {
            let wm = self.weight_matrix();
            for b in 0..n {
                let g = grad
                    .index_axis(Axis(0), b)
                    .as_standard_layout()
                    .into_owned()
                    .into_shape_with_order((self.out_ch, oh * ow))
                    .expect("contiguous");
                let cols = im2col(x.index_axis(Axis(0), b), self.k, self.stride, self.pad, oh, ow);
                ndarray::linalg::general_mat_mul(F::one(), &g, &cols.t(), F::one(), &mut gw);
                gb += &g.sum_axis(Axis(1));
                let gcols = wm.t().dot(&g);
                let gxi = col2im(&gcols, self.in_ch, h, w, self.k, self.stride, self.pad, oh, ow);
                gx.index_axis_mut(Axis(0), b).assign(&gxi);
            }
        }
        let mut wgrad = self
            .weight
            .grad
            .view_mut()
            .into_dimensionality::<Ix4>()
            .expect("4-d weight");
        let mut wgrad2 = wgrad
            .view_mut()
            .into_shape_with_order((self.out_ch, kk))
            .expect("contiguous")
            .into_dimensionality::<Ix2>()
            .expect("2-d");
        wgrad2 += &gw;
        self.bias.grad += &gb.into_dyn();
        Ok(gx)
    }

    fn visit_params(&self, prefix: &str, f: &mut ParamVisitor<'_, F>) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_, F>) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

/// Transposed convolution (fractionally strided). Weight layout Cin×Cout×k×k.
/// Output size is `(in − 1)·stride − 2·pad + k + output_pad`.
pub struct ConvTranspose2d<F: Float> {
    pub weight: Param<F>,
    pub bias: Param<F>,
    in_ch: usize,
    out_ch: usize,
    k: usize,
    stride: usize,
    pad: usize,
    output_pad: usize,
    cache: Option<Tensor<F>>,
}

impl<F: Float> ConvTranspose2d<F> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        output_pad: usize,
        rng: &mut R,
    ) -> Self {
        // Each output pixel sees about in_ch·(k/stride)² inputs.
        let fan_in = (in_ch * k * k / (stride * stride)).max(1);
        ConvTranspose2d {
            weight: Param::new(kaiming(&[in_ch, out_ch, k, k], fan_in, rng)),
            bias: Param::new(ArrayD::zeros(IxDyn(&[out_ch]))),
            in_ch,
            out_ch,
            k,
            stride,
            pad,
            output_pad,
            cache: None,
        }
    }

    fn out_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let size = |n: usize| ((n - 1) * self.stride + self.k + self.output_pad).checked_sub(2 * self.pad);
        match (size(h), size(w)) {
            (Some(a), Some(b)) if a > 0 && b > 0 => Ok((a, b)),
            _ => arg(format!("conv_transpose: input {h}x{w} too small")),
        }
    }

    fn weight_matrix(&self) -> ndarray::ArrayView2<'_, F> {
        self.weight
            .value
            .view()
            .into_shape_with_order((self.in_ch, self.out_ch * self.k * self.k))
            .expect("contiguous weight")
    }

    fn run(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        check_channels("conv_transpose2d", self.in_ch, x)?;
        let (n, _, h, w) = x.dim();
        let (oh, ow) = self.out_dims(h, w)?;
        let wm = self.weight_matrix();
        let mut out = Array4::zeros((n, self.out_ch, oh, ow));
        for (b, mut dst) in out.axis_iter_mut(Axis(0)).enumerate() {
            let xi = x
                .index_axis(Axis(0), b)
                .as_standard_layout()
                .into_owned()
                .into_shape_with_order((self.in_ch, h * w))
                .expect("contiguous");
            let cols = wm.t().dot(&xi);
            let mut y = col2im(&cols, self.out_ch, oh, ow, self.k, self.stride, self.pad, h, w);
            for (mut plane, &bv) in y.axis_iter_mut(Axis(0)).zip(self.bias.value.iter()) {
                plane.mapv_inplace(|v| v + bv);
            }
            dst.assign(&y);
        }
        Ok(out)
    }
}

impl<F: Float> Layer<F> for ConvTranspose2d<F> {
    fn infer(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        self.run(x)
    }

    fn forward(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let y = self.run(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<F>) -> Result<Tensor<F>> {
        let x = self.cache.take().ok_or_else(|| missing_cache("conv_transpose2d"))?;
        let (n, _, h, w) = x.dim();
        let kk = self.out_ch * self.k * self.k;
        let mut gx = Array4::zeros(x.raw_dim());
        let mut gw = Array2::<F>::zeros((self.in_ch, kk));
        let mut gb = ndarray::Array1::<F>::zeros(self.out_ch);
        {
            let wm = self.weight_matrix();
            for b in 0..n {
                let g = grad.index_axis(Axis(0), b);
                gb += &g.sum_axis(Axis(2)).sum_axis(Axis(1));
                let gcols = im2col(g, self.k, self.stride, self.pad, h, w);
                let xi = x
                    .index_axis(Axis(0), b)
                    .as_standard_layout()
                    .into_owned()
                    .into_shape_with_order((self.in_ch, h * w))
                    .expect("contiguous");
                ndarray::linalg::general_mat_mul(F::one(), &xi, &gcols.t(), F::one(), &mut gw);
                let gxi = wm.dot(&gcols);
                gx.index_axis_mut(Axis(0), b)
                    .assign(&gxi.into_shape_with_order((self.in_ch, h, w)).expect("contiguous"));
            }
        }
        let mut wg = self
            .weight
            .grad
            .view_mut()
            .into_shape_with_order((self.in_ch, kk))
            .expect("contiguous")
            .into_dimensionality::<Ix2>()
            .expect("2-d");
        wg += &gw;
        self.bias.grad += &gb.into_dyn();
        Ok(gx)
    }

    fn visit_params(&self, prefix: &str, f: &mut ParamVisitor<'_, F>) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_, F>) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}
