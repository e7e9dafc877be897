//! Central-difference oracle for layer gradients (test only).

use ndarray::{Array4, ArrayD};
use rand::Rng;

use super::{zero_grads, Layer};
use crate::rng::rng_from_seed;
use crate::tensor::Tensor;

pub(crate) fn random_tensor(dims: (usize, usize, usize, usize), seed: u64, margin: f64) -> Tensor<f64> {
    let mut rng = rng_from_seed(seed);
    Array4::from_shape_simple_fn(dims, || {
        let v: f64 = rng.random_range(margin..1.0);
        if rng.random::<bool>() {
            v
        } else {
            -v
        }
    })
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

/// Checks d<g, layer(x)>/dx and d<g, layer(x)>/dθ for up to `max_params`
/// parameter entries against central differences. Returns the worst relative error.
pub(crate) fn check_layer(layer: &mut dyn Layer<f64>, x: &Tensor<f64>, seed: u64, max_params: usize) -> f64 {
    let y = layer.forward(x).unwrap();
    let g = random_tensor(y.dim(), seed ^ 0x55, 0.1);
    zero_grads(layer);
    let gx = layer.backward(&g).unwrap();
    let mut analytic_params: Vec<(String, ArrayD<f64>)> = Vec::new();
    layer.visit_params("", &mut |n, p| analytic_params.push((n.to_string(), p.grad.clone())));

    let eps = 1e-6;
    let objective = |layer: &mut dyn Layer<f64>, x: &Tensor<f64>| -> f64 { (layer.forward(x).unwrap() * &g).sum() };
    let mut worst: f64 = 0.0;
    for idx in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp.as_slice_mut().unwrap()[idx] += eps;
        xm.as_slice_mut().unwrap()[idx] -= eps;
        let numeric = (objective(layer, &xp) - objective(layer, &xm)) / (2.0 * eps);
        worst = worst.max(rel_err(gx.as_slice().unwrap()[idx], numeric));
    }
    let mut checked = 0;
    for (pi, (_, grad)) in analytic_params.iter().enumerate() {
        let stride = (grad.len() / 8).max(1);
        for e in (0..grad.len()).step_by(stride) {
            if checked >= max_params {
                break;
            }
            let perturb = |layer: &mut dyn Layer<f64>, delta: f64| {
                let mut k = 0;
                layer.visit_params_mut("", &mut |_, p| {
                    if k == pi {
                        p.value.as_slice_mut().unwrap()[e] += delta;
                    }
                    k += 1;
                });
            };
            perturb(layer, eps);
            let lp = objective(layer, x);
            perturb(layer, -2.0 * eps);
            let lm = objective(layer, x);
            perturb(layer, eps);
            let numeric = (lp - lm) / (2.0 * eps);
            worst = worst.max(rel_err(grad.as_slice().unwrap()[e], numeric));
            checked += 1;
        }
    }
    worst
}

mod tests {
    use super::*;
    use crate::nn::*;

    const TOL: f64 = 1e-4;

    #[test]
    fn conv_layers() {
        let mut rng = rng_from_seed(10);
        let x = random_tensor((2, 2, 5, 5), 1, 0.0);
        assert!(check_layer(&mut Conv2d::same(2, 3, 3, &mut rng), &x, 2, 100) < TOL);
        assert!(check_layer(&mut Conv2d::new(2, 2, 3, 2, 1, &mut rng), &x, 3, 100) < TOL);
        let xs = random_tensor((1, 2, 3, 3), 4, 0.0);
        assert!(check_layer(&mut ConvTranspose2d::new(2, 2, 5, 2, 2, 1, &mut rng), &xs, 5, 100) < TOL);
    }

    #[test]
    fn activations() {
        let x = random_tensor((2, 3, 3, 3), 6, 0.05);
        assert!(check_layer(&mut Relu::new(), &x, 7, 0) < TOL);
        assert!(check_layer(&mut LeakyRelu::new(0.2), &x, 8, 0) < TOL);
        assert!(check_layer(&mut PRelu::new(3), &x, 9, 10) < TOL);
        assert!(check_layer(&mut Tanh::new(), &x, 10, 0) < TOL);
        assert!(check_layer(&mut Sigmoid::new(), &x, 11, 0) < TOL);
    }

    #[test]
    fn batch_norm_and_pool() {
        let x = random_tensor((3, 2, 3, 3), 12, 0.0);
        assert!(check_layer(&mut BatchNorm2d::new(2), &x, 13, 10) < TOL);
        assert!(check_layer(&mut GlobalAvgPool::new(), &x, 14, 0) < TOL);
    }

    #[test]
    fn structural_in_sequence() {
        let mut rng = rng_from_seed(15);
        let mut seq = Sequential::new()
            .push("coord", CoordChannels::new())
            .push("conv", Conv2d::same(3, 8, 3, &mut rng))
            .push("shuffle", PixelShuffle::new(2));
        let x = random_tensor((1, 1, 3, 3), 16, 0.0);
        assert!(check_layer(&mut seq, &x, 17, 100) < TOL);
    }
}
