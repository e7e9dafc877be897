//! Coordinate-channel augmentation and sub-pixel shuffle, with their adjoints.
//!
//! Both are linear rearrangements, so each backward pass is the exact
//! transpose of its forward pass.

use ndarray::{s, Array2, Array4, Axis};

use crate::error::{arg, Result};
use crate::tensor::{Float, Tensor};

fn linspace<F: Float>(n: usize) -> Vec<F> {
    if n == 1 {
        return vec![F::zero()];
    }
    (0..n)
        .map(|i| F::lit(-1.0 + 2.0 * i as f64 / (n - 1) as f64))
        .collect()
}

/// The two coordinate planes for an H×W map: x varies along the width, y along
/// the height, both spanning [-1, 1] inclusive. A unit dimension maps to 0.
pub fn coord_grid<F: Float>(h: usize, w: usize) -> (Array2<F>, Array2<F>) {
    let xs = linspace::<F>(w);
    let ys = linspace::<F>(h);
    let xgrid = Array2::from_shape_fn((h, w), |(_, x)| xs[x]);
    let ygrid = Array2::from_shape_fn((h, w), |(y, _)| ys[y]);
    (xgrid, ygrid)
}

/// Appends the x and y coordinate planes as two extra channels.
pub fn coord_augment<F: Float>(fm: &Tensor<F>) -> Tensor<F> {
    let (n, c, h, w) = fm.dim();
    let (xgrid, ygrid) = coord_grid::<F>(h, w);
    let mut out = Array4::zeros((n, c + 2, h, w));
    out.slice_mut(s![.., ..c, .., ..]).assign(fm);
    for mut sample in out.axis_iter_mut(Axis(0)) {
        sample.index_axis_mut(Axis(0), c).assign(&xgrid);
        sample.index_axis_mut(Axis(0), c + 1).assign(&ygrid);
    }
    out
}

/// Adjoint of [`coord_augment`]: drops the gradient of the two appended planes.
pub fn coord_augment_backward<F: Float>(grad: &Tensor<F>) -> Result<Tensor<F>> {
    let c = grad.dim().1;
    if c < 2 {
        return arg("coordinate backward needs at least two channels");
    }
    Ok(grad.slice(s![.., ..c - 2, .., ..]).to_owned())
}

/// N×(C·r²)×H×W → N×C×(H·r)×(W·r) with
/// `out[n, c, h, w] = in[n, c·r² + (h mod r)·r + (w mod r), h / r, w / r]`.
pub fn pixel_shuffle<F: Float>(fm: &Tensor<F>, r: usize) -> Result<Tensor<F>> {
    let (n, c, h, w) = fm.dim();
    if r == 0 || c % (r * r) != 0 {
        return arg(format!("pixel_shuffle: {c} channels not divisible by r^2 = {}", r * r));
    }
    let oc = c / (r * r);
    // Reshape N,oc,r,r,H,W → permute to N,oc,H,r,W,r.
    let std = fm.as_standard_layout();
    let v = std
        .view()
        .into_shape_with_order((n, oc, r, r, h, w))
        .expect("contiguous");
    let permuted = v.permuted_axes([0, 1, 4, 2, 5, 3]);
    let out = permuted
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((n, oc, h * r, w * r))
        .expect("contiguous");
    Ok(out)
}

/// Inverse (and adjoint) of [`pixel_shuffle`].
pub fn pixel_unshuffle<F: Float>(fm: &Tensor<F>, r: usize) -> Result<Tensor<F>> {
    let (n, c, h, w) = fm.dim();
    if r == 0 || h % r != 0 || w % r != 0 {
        return arg(format!("pixel_unshuffle: {h}x{w} not divisible by r = {r}"));
    }
    let (oh, ow) = (h / r, w / r);
    let std = fm.as_standard_layout();
    let v = std
        .view()
        .into_shape_with_order((n, c, oh, r, ow, r))
        .expect("contiguous");
    let permuted = v.permuted_axes([0, 1, 3, 5, 2, 4]);
    Ok(permuted
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((n, c * r * r, oh, ow))
        .expect("contiguous"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use ndarray::Array;
    use proptest::prelude::*;
    use rand::Rng;

    fn brute_shuffle(input: &Array4<f64>, r: usize) -> Array4<f64> {
        let (n, c, h, w) = input.dim();
        let oc = c / (r * r);
        Array4::from_shape_fn((n, oc, h * r, w * r), |(b, ch, y, x)| {
            input[[b, ch * r * r + (y % r) * r + (x % r), y / r, x / r]]
        })
    }

    #[test]
    fn coord_endpoints_for_two_by_two() {
        let fm = Array4::<f64>::zeros((1, 1, 2, 2));
        let out = coord_augment(&fm);
        assert_eq!(out.dim(), (1, 3, 2, 2));
        for row in 0..2 {
            assert_eq!(out[[0, 1, row, 0]], -1.0);
            assert_eq!(out[[0, 1, row, 1]], 1.0);
        }
        for col in 0..2 {
            assert_eq!(out[[0, 2, 0, col]], -1.0);
            assert_eq!(out[[0, 2, 1, col]], 1.0);
        }
    }

    #[test]
    fn coord_degenerate_and_three_rows() {
        let out = coord_augment(&Array4::<f64>::ones((2, 1, 1, 1)));
        assert!(out.slice(s![.., 1.., .., ..]).iter().all(|&v| v == 0.0));
        let out = coord_augment(&Array4::<f64>::ones((1, 1, 3, 4)));
        let ys: Vec<f64> = (0..3).map(|y| out[[0, 2, y, 0]]).collect();
        assert_eq!(ys, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn coord_keeps_original_channels() {
        let mut rng = rng_from_seed(1);
        let fm = Array::from_shape_fn((2, 3, 5, 4), |_| rng.random::<f64>());
        let out = coord_augment(&fm);
        assert_eq!(out.slice(s![.., ..3, .., ..]), fm);
        assert_eq!(coord_augment_backward(&out).unwrap(), fm);
    }

    #[test]
    fn shuffle_small_case() {
        let fm = Array4::from_shape_vec((1, 4, 1, 1), vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let out = pixel_shuffle(&fm, 2).unwrap();
        assert_eq!(out.dim(), (1, 1, 2, 2));
        assert_eq!(out.into_raw_vec_and_offset().0, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn shuffle_identity_and_shapes() {
        let mut rng = rng_from_seed(2);
        let fm = Array::from_shape_fn((1, 3, 4, 5), |_| rng.random::<f64>());
        assert_eq!(pixel_shuffle(&fm, 1).unwrap(), fm);
        let big = Array4::<f32>::zeros((1, 48, 40, 40));
        assert_eq!(pixel_shuffle(&big, 4).unwrap().dim(), (1, 3, 160, 160));
        assert!(pixel_shuffle(&Array4::<f32>::zeros((1, 5, 2, 2)), 2).is_err());
    }

    #[test]
    fn shuffle_matches_index_formula_on_random_tensors() {
        let mut rng = rng_from_seed(3);
        for _ in 0..1000 {
            let r = rng.random_range(1..=3);
            let dims = (
                rng.random_range(1..=2),
                r * r * rng.random_range(1..=3),
                rng.random_range(1..=4),
                rng.random_range(1..=4),
            );
            let fm = Array::from_shape_fn(dims, |_| rng.random::<f64>());
            assert_eq!(pixel_shuffle(&fm, r).unwrap(), brute_shuffle(&fm, r));
        }
    }

    proptest! {
        #[test]
        fn unshuffle_inverts_shuffle(seed in any::<u64>(), r in 1usize..4, oc in 1usize..3, h in 1usize..4, w in 1usize..4) {
            let mut rng = rng_from_seed(seed);
            let fm = Array::from_shape_fn((1, oc * r * r, h, w), |_| rng.random::<f64>());
            let shuffled = pixel_shuffle(&fm, r).unwrap();
            prop_assert_eq!(pixel_unshuffle(&shuffled, r).unwrap(), fm.clone());
            let mut a: Vec<f64> = fm.iter().copied().collect();
            let mut b: Vec<f64> = shuffled.iter().copied().collect();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
        }
    }

    /// Central differences of L(x) = <g, op(x)> against the adjoint applied to g.
    fn check_adjoint(
        x: &Array4<f64>,
        g: &Array4<f64>,
        op: impl Fn(&Array4<f64>) -> Array4<f64>,
        adj: impl Fn(&Array4<f64>) -> Array4<f64>,
    ) {
        let analytic = adj(g);
        let eps = 1e-6;
        for idx in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.as_slice_mut().unwrap()[idx] += eps;
            xm.as_slice_mut().unwrap()[idx] -= eps;
            let lp: f64 = (op(&xp) * g).sum();
            let lm: f64 = (op(&xm) * g).sum();
            let numeric = (lp - lm) / (2.0 * eps);
            let a = analytic.as_slice().unwrap()[idx];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            assert!((a - numeric).abs() / denom < 1e-4, "idx {idx}: {a} vs {numeric}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = rng_from_seed(4);
        let x = Array::from_shape_fn((1, 8, 2, 3), |_| rng.random::<f64>() - 0.5);
        let g = Array::from_shape_fn((1, 2, 4, 6), |_| rng.random::<f64>() - 0.5);
        check_adjoint(&x, &g, |t| pixel_shuffle(t, 2).unwrap(), |t| pixel_unshuffle(t, 2).unwrap());

        let x = Array::from_shape_fn((2, 2, 3, 3), |_| rng.random::<f64>() - 0.5);
        let g = Array::from_shape_fn((2, 4, 3, 3), |_| rng.random::<f64>() - 0.5);
        check_adjoint(&x, &g, coord_augment, |t| coord_augment_backward(t).unwrap());
    }
}
