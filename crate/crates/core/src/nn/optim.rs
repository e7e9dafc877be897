use ndarray::ArrayD;

use super::Layer;
use crate::tensor::Float;

/// Adam with bias correction. Moment buffers follow the parameter visiting
/// order, so one optimizer must stay paired with one network.
#[derive(Debug, Clone)]
pub struct Adam<F: Float> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<ArrayD<F>>,
    second: Vec<ArrayD<F>>,
}

impl<F: Float> Adam<F> {
    pub fn new(beta1: f64, beta2: f64) -> Self {
        Adam {
            beta1,
            beta2,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, net: &mut dyn Layer<F>, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (F::lit(self.beta1), F::lit(self.beta2));
        let corr1 = F::lit(1.0 - self.beta1.powi(t));
        let corr2 = F::lit(1.0 - self.beta2.powi(t));
        let lr = F::lit(lr);
        let eps = F::lit(self.eps);
        let (first, second) = (&mut self.first, &mut self.second);
        let mut idx = 0;
        net.visit_params_mut("", &mut |_, p| {
            if first.len() <= idx {
                first.push(ArrayD::zeros(p.value.raw_dim()));
                second.push(ArrayD::zeros(p.value.raw_dim()));
            }
            let (m, v) = (&mut first[idx], &mut second[idx]);
            ndarray::Zip::from(&mut p.value)
                .and(&mut p.grad)
                .and(m)
                .and(v)
                .for_each(|w, g, m, v| {
                    *m = b1 * *m + (F::one() - b1) * *g;
                    *v = b2 * *v + (F::one() - b2) * *g * *g;
                    let mhat = *m / corr1;
                    let vhat = *v / corr2;
                    *w -= lr * mhat / (vhat.sqrt() + eps);
                    *g = F::zero();
                });
            idx += 1;
        });
    }
}
