//! Adam with optional decoupled weight decay.

use crate::params::{ParamId, ParamSet};
use ndarray::ArrayD;
use trajmia_core::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay coefficient: `theta -= lr * weight_decay * theta`
    /// after the adaptive step. Zero disables decay.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

pub struct Adam<F: Scalar> {
    cfg: AdamConfig,
    m: Vec<ArrayD<F>>,
    v: Vec<ArrayD<F>>,
    t: u64,
}

impl<F: Scalar> Adam<F> {
    pub fn new(cfg: AdamConfig, params: &ParamSet<F>) -> Self {
        let m = params.ids().map(|id| ArrayD::zeros(params.value(id).raw_dim())).collect();
        let v = params.ids().map(|id| ArrayD::zeros(params.value(id).raw_dim())).collect();
        Self { cfg, m, v, t: 0 }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    /// One update over the provided `(param, gradient)` pairs.
    pub fn step(&mut self, params: &mut ParamSet<F>, grads: &[(ParamId, ArrayD<F>)]) {
        self.t += 1;
        let lr = F::of_f64(self.cfg.lr);
        let b1 = F::of_f64(self.cfg.beta1);
        let b2 = F::of_f64(self.cfg.beta2);
        let eps = F::of_f64(self.cfg.eps);
        let bc1 = F::of_f64(1.0 - self.cfg.beta1.powi(self.t as i32));
        let bc2 = F::of_f64(1.0 - self.cfg.beta2.powi(self.t as i32));
        let decay = F::of_f64(self.cfg.lr * self.cfg.weight_decay);

        for (id, grad) in grads {
            let m = &mut self.m[id.0];
            let v = &mut self.v[id.0];
            let theta = params.value_mut(*id);
            azip_update(m, v, theta, grad, b1, b2, lr, eps, bc1, bc2, decay);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn azip_update<F: Scalar>(
    m: &mut ArrayD<F>,
    v: &mut ArrayD<F>,
    theta: &mut ArrayD<F>,
    grad: &ArrayD<F>,
    b1: F,
    b2: F,
    lr: F,
    eps: F,
    bc1: F,
    bc2: F,
    decay: F,
) {
    let one = F::one();
    ndarray::Zip::from(theta)
        .and(m)
        .and(v)
        .and(grad)
        .for_each(|t, m, v, &g| {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *t = *t - lr * m_hat / (v_hat.sqrt() + eps);
            if decay > F::zero() {
                *t = *t - decay * *t;
            }
        });
}
