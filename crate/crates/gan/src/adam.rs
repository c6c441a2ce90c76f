//! Adam with bias correction.

use ndarray::Zip;

use crate::net::{zero_layers, Dense};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments mirroring one network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Dense<T>>,
    pub v: Vec<Dense<T>>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(shapes: &[(usize, usize)]) -> Self {
        AdamState {
            m: zero_layers(shapes),
            v: zero_layers(shapes),
            step: 0,
        }
    }

    pub fn step(
        &mut self,
        params: &mut [Dense<T>],
        grads: &[Dense<T>],
        lr: f64,
        config: &AdamConfig,
    ) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = T::of(1.0 / (1.0 - config.beta1.powi(t)));
        let c2 = T::of(1.0 / (1.0 - config.beta2.powi(t)));
        let (b1, b2) = (T::of(config.beta1), T::of(config.beta2));
        let (a1, a2) = (T::of(1.0 - config.beta1), T::of(1.0 - config.beta2));
        let (lr, eps) = (T::of(lr), T::of(config.eps));
        let update = |p: &mut T, m: &mut T, v: &mut T, g: &T| {
            *m = b1 * *m + a1 * *g;
            *v = b2 * *v + a2 * *g * *g;
            let m_hat = *m * c1;
            let v_hat = *v * c2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            Zip::from(&mut p.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .and(&g.weight)
                .for_each(update);
            Zip::from(&mut p.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(update);
        }
    }
}
