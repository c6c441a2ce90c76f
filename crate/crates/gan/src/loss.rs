//! Conditional-GAN and L1 objectives in the numerically stable softplus form.

use ndarray::{Array2, ArrayView2, Zip};

use crate::scalar::Real;

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean absolute error over all components.
pub fn l1<T: Real>(target: ArrayView2<T>, output: ArrayView2<T>) -> f64 {
    let mut sum = 0.0;
    Zip::from(&target)
        .and(&output)
        .for_each(|&y, &g| sum += (g - y).abs().to_f64());
    sum / target.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Losses {
    pub d_loss: f64,
    pub g_loss: f64,
    pub l1: f64,
}

/// Single-cloud losses: `d = softplus(−real) + softplus(fake)`,
/// `g = softplus(−fake) + λ·L1`.
pub fn gan_losses<T: Real>(
    logit_real: f64,
    logit_fake: f64,
    target: ArrayView2<T>,
    output: ArrayView2<T>,
    lambda: f64,
) -> Losses {
    let l1 = l1(target, output);
    Losses {
        d_loss: softplus(-logit_real) + softplus(logit_fake),
        g_loss: softplus(-logit_fake) + lambda * l1,
        l1,
    }
}

/// Gradient of `scale·L1` with respect to `output`: `scale·sign(g − y)/len`.
pub fn l1_gradient<T: Real>(target: ArrayView2<T>, output: ArrayView2<T>, scale: f64) -> Array2<T> {
    let step = T::of(scale / target.len() as f64);
    let mut grad = Array2::zeros(output.raw_dim());
    Zip::from(&mut grad)
        .and(&target)
        .and(&output)
        .for_each(|d, &y, &g| {
            *d = if g > y {
                step
            } else if g < y {
                -step
            } else {
                T::zero()
            }
        });
    grad
}
