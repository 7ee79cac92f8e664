//! Central-difference verification of backprop gradients.

use crate::tensor::{self, Tensor};

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Largest elementwise relative error between backprop and central
/// differences of step `h`, over every element of every parameter.
/// `loss` must rebuild the graph on each call.
pub fn max_grad_error(params: &[Tensor<f64>], h: f64, loss: impl Fn() -> Tensor<f64>) -> f64 {
    for p in params {
        p.zero_grad();
    }
    tensor::backward(&loss()).expect("loss is a scalar");
    let analytic: Vec<Vec<f64>> = params.iter().map(|p| p.grad_or_zeros()).collect();
    let mut worst = 0.0f64;
    for (p, g) in params.iter().zip(&analytic) {
        for i in 0..p.numel() {
            let orig = p.data()[i];
            p.update_data(|d| d[i] = orig + h);
            let plus = loss().item();
            p.update_data(|d| d[i] = orig - h);
            let minus = loss().item();
            p.update_data(|d| d[i] = orig);
            worst = worst.max(rel_err(g[i], (plus - minus) / (2.0 * h)));
        }
    }
    worst
}
