use super::{Result, Tensor, TensorError};
use crate::Scalar;

/// Adam hyperparameters. No weight decay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter moment estimates.
#[derive(Clone, Debug)]
pub struct AdamState<F: Scalar> {
    pub m: Vec<F>,
    pub v: Vec<F>,
    pub t: u64,
    pub config: AdamConfig,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(param: &Tensor<F>, config: AdamConfig) -> Self {
        Self {
            m: vec![F::zero(); param.numel()],
            v: vec![F::zero(); param.numel()],
            t: 0,
            config,
        }
    }
}

/// One bias-corrected Adam update per parameter. Gradients are left in place.
pub fn adam_step<F: Scalar>(params: &[Tensor<F>], states: &mut [AdamState<F>]) -> Result<()> {
    if params.len() != states.len() {
        return Err(TensorError::InvalidArgument {
            op: "adam_step",
            detail: format!("{} params but {} states", params.len(), states.len()),
        });
    }
    let grads = params
        .iter()
        .enumerate()
        .map(|(index, p)| p.grad().ok_or(TensorError::MissingGrad { index }))
        .collect::<Result<Vec<_>>>()?;
    for (index, (p, s)) in params.iter().zip(states.iter()).enumerate() {
        if s.m.len() != p.numel() || s.v.len() != p.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                detail: format!("state {index} sized {} for parameter of {}", s.m.len(), p.numel()),
            });
        }
    }

    for ((p, s), g) in params.iter().zip(states.iter_mut()).zip(&grads) {
        s.t += 1;
        let c = s.config;
        let t = s.t as i32;
        let b1 = F::lit(c.beta1);
        let b2 = F::lit(c.beta2);
        let one = F::one();
        let bc1 = F::lit(1.0 - c.beta1.powi(t));
        let bc2 = F::lit(1.0 - c.beta2.powi(t));
        let lr = F::lit(c.lr);
        let eps = F::lit(c.eps);
        p.update_data(|data| {
            for (((x, &gi), m), v) in data.iter_mut().zip(g).zip(s.m.iter_mut()).zip(s.v.iter_mut()) {
                *m = b1 * *m + (one - b1) * gi;
                *v = b2 * *v + (one - b2) * gi * gi;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *x = *x - lr * mhat / (vhat.sqrt() + eps);
            }
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_leaves_params_unchanged() {
        let p = Tensor::<f64>::parameter([1, 1, 1, 3], vec![0.5, -1.0, 2.0]).unwrap();
        crate::tensor::backward(&crate::tensor::mse_loss(&p, &p.detach()).unwrap()).unwrap();
        assert_eq!(p.grad().unwrap(), vec![0.0; 3]);
        let mut st = vec![AdamState::new(&p, AdamConfig::default())];
        adam_step(std::slice::from_ref(&p), &mut st).unwrap();
        assert_eq!(p.to_vec(), vec![0.5, -1.0, 2.0]);
        assert_eq!(st[0].t, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let p = Tensor::<f64>::parameter([1, 1, 1, 1], vec![1.0]).unwrap();
        crate::tensor::backward(&crate::tensor::sum(&p)).unwrap();
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut st = vec![AdamState::new(&p, cfg)];
        adam_step(std::slice::from_ref(&p), &mut st).unwrap();
        // 1 - 0.1 * 1 / (1 + 1e-8)
        assert!((p.item() - 0.9).abs() < 1e-8);
    }

    #[test]
    fn missing_grad_rejected() {
        let p = Tensor::<f32>::parameter([1, 1, 1, 1], vec![1.0]).unwrap();
        let mut st = vec![AdamState::new(&p, AdamConfig::default())];
        assert!(matches!(
            adam_step(&[p], &mut st),
            Err(TensorError::MissingGrad { index: 0 })
        ));
    }
}
