use super::{Result, Tensor, TensorError};
use crate::Scalar;

fn same_shape<F: Scalar>(op: &'static str, a: &Tensor<F>, b: &Tensor<F>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op,
            detail: format!("{:?} vs {:?}", a.shape(), b.shape()),
        });
    }
    Ok(())
}

/// Elementwise `a + b`.
pub fn add<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    same_shape("add", a, b)?;
    let data = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x + y).collect();
    Ok(Tensor::from_op(
        "add",
        a.shape(),
        data,
        vec![a.clone(), b.clone()],
        Box::new(|g, parents| {
            parents
                .iter()
                .map(|p| p.requires_grad().then(|| g.to_vec()))
                .collect()
        }),
    ))
}

/// Sum of all elements as a `(1,1,1,1)` tensor.
pub fn sum<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    let total = x.data().iter().copied().sum::<F>();
    let n = x.numel();
    Tensor::from_op(
        "sum",
        [1, 1, 1, 1],
        vec![total],
        vec![x.clone()],
        Box::new(move |g, _| vec![Some(vec![g[0]; n])]),
    )
}

/// Mean squared error between same-shaped tensors.
pub fn mse_loss<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    same_shape("mse_loss", a, b)?;
    let count = F::lit(a.numel() as f64);
    let diff: Vec<F> = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x - y).collect();
    let loss = diff.iter().map(|&d| d * d).sum::<F>() / count;
    Ok(Tensor::from_op(
        "mse_loss",
        [1, 1, 1, 1],
        vec![loss],
        vec![a.clone(), b.clone()],
        Box::new(move |g, parents| {
            let k = F::lit(2.0) * g[0] / count;
            let ga: Vec<F> = diff.iter().map(|&d| k * d).collect();
            let gb = parents[1]
                .requires_grad()
                .then(|| ga.iter().map(|&v| -v).collect());
            vec![parents[0].requires_grad().then_some(ga), gb]
        }),
    ))
}

/// Exact GELU, `x * Phi(x)` with the Gaussian CDF via `erf`.
pub fn gelu<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    let inv_sqrt2 = F::lit(std::f64::consts::FRAC_1_SQRT_2);
    let half = F::lit(0.5);
    let data = x
        .data()
        .iter()
        .map(|&v| v * half * (F::one() + (v * inv_sqrt2).erf()))
        .collect();
    Tensor::from_op(
        "gelu",
        x.shape(),
        data,
        vec![x.clone()],
        Box::new(move |g, parents| {
            let inv_sqrt_2pi = F::lit(0.398_942_280_401_432_7);
            let xs = parents[0].data();
            let grad = xs
                .iter()
                .zip(g)
                .map(|(&v, &gv)| {
                    let cdf = half * (F::one() + (v * inv_sqrt2).erf());
                    let pdf = inv_sqrt_2pi * (-half * v * v).exp();
                    gv * (cdf + v * pdf)
                })
                .collect();
            vec![Some(grad)]
        }),
    )
}

pub fn sigmoid<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    let out: Vec<F> = x
        .data()
        .iter()
        .map(|&v| F::one() / (F::one() + (-v).exp()))
        .collect();
    let saved = out.clone();
    Tensor::from_op(
        "sigmoid",
        x.shape(),
        out,
        vec![x.clone()],
        Box::new(move |g, _| {
            let grad = saved
                .iter()
                .zip(g)
                .map(|(&s, &gv)| gv * s * (F::one() - s))
                .collect();
            vec![Some(grad)]
        }),
    )
}
