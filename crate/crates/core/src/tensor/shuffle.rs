use super::{Result, Tensor, TensorError};
use crate::Scalar;

// out[n, c, h*r+i, w*r+j] = in[n, c*r*r + i*r + j, h, w]
fn shuffle_into<F: Scalar>(src: &[F], [n, c, h, w]: [usize; 4], r: usize, dst: &mut [F], forward: bool) {
    let oc = c / (r * r);
    let (oh, ow) = (h * r, w * r);
    for b in 0..n {
        for co in 0..oc {
            for i in 0..r {
                for j in 0..r {
                    let ci = co * r * r + i * r + j;
                    for y in 0..h {
                        for x in 0..w {
                            let packed = ((b * c + ci) * h + y) * w + x;
                            let spread = ((b * oc + co) * oh + y * r + i) * ow + x * r + j;
                            if forward {
                                dst[spread] = src[packed];
                            } else {
                                dst[packed] = src[spread];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Sub-pixel rearrangement `(N, C*r^2, H, W) -> (N, C, rH, rW)`.
pub fn pixel_shuffle<F: Scalar>(input: &Tensor<F>, r: usize) -> Result<Tensor<F>> {
    let [n, c, h, w] = input.shape();
    if r == 0 || c % (r * r) != 0 {
        return Err(TensorError::InvalidArgument {
            op: "pixel_shuffle",
            detail: format!("{c} channels not divisible by r^2 = {}", r * r),
        });
    }
    let packed_shape = [n, c, h, w];
    let mut out = vec![F::zero(); input.numel()];
    shuffle_into(&input.data(), packed_shape, r, &mut out, true);
    Ok(Tensor::from_op(
        "pixel_shuffle",
        [n, c / (r * r), h * r, w * r],
        out,
        vec![input.clone()],
        Box::new(move |g, _| {
            let mut gin = vec![F::zero(); g.len()];
            shuffle_into(g, packed_shape, r, &mut gin, false);
            vec![Some(gin)]
        }),
    ))
}

/// Inverse of [`pixel_shuffle`]: `(N, C, rH, rW) -> (N, C*r^2, H, W)`.
pub fn pixel_unshuffle<F: Scalar>(input: &Tensor<F>, r: usize) -> Result<Tensor<F>> {
    let [n, c, oh, ow] = input.shape();
    if r == 0 || oh % r != 0 || ow % r != 0 {
        return Err(TensorError::InvalidArgument {
            op: "pixel_unshuffle",
            detail: format!("spatial dims {oh}x{ow} not divisible by {r}"),
        });
    }
    let packed_shape = [n, c * r * r, oh / r, ow / r];
    let mut out = vec![F::zero(); input.numel()];
    shuffle_into(&input.data(), packed_shape, r, &mut out, false);
    Ok(Tensor::from_op(
        "pixel_unshuffle",
        packed_shape,
        out,
        vec![input.clone()],
        Box::new(move |g, _| {
            let mut gin = vec![F::zero(); g.len()];
            shuffle_into(g, packed_shape, r, &mut gin, true);
            vec![Some(gin)]
        }),
    ))
}
