//! 2-D cross-correlation via im2col.
//!
//! For each batch item the input is unfolded into a `(C_in*kh*kw, OH*OW)`
//! column matrix; forward and both backward products are row-parallel over
//! that matrix with a fixed per-row reduction order.

use super::{Result, Tensor, TensorError};
use crate::par::for_each_chunk;
use crate::Scalar;

#[derive(Clone, Copy, Debug)]
struct Geometry {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.oh * self.ow
    }
}

/// Output spatial dims of a convolution, or `None` when they would be
/// non-positive.
pub fn conv_output_dims(
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
) -> Option<(usize, usize)> {
    if stride == 0 {
        return None;
    }
    let ph = h + 2 * padding;
    let pw = w + 2 * padding;
    if ph < kh || pw < kw {
        return None;
    }
    Some(((ph - kh) / stride + 1, (pw - kw) / stride + 1))
}

fn im2col<F: Scalar>(x: &[F], g: &Geometry, cols: &mut [F]) {
    let p = g.p();
    let (kh, kw) = (g.kh, g.kw);
    for_each_chunk(cols, p, |j, row| {
        let ci = j / (kh * kw);
        let ky = (j / kw) % kh;
        let kx = j % kw;
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for oy in 0..g.oh {
            let out = &mut row[oy * g.ow..(oy + 1) * g.ow];
            let iy = (oy * g.stride + ky) as isize - g.pad as isize;
            if iy < 0 || iy >= g.h as isize {
                out.fill(F::zero());
                continue;
            }
            let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
            for (ox, o) in out.iter_mut().enumerate() {
                let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                *o = if ix < 0 || ix >= g.w as isize {
                    F::zero()
                } else {
                    src[ix as usize]
                };
            }
        }
    });
}

/// Scatter-adds a column-gradient matrix back onto an input-shaped plane set.
fn col2im<F: Scalar>(gcols: &[F], g: &Geometry, gx: &mut [F]) {
    let p = g.p();
    let (kh, kw) = (g.kh, g.kw);
    for_each_chunk(gx, g.h * g.w, |ci, plane| {
        for ky in 0..kh {
            for kx in 0..kw {
                let j = (ci * kh + ky) * kw + kx;
                let row = &gcols[j * p..(j + 1) * p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let src = &row[oy * g.ow..(oy + 1) * g.ow];
                    for (ox, &v) in src.iter().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            dst[ix as usize] = dst[ix as usize] + v;
                        }
                    }
                }
            }
        }
    });
}

#[inline]
fn axpy<F: Scalar>(out: &mut [F], a: F, x: &[F]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o = *o + a * v;
    }
}

/// Dot product with eight fixed accumulator lanes (deterministic, vectorizable).
#[inline]
pub(crate) fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    let mut acc = [F::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] = acc[i] + x[i] * y[i];
        }
    }
    let mut tail = F::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail = tail + x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

fn geometry<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    bias: &Tensor<F>,
    stride: usize,
    padding: usize,
) -> Result<Geometry> {
    let [n, cin, h, w] = input.shape();
    let [cout, wcin, kh, kw] = weight.shape();
    if wcin != cin {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            detail: format!(
                "input {:?} has {cin} channels but weight {:?} expects {wcin}",
                input.shape(),
                weight.shape()
            ),
        });
    }
    if bias.numel() != cout {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            detail: format!("bias {:?} must hold {cout} values", bias.shape()),
        });
    }
    if stride == 0 {
        return Err(TensorError::InvalidArgument {
            op: "conv2d",
            detail: "stride must be >= 1".into(),
        });
    }
    let (oh, ow) = conv_output_dims(h, w, kh, kw, stride, padding).ok_or_else(|| {
        TensorError::InvalidArgument {
            op: "conv2d",
            detail: format!(
                "non-positive output dims for input {h}x{w}, kernel {kh}x{kw}, padding {padding}"
            ),
        }
    })?;
    Ok(Geometry {
        n,
        cin,
        h,
        w,
        cout,
        kh,
        kw,
        stride,
        pad: padding,
        oh,
        ow,
    })
}

/// Cross-correlation of `input (N,C_in,H,W)` with `weight (C_out,C_in,kh,kw)`
/// plus a per-output-channel `bias` (any shape holding `C_out` values).
pub fn conv2d<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    bias: &Tensor<F>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<F>> {
    let g = geometry(input, weight, bias, stride, padding)?;
    let (k, p) = (g.k(), g.p());
    let x = input.data();
    let wt = weight.data();
    let b = bias.data();

    let mut out = vec![F::zero(); g.n * g.cout * p];
    let mut cols = vec![F::zero(); k * p];
    for n in 0..g.n {
        im2col(&x[n * g.cin * g.h * g.w..(n + 1) * g.cin * g.h * g.w], &g, &mut cols);
        let out_n = &mut out[n * g.cout * p..(n + 1) * g.cout * p];
        for_each_chunk(out_n, p, |oc, row| {
            row.fill(b[oc]);
            let wrow = &wt[oc * k..(oc + 1) * k];
            for (j, &wv) in wrow.iter().enumerate() {
                axpy(row, wv, &cols[j * p..(j + 1) * p]);
            }
        });
    }
    drop((x, wt, b));

    Ok(Tensor::from_op(
        "conv2d",
        [g.n, g.cout, g.oh, g.ow],
        out,
        vec![input.clone(), weight.clone(), bias.clone()],
        Box::new(move |gout, parents| conv2d_backward(&g, gout, parents)),
    ))
}

fn conv2d_backward<F: Scalar>(g: &Geometry, gout: &[F], parents: &[Tensor<F>]) -> Vec<Option<Vec<F>>> {
    let (input, weight, bias) = (&parents[0], &parents[1], &parents[2]);
    let (k, p) = (g.k(), g.p());
    let in_len = g.cin * g.h * g.w;
    let x = input.data();
    let wt = weight.data();

    let gbias = bias.requires_grad().then(|| {
        (0..g.cout)
            .map(|oc| {
                (0..g.n)
                    .map(|n| {
                        gout[(n * g.cout + oc) * p..(n * g.cout + oc + 1) * p]
                            .iter()
                            .copied()
                            .sum::<F>()
                    })
                    .sum::<F>()
            })
            .collect()
    });

    let mut gweight = weight.requires_grad().then(|| vec![F::zero(); g.cout * k]);
    let mut ginput = input.requires_grad().then(|| vec![F::zero(); g.n * in_len]);
    let mut cols = vec![F::zero(); k * p];
    let mut gcols = vec![F::zero(); k * p];
    for n in 0..g.n {
        let gout_n = &gout[n * g.cout * p..(n + 1) * g.cout * p];
        if let Some(gw) = gweight.as_mut() {
            im2col(&x[n * in_len..(n + 1) * in_len], g, &mut cols);
            for_each_chunk(gw, k, |oc, row| {
                let grow = &gout_n[oc * p..(oc + 1) * p];
                for (j, r) in row.iter_mut().enumerate() {
                    *r = *r + dot(grow, &cols[j * p..(j + 1) * p]);
                }
            });
        }
        if let Some(gx) = ginput.as_mut() {
            for_each_chunk(&mut gcols, p, |j, row| {
                row.fill(F::zero());
                for oc in 0..g.cout {
                    axpy(row, wt[oc * k + j], &gout_n[oc * p..(oc + 1) * p]);
                }
            });
            col2im(&gcols, g, &mut gx[n * in_len..(n + 1) * in_len]);
        }
    }
    vec![ginput, gweight, gbias]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_is_identity() {
        let data: Vec<f32> = (0..2 * 3 * 4 * 5).map(|i| i as f32 * 0.1).collect();
        let x = Tensor::new([2, 3, 4, 5], data.clone()).unwrap();
        let mut w = vec![0.0f32; 9];
        for c in 0..3 {
            w[c * 3 + c] = 1.0;
        }
        let w = Tensor::new([3, 3, 1, 1], w).unwrap();
        let b = Tensor::zeros([1, 3, 1, 1]);
        let y = conv2d(&x, &w, &b, 1, 0).unwrap();
        assert_eq!(y.shape(), [2, 3, 4, 5]);
        assert_eq!(y.to_vec(), data);
    }

    #[test]
    fn box_kernel_preserves_constant() {
        let x = Tensor::full([1, 1, 6, 7], 0.37f64);
        let w = Tensor::full([1, 1, 3, 3], 1.0 / 9.0);
        let b = Tensor::zeros([1, 1, 1, 1]);
        let y = conv2d(&x, &w, &b, 1, 0).unwrap();
        assert_eq!(y.shape(), [1, 1, 4, 5]);
        assert!(y.to_vec().iter().all(|v| (v - 0.37).abs() < 1e-15));
    }

    #[test]
    fn strided_padded_output_dims() {
        let x = Tensor::<f32>::zeros([1, 2, 9, 8]);
        let w = Tensor::zeros([4, 2, 3, 3]);
        let b = Tensor::zeros([1, 4, 1, 1]);
        let y = conv2d(&x, &w, &b, 2, 1).unwrap();
        assert_eq!(y.shape(), [1, 4, 5, 4]);
    }

    #[test]
    fn rejects_bad_shapes() {
        let x = Tensor::<f32>::zeros([1, 2, 4, 4]);
        let b = Tensor::zeros([1, 4, 1, 1]);
        let w = Tensor::zeros([4, 3, 3, 3]);
        assert!(matches!(conv2d(&x, &w, &b, 1, 1), Err(TensorError::ShapeMismatch { .. })));
        let w = Tensor::zeros([4, 2, 5, 5]);
        assert!(matches!(conv2d(&x, &w, &b, 1, 0), Err(TensorError::InvalidArgument { .. })));
        let w = Tensor::zeros([4, 2, 3, 3]);
        assert!(conv2d(&x, &w, &b, 0, 1).is_err());
        let short_bias = Tensor::zeros([1, 3, 1, 1]);
        assert!(conv2d(&x, &w, &short_bias, 1, 1).is_err());
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..37).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..37).map(|i| (i as f64 * 0.3).cos()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }
}
