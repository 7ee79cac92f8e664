//! Low-resolution residual path.
//!
//! `y_resize = box_downsample(y, n)` is quantized to `bit_depth` bits and
//! stored; at both training and decode time `y_LR = bicubic(dequant(y_resize))`
//! and the reconstruction is `clamp(y_LR + decoder_output)`. Storing the
//! frames costs `3 * bit_depth / n^2` bits per original pixel.

use thiserror::Error;

use crate::tensor::Tensor;
use crate::Scalar;

/// Cubic convolution parameter.
pub const BICUBIC_A: f64 = -0.75;

#[derive(Debug, Error, PartialEq)]
pub enum ResidualError {
    #[error("frame {h}x{w} is not divisible by resize scale {n}")]
    NotDivisible { h: usize, w: usize, n: usize },
    #[error("resize scale must be >= 1, got {0}")]
    InvalidScale(usize),
    #[error("bit depth must be in 1..=8, got {0}")]
    InvalidBitDepth(u8),
    #[error("low-res sample {value} outside [0, 1] (clamp upstream)")]
    OutOfRange { value: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

pub type Result<T, E = ResidualError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResidualConfig {
    pub scale: usize,
    pub bit_depth: u8,
}

impl ResidualConfig {
    pub fn new(scale: usize) -> Self {
        Self { scale, bit_depth: 8 }
    }

    pub fn validate(&self, frame_h: usize, frame_w: usize) -> Result<()> {
        if self.scale == 0 {
            return Err(ResidualError::InvalidScale(self.scale));
        }
        if !(1..=8).contains(&self.bit_depth) {
            return Err(ResidualError::InvalidBitDepth(self.bit_depth));
        }
        if frame_h % self.scale != 0 || frame_w % self.scale != 0 {
            return Err(ResidualError::NotDivisible {
                h: frame_h,
                w: frame_w,
                n: self.scale,
            });
        }
        Ok(())
    }
}

/// One stored low-resolution frame: planar RGB codes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LowResFrame {
    pub height: usize,
    pub width: usize,
    pub bit_depth: u8,
    /// `3 * height * width` codes, channel-major then row-major.
    pub codes: Vec<u8>,
}

impl LowResFrame {
    pub fn max_code(&self) -> u32 {
        (1u32 << self.bit_depth) - 1
    }

    pub fn dequantize<F: Scalar>(&self) -> Tensor<F> {
        let denom = self.max_code() as f64;
        let data = self.codes.iter().map(|&c| F::lit(c as f64 / denom)).collect();
        Tensor::new([1, 3, self.height, self.width], data).expect("codes sized by construction")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResidualStream {
    pub config: ResidualConfig,
    pub frames: Vec<LowResFrame>,
}

fn check_frame<F: Scalar>(y: &Tensor<F>) -> Result<(usize, usize)> {
    match y.shape() {
        [1, 3, h, w] => Ok((h, w)),
        s => Err(ResidualError::Shape(format!("expected (1, 3, H, W), got {s:?}"))),
    }
}

/// Box-filter downsampling: each output sample is the mean of its `n x n` block.
pub fn downsample<F: Scalar>(y: &Tensor<F>, n: usize) -> Result<Tensor<F>> {
    let (h, w) = check_frame(y)?;
    ResidualConfig::new(n).validate(h, w)?;
    let (oh, ow) = (h / n, w / n);
    let src = y.data();
    let inv = 1.0 / (n * n) as f64;
    let mut out = Vec::with_capacity(3 * oh * ow);
    for c in 0..3 {
        let plane = &src[c * h * w..(c + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0f64;
                for dy in 0..n {
                    let row = &plane[(oy * n + dy) * w + ox * n..(oy * n + dy) * w + ox * n + n];
                    acc += row.iter().map(|v| v.as_f64()).sum::<f64>();
                }
                out.push(F::lit(acc * inv));
            }
        }
    }
    Ok(Tensor::new([1, 3, oh, ow], out).expect("sized"))
}

/// `code = floor(v * (2^b - 1) + 1/2)`; rejects samples outside `[0, 1]`.
pub fn quantize_lowres<F: Scalar>(y_resize: &Tensor<F>, bit_depth: u8) -> Result<LowResFrame> {
    let (h, w) = check_frame(y_resize)?;
    if !(1..=8).contains(&bit_depth) {
        return Err(ResidualError::InvalidBitDepth(bit_depth));
    }
    let max = ((1u32 << bit_depth) - 1) as f64;
    let codes = y_resize
        .data()
        .iter()
        .map(|v| {
            let v = v.as_f64();
            if !(0.0..=1.0).contains(&v) {
                return Err(ResidualError::OutOfRange { value: v });
            }
            Ok((v * max + 0.5).floor() as u8)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LowResFrame {
        height: h,
        width: w,
        bit_depth,
        codes,
    })
}

/// Cubic convolution kernel `W(d)` with parameter `a`.
pub fn cubic_kernel(d: f64, a: f64) -> f64 {
    let x = d.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Weights of the taps at offsets `-1, 0, 1, 2` for fractional position `t`.
pub fn tap_weights(t: f64, a: f64) -> [f64; 4] {
    [
        cubic_kernel(1.0 + t, a),
        cubic_kernel(t, a),
        cubic_kernel(1.0 - t, a),
        cubic_kernel(2.0 - t, a),
    ]
}

/// Source indices (edge-clamped) and weights for each output coordinate under
/// half-pixel-center mapping `src = (dst + 1/2) / scale - 1/2`.
fn axis_taps(in_len: usize, out_len: usize) -> Vec<([usize; 4], [f64; 4])> {
    let scale = out_len as f64 / in_len as f64;
    let last = in_len as isize - 1;
    (0..out_len)
        .map(|o| {
            let src = (o as f64 + 0.5) / scale - 0.5;
            let base = src.floor();
            let t = src - base;
            let base = base as isize;
            let idx = [-1isize, 0, 1, 2].map(|k| (base + k).clamp(0, last) as usize);
            (idx, tap_weights(t, BICUBIC_A))
        })
        .collect()
}

/// Separable bicubic upsampling to `out_dims`, an integer multiple of the
/// input dims.
pub fn bicubic_upsample<F: Scalar>(y_resize: &Tensor<F>, out_dims: (usize, usize)) -> Result<Tensor<F>> {
    let (h, w) = check_frame(y_resize)?;
    let (oh, ow) = out_dims;
    if h == 0 || w == 0 || oh % h != 0 || ow % w != 0 || oh / h != ow / w || oh < h {
        return Err(ResidualError::Shape(format!(
            "cannot upsample {h}x{w} to {oh}x{ow} by a single integer factor"
        )));
    }
    let xt = axis_taps(w, ow);
    let yt = axis_taps(h, oh);
    let src = y_resize.data();
    let mut out = Vec::with_capacity(3 * oh * ow);
    let mut rows = vec![0.0f64; h * ow];
    for c in 0..3 {
        let plane = &src[c * h * w..(c + 1) * h * w];
        for y in 0..h {
            let line = &plane[y * w..(y + 1) * w];
            for (x, (idx, wt)) in xt.iter().enumerate() {
                rows[y * ow + x] = (0..4).map(|k| wt[k] * line[idx[k]].as_f64()).sum();
            }
        }
        for (idx, wt) in &yt {
            for x in 0..ow {
                let v: f64 = (0..4).map(|k| wt[k] * rows[idx[k] * ow + x]).sum();
                out.push(F::lit(v));
            }
        }
    }
    Ok(Tensor::new([1, 3, oh, ow], out).expect("sized"))
}

/// Display/metric reconstruction `clamp(y_LR + residual, 0, 1)`.
pub fn reconstruct<F: Scalar>(y_lr: &Tensor<F>, residual_out: &Tensor<F>) -> Result<Tensor<F>> {
    if y_lr.shape() != residual_out.shape() {
        return Err(ResidualError::Shape(format!(
            "{:?} vs {:?}",
            y_lr.shape(),
            residual_out.shape()
        )));
    }
    let data = y_lr
        .data()
        .iter()
        .zip(residual_out.data().iter())
        .map(|(&a, &b)| (a + b).max(F::zero()).min(F::one()))
        .collect();
    Ok(Tensor::new(y_lr.shape(), data).expect("sized"))
}

/// Clamps every sample to `[0, 1]`.
pub fn clamp_unit<F: Scalar>(t: &Tensor<F>) -> Tensor<F> {
    let data = t.data().iter().map(|&v| v.max(F::zero()).min(F::one())).collect();
    Tensor::new(t.shape(), data).expect("sized")
}

/// Bits per original pixel spent on the low-res stream: `3 * b / n^2`.
pub fn bpp_residual(n: usize, bit_depth: u8) -> Result<f64> {
    if n < 1 {
        return Err(ResidualError::InvalidScale(n));
    }
    Ok((3 * bit_depth as u64) as f64 / (n as u64 * n as u64) as f64)
}

/// Produces the stored low-res frame and the upsampled base the decoder is
/// trained against. The base is computed from the quantized codes, so it is
/// exactly what a decoder will see.
pub fn residual_base<F: Scalar>(y: &Tensor<F>, config: ResidualConfig) -> Result<(LowResFrame, Tensor<F>)> {
    let (h, w) = check_frame(y)?;
    config.validate(h, w)?;
    let clamped = clamp_unit(y);
    let low = quantize_lowres(&downsample(&clamped, config.scale)?, config.bit_depth)?;
    let base = bicubic_upsample(&low.dequantize::<F>(), (h, w))?;
    Ok((low, base))
}
