//! PSNR and MS-SSIM.
//!
//! MS-SSIM uses the usual constants: 11x11 Gaussian window with sigma 1.5,
//! `K1 = 0.01`, `K2 = 0.03`, dynamic range 1, five scale exponents
//! `(0.0448, 0.2856, 0.3001, 0.2363, 0.1333)` and 2x2 average pooling between
//! scales. Frames too small for five scales use the largest feasible count
//! with the leading exponents renormalized to sum to one. Each RGB channel is
//! scored separately and the results averaged.

use std::fmt::Write as _;
use std::io::{self, Write};

use thiserror::Error;

use crate::tensor::Tensor;
use crate::Scalar;

pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch([usize; 4], [usize; 4]),
    #[error("frame {h}x{w} is smaller than the {WINDOW}x{WINDOW} SSIM window")]
    TooSmall { h: usize, w: usize },
    #[error("peak must be positive")]
    InvalidPeak,
    #[error("requested {requested} scales but only {available} fit")]
    TooManyScales { requested: usize, available: usize },
}

pub type Result<T, E = MetricError> = std::result::Result<T, E>;

fn same_shape<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(MetricError::ShapeMismatch(a.shape(), b.shape()));
    }
    Ok(())
}

pub fn mse<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<f64> {
    same_shape(a, b)?;
    let n = a.numel().max(1) as f64;
    let s = compensated_sum(a.data().iter().zip(b.data().iter()).map(|(&x, &y)| {
        let d = x.as_f64() - y.as_f64();
        d * d
    }));
    Ok(s / n)
}

/// Neumaier summation; repeated equal terms sum exactly.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

/// `10 log10(peak^2 / mse)`; `+inf` for identical inputs.
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        return f64::INFINITY;
    }
    20.0 * peak.log10() - 10.0 * mse.log10()
}

pub fn psnr<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(MetricError::InvalidPeak);
    }
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

fn gaussian_window() -> [f64; WINDOW] {
    let mut g = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-(d * d) / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Valid-mode separable Gaussian filter of an `h x w` plane.
fn filter(plane: &[f64], h: usize, w: usize, g: &[f64; WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - WINDOW + 1, w - WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let line = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = (0..WINDOW).map(|k| g[k] * line[x + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..WINDOW).map(|k| g[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM and mean contrast-structure term of one plane pair.
fn ssim_cs(a: &[f64], b: &[f64], h: usize, w: usize) -> (f64, f64) {
    let g = gaussian_window();
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let mu_a = filter(a, h, w, &g);
    let mu_b = filter(b, h, w, &g);
    let e_aa = filter(&aa, h, w, &g);
    let e_bb = filter(&bb, h, w, &g);
    let e_ab = filter(&ab, h, w, &g);
    let n = mu_a.len() as f64;
    let (mut ssim, mut cs) = (0.0, 0.0);
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_sum = (e_aa[i] - ma * ma) + (e_bb[i] - mb * mb);
        let cov = e_ab[i] - ma * mb;
        let cs_i = (2.0 * cov + c2) / (var_sum + c2);
        let l_i = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        ssim += l_i * cs_i;
        cs += cs_i;
    }
    (ssim / n, cs / n)
}

fn avg_pool2(plane: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        for x in 0..ow {
            let i = 2 * y * w + 2 * x;
            out.push((plane[i] + plane[i + 1] + plane[i + w] + plane[i + w + 1]) * 0.25);
        }
    }
    (out, oh, ow)
}

/// Largest scale count (at most 5) the frame supports.
pub fn max_scales(h: usize, w: usize) -> usize {
    let m = h.min(w);
    (1..=5).rev().find(|&s| m >= WINDOW << (s - 1)).unwrap_or(0)
}

fn planes<F: Scalar>(t: &Tensor<F>) -> Vec<Vec<f64>> {
    let [n, c, h, w] = t.shape();
    let data = t.data();
    (0..n * c)
        .map(|i| data[i * h * w..(i + 1) * h * w].iter().map(|v| v.as_f64()).collect())
        .collect()
}

/// MS-SSIM with an explicit number of scales.
pub fn ms_ssim_scales<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>, scales: usize) -> Result<f64> {
    same_shape(a, b)?;
    let [_, _, h, w] = a.shape();
    let available = max_scales(h, w);
    if available == 0 {
        return Err(MetricError::TooSmall { h, w });
    }
    if scales == 0 || scales > available {
        return Err(MetricError::TooManyScales {
            requested: scales,
            available,
        });
    }
    let wsum: f64 = MS_SSIM_WEIGHTS[..scales].iter().sum();
    let weights: Vec<f64> = MS_SSIM_WEIGHTS[..scales].iter().map(|v| v / wsum).collect();

    let pa = planes(a);
    let pb = planes(b);
    let mut total = 0.0;
    for (mut x, mut y) in pa.into_iter().zip(pb) {
        let (mut ch, mut cw) = (h, w);
        let mut score = 1.0;
        for (s, &wt) in weights.iter().enumerate() {
            let (ssim, cs) = ssim_cs(&x, &y, ch, cw);
            let term = if s + 1 == scales { ssim } else { cs };
            score *= term.max(0.0).powf(wt);
            if s + 1 < scales {
                let (nx, nh, nw) = avg_pool2(&x, ch, cw);
                let (ny, _, _) = avg_pool2(&y, ch, cw);
                (x, y, ch, cw) = (nx, ny, nh, nw);
            }
        }
        total += score;
    }
    Ok(total / (a.shape()[0] * a.shape()[1]) as f64)
}

/// MS-SSIM using as many scales (up to five) as the frame allows.
pub fn ms_ssim<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<f64> {
    let [_, _, h, w] = a.shape();
    let s = max_scales(h, w);
    if s == 0 {
        return Err(MetricError::TooSmall { h, w });
    }
    ms_ssim_scales(a, b, s)
}

/// Per-frame evaluation of one video.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub video_id: String,
    pub psnr: Vec<f64>,
    pub ms_ssim: Vec<f64>,
    pub bpp: Option<f64>,
}

impl MetricReport {
    /// Scores reconstructions against originals frame by frame.
    pub fn evaluate<F: Scalar>(
        video_id: impl Into<String>,
        recon: &[Tensor<F>],
        original: &[Tensor<F>],
    ) -> Result<Self> {
        let mut psnr_v = Vec::with_capacity(recon.len());
        let mut ms_v = Vec::with_capacity(recon.len());
        for (r, o) in recon.iter().zip(original) {
            psnr_v.push(psnr(r, o, 1.0)?);
            ms_v.push(ms_ssim(r, o)?);
        }
        Ok(Self {
            video_id: video_id.into(),
            psnr: psnr_v,
            ms_ssim: ms_v,
            bpp: None,
        })
    }

    /// Mean of per-frame dB values.
    pub fn mean_psnr(&self) -> f64 {
        mean(&self.psnr)
    }

    pub fn mean_ms_ssim(&self) -> f64 {
        mean(&self.ms_ssim)
    }

    /// `video_id,frame_idx,psnr_db,ms_ssim` rows plus a `mean` summary row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("video_id,frame_idx,psnr_db,ms_ssim\n");
        for (i, (p, m)) in self.psnr.iter().zip(&self.ms_ssim).enumerate() {
            let _ = writeln!(s, "{},{},{},{}", self.video_id, i, fmt_db(*p), m);
        }
        let _ = writeln!(
            s,
            "{},mean,{},{}",
            self.video_id,
            fmt_db(self.mean_psnr()),
            self.mean_ms_ssim()
        );
        s
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_csv().as_bytes())
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// dB value for CSV output; infinities print as `inf`.
pub fn fmt_db(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}
