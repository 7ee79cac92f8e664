//! Hybrid INR autoencoder.
//!
//! The encoder is a stack of stride-2 `3x3` convolutions (each followed by
//! GELU) that squeezes a `(3, H, W)` frame into a small `(C_f, H_f, W_f)`
//! feature map. The decoder is a chain of NeRV-style upsampling stages, each
//! `conv(k, pad k/2) -> pixel_shuffle(r) -> GELU`, followed by a `3x3` head
//! to RGB. Only the decoder (plus per-frame features) is transmitted.
//!
//! Decoder widths follow `max(min_width, round(scale * decay^i))`; the scale
//! is searched so that the decoder parameter count lands within 5% of the
//! requested target.

use std::io::{self, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tensor::{self, conv2d, gelu, pixel_shuffle, sigmoid, Tensor, TensorError};
use crate::Scalar;

/// Accepted relative deviation of the realized decoder size from the target.
pub const PARAM_TOLERANCE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error(
        "no decoder width reaches {target} params within 5% (nearest achievable: {below:?} below, {above:?} above)"
    )]
    NoFeasibleWidth {
        target: usize,
        below: Option<usize>,
        above: Option<usize>,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Decoder output is the frame (sigmoid to `[0, 1]`).
    Baseline,
    /// Decoder output is a signed correction added to the upsampled low-res frame.
    Residual,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Residual => "residual",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Variant::Baseline => 0,
            Variant::Residual => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Variant::Baseline),
            1 => Some(Variant::Residual),
            _ => None,
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" | "hnerv" => Ok(Variant::Baseline),
            "residual" | "ours" => Ok(Variant::Residual),
            other => Err(format!("unknown variant '{other}' (expected baseline|residual)")),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One decoder upsampling stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stage {
    pub upsample: usize,
    pub kernel: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    /// `(C_f, H_f, W_f)`.
    pub feature_shape: [usize; 3],
    pub stages: Vec<Stage>,
    /// First-stage width; used as-is when `target_params == 0`, otherwise
    /// replaced by the width search.
    pub base_width: usize,
    /// Target decoder parameter count (0 disables the search).
    pub target_params: usize,
    /// Width ratio between consecutive stages.
    pub channel_decay: f64,
    pub min_width: usize,
    /// Hidden width of the encoder.
    pub encoder_width: usize,
}

impl ModelConfig {
    /// Default architecture for a `frame_h x frame_w` video: features at 1/32
    /// resolution with 16 channels, five `x2` stages with `3x3` kernels.
    pub fn desk(variant: Variant, frame_h: usize, frame_w: usize, target_params: usize) -> Self {
        Self {
            variant,
            feature_shape: [16, frame_h / 32, frame_w / 32],
            stages: vec![
                Stage {
                    upsample: 2,
                    kernel: 3
                };
                5
            ],
            base_width: 32,
            target_params,
            channel_decay: 0.75,
            min_width: 4,
            encoder_width: 16,
        }
    }

    pub fn total_upsample(&self) -> usize {
        self.stages.iter().map(|s| s.upsample).product()
    }

    /// `(y_h, y_w)` implied by the feature shape and the stage factors.
    pub fn frame_dims(&self) -> (usize, usize) {
        let r = self.total_upsample();
        (self.feature_shape[1] * r, self.feature_shape[2] * r)
    }

    fn encoder_depth(&self) -> usize {
        self.total_upsample().trailing_zeros() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.feature_shape.iter().any(|&d| d == 0) {
            return bad(format!("feature shape {:?} has a zero dim", self.feature_shape));
        }
        if self.stages.is_empty() {
            return bad("decoder needs at least one stage".into());
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.upsample == 0 || s.kernel % 2 == 0 {
                return bad(format!("stage {i}: upsample must be >= 1 and kernel odd, got {s:?}"));
            }
        }
        let r = self.total_upsample();
        if !r.is_power_of_two() || r < 2 {
            return bad(format!(
                "total upsample factor {r} must be a power of two >= 2 (encoder uses stride-2 layers)"
            ));
        }
        if !(self.channel_decay > 0.0 && self.channel_decay <= 1.0) {
            return bad(format!("channel_decay {} outside (0, 1]", self.channel_decay));
        }
        if self.min_width == 0 || self.encoder_width == 0 {
            return bad("widths must be positive".into());
        }
        if self.target_params == 0 && self.base_width == 0 {
            return bad("either base_width or target_params must be set".into());
        }
        Ok(())
    }

    fn widths_for_scale(&self, scale: f64) -> Vec<usize> {
        (0..self.stages.len())
            .map(|i| {
                let w = (scale * self.channel_decay.powi(i as i32)).round() as usize;
                w.max(self.min_width)
            })
            .collect()
    }

    fn decoder_shapes(&self, widths: &[usize]) -> Vec<[usize; 4]> {
        let mut shapes = Vec::with_capacity(2 * widths.len() + 2);
        let mut cin = self.feature_shape[0];
        for (s, &w) in self.stages.iter().zip(widths) {
            let cout = w * s.upsample * s.upsample;
            shapes.push([cout, cin, s.kernel, s.kernel]);
            shapes.push([1, cout, 1, 1]);
            cin = w;
        }
        shapes.push([3, cin, 3, 3]);
        shapes.push([1, 3, 1, 1]);
        shapes
    }

    fn encoder_shapes(&self) -> Vec<[usize; 4]> {
        let depth = self.encoder_depth();
        let mut shapes = Vec::with_capacity(2 * depth);
        let mut cin = 3;
        for l in 0..depth {
            let cout = if l + 1 == depth {
                self.feature_shape[0]
            } else {
                self.encoder_width
            };
            shapes.push([cout, cin, 3, 3]);
            shapes.push([1, cout, 1, 1]);
            cin = cout;
        }
        shapes
    }

    fn count(shapes: &[[usize; 4]]) -> usize {
        shapes.iter().map(|s| s.iter().product::<usize>()).sum()
    }

    /// Decoder parameter count for explicit per-stage widths.
    pub fn decoder_param_count(&self, widths: &[usize]) -> usize {
        Self::count(&self.decoder_shapes(widths))
    }

    /// Resolves decoder widths, searching the width scale when a target is set.
    pub fn resolve_widths(&self) -> Result<Vec<usize>> {
        self.validate()?;
        if self.target_params == 0 {
            return Ok(self.widths_for_scale(self.base_width as f64));
        }
        let target = self.target_params as f64;
        let mut best: Option<(usize, Vec<usize>)> = None;
        let mut below: Option<usize> = None;
        let mut above: Option<usize> = None;
        let mut scale = 1.0;
        while scale <= 4096.0 {
            let widths = self.widths_for_scale(scale);
            let count = self.decoder_param_count(&widths);
            if count <= self.target_params {
                below = Some(below.map_or(count, |b: usize| b.max(count)));
            } else {
                above = Some(above.map_or(count, |a: usize| a.min(count)));
            }
            let better = best
                .as_ref()
                .is_none_or(|(c, _)| (count as f64 - target).abs() < (*c as f64 - target).abs());
            if better {
                best = Some((count, widths));
            }
            if count as f64 > 2.0 * target {
                break;
            }
            scale += 0.05;
        }
        match best {
            Some((count, widths)) if (count as f64 - target).abs() <= PARAM_TOLERANCE * target => Ok(widths),
            _ => Err(ModelError::NoFeasibleWidth {
                target: self.target_params,
                below,
                above,
            }),
        }
    }
}

/// Uniform fan-in initialization: `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for
/// both weights and biases.
fn init_tensors<F: Scalar>(shapes: &[[usize; 4]], rng: &mut ChaCha8Rng) -> Result<Vec<Tensor<F>>> {
    let mut out = Vec::with_capacity(shapes.len());
    let mut fan_in = 1;
    for (i, shape) in shapes.iter().enumerate() {
        if i % 2 == 0 {
            fan_in = shape[1] * shape[2] * shape[3];
        }
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| F::lit(rng.gen_range(-bound..bound))).collect();
        out.push(Tensor::parameter(*shape, data)?);
    }
    Ok(out)
}

/// Stride-2 feature extractor. Training-time only.
#[derive(Clone, Debug)]
pub struct Encoder<F: Scalar> {
    params: Vec<Tensor<F>>,
    frame_dims: (usize, usize),
}

impl<F: Scalar> Encoder<F> {
    pub fn params(&self) -> &[Tensor<F>] {
        &self.params
    }

    pub fn forward(&self, frame: &Tensor<F>) -> Result<Tensor<F>> {
        let [_, c, h, w] = frame.shape();
        if c != 3 || (h, w) != self.frame_dims {
            return Err(TensorError::ShapeMismatch {
                op: "encoder_forward",
                detail: format!(
                    "expected (N, 3, {}, {}), got {:?}",
                    self.frame_dims.0,
                    self.frame_dims.1,
                    frame.shape()
                ),
            }
            .into());
        }
        let mut x = frame.clone();
        for wb in self.params.chunks_exact(2) {
            x = gelu(&conv2d(&x, &wb[0], &wb[1], 2, 1)?);
        }
        Ok(x)
    }
}

/// The transmitted network: feature map in, frame (or residual) out.
#[derive(Clone, Debug)]
pub struct Decoder<F: Scalar> {
    params: Vec<Tensor<F>>,
    stages: Vec<Stage>,
    feature_shape: [usize; 3],
    variant: Variant,
}

impl<F: Scalar> Decoder<F> {
    /// Assembles a decoder from tensors in declaration order, checking shapes.
    pub fn from_params(config: &ModelConfig, widths: &[usize], params: Vec<Tensor<F>>) -> Result<Self> {
        config.validate()?;
        if widths.len() != config.stages.len() {
            return Err(ModelError::InvalidConfig(format!(
                "{} widths for {} stages",
                widths.len(),
                config.stages.len()
            )));
        }
        let shapes = config.decoder_shapes(widths);
        if shapes.len() != params.len() {
            return Err(ModelError::InvalidConfig(format!(
                "decoder expects {} tensors, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for (i, (s, p)) in shapes.iter().zip(&params).enumerate() {
            if *s != p.shape() {
                return Err(ModelError::InvalidConfig(format!(
                    "decoder tensor {i}: expected {s:?}, got {:?}",
                    p.shape()
                )));
            }
        }
        Ok(Self {
            params,
            stages: config.stages.clone(),
            feature_shape: config.feature_shape,
            variant: config.variant,
        })
    }

    pub fn params(&self) -> &[Tensor<F>] {
        &self.params
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn forward(&self, feature: &Tensor<F>) -> Result<Tensor<F>> {
        let [_, c, h, w] = feature.shape();
        if [c, h, w] != self.feature_shape {
            return Err(TensorError::ShapeMismatch {
                op: "decoder_forward",
                detail: format!("expected feature (N, {:?}), got {:?}", self.feature_shape, feature.shape()),
            }
            .into());
        }
        let mut x = feature.clone();
        for (i, s) in self.stages.iter().enumerate() {
            x = conv2d(&x, &self.params[2 * i], &self.params[2 * i + 1], 1, s.kernel / 2)?;
            x = pixel_shuffle(&x, s.upsample)?;
            x = gelu(&x);
        }
        let n = self.params.len();
        x = conv2d(&x, &self.params[n - 2], &self.params[n - 1], 1, 1)?;
        Ok(match self.variant {
            Variant::Baseline => sigmoid(&x),
            Variant::Residual => x,
        })
    }

    pub fn param_count(&self) -> usize {
        count_elements(&self.params)
    }
}

/// Total scalar count across a list of tensors.
pub fn count_elements<F: Scalar>(tensors: &[Tensor<F>]) -> usize {
    tensors.iter().map(Tensor::numel).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCount {
    pub encoder: usize,
    pub decoder: usize,
}

#[derive(Clone, Debug)]
pub struct Model<F: Scalar> {
    pub config: ModelConfig,
    pub decoder_widths: Vec<usize>,
    pub encoder: Encoder<F>,
    pub decoder: Decoder<F>,
}

/// Builds an `f32` model; see [`Model::build`].
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<Model<f32>> {
    Model::build(config, seed)
}

impl<F: Scalar> Model<F> {
    /// Deterministic initialization from `(config, seed)`. Values are drawn in
    /// `f64` and rounded, so `f32` and `f64` builds agree to `f32` precision.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        let widths = config.resolve_widths()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder_params = init_tensors(&config.encoder_shapes(), &mut rng)?;
        let decoder_params = init_tensors(&config.decoder_shapes(&widths), &mut rng)?;
        Self::from_parts(config.clone(), widths, encoder_params, decoder_params)
    }

    pub fn from_parts(
        config: ModelConfig,
        decoder_widths: Vec<usize>,
        encoder_params: Vec<Tensor<F>>,
        decoder_params: Vec<Tensor<F>>,
    ) -> Result<Self> {
        let decoder = Decoder::from_params(&config, &decoder_widths, decoder_params)?;
        let shapes = config.encoder_shapes();
        if shapes.len() != encoder_params.len()
            || shapes.iter().zip(&encoder_params).any(|(s, p)| *s != p.shape())
        {
            return Err(ModelError::InvalidConfig("encoder tensors do not match config".into()));
        }
        let encoder = Encoder {
            params: encoder_params,
            frame_dims: config.frame_dims(),
        };
        Ok(Self {
            config,
            decoder_widths,
            encoder,
            decoder,
        })
    }

    /// Encoder parameters followed by decoder parameters.
    pub fn params(&self) -> Vec<Tensor<F>> {
        self.encoder
            .params()
            .iter()
            .chain(self.decoder.params())
            .cloned()
            .collect()
    }

    pub fn count_params(&self) -> ParamCount {
        ParamCount {
            encoder: count_elements(self.encoder.params()),
            decoder: self.decoder.param_count(),
        }
    }

    pub fn encoder_forward(&self, frame: &Tensor<F>) -> Result<Tensor<F>> {
        self.encoder.forward(frame)
    }

    pub fn decoder_forward(&self, feature: &Tensor<F>) -> Result<Tensor<F>> {
        self.decoder.forward(feature)
    }

    /// Training-time reconstruction before clamping: `dec(enc(y))` for the
    /// baseline, `base + dec(enc(y))` for the residual variant.
    pub fn forward(&self, frame: &Tensor<F>, base: Option<&Tensor<F>>) -> Result<Tensor<F>> {
        let out = self.decoder_forward(&self.encoder_forward(frame)?)?;
        match (self.config.variant, base) {
            (Variant::Baseline, _) => Ok(out),
            (Variant::Residual, Some(b)) => Ok(tensor::add(b, &out)?),
            (Variant::Residual, None) => Err(ModelError::InvalidConfig(
                "residual variant needs the upsampled low-res frame".into(),
            )),
        }
    }

    pub fn zero_grad(&self) {
        for p in self.encoder.params().iter().chain(self.decoder.params()) {
            p.zero_grad();
        }
    }

    pub fn cast<G: Scalar>(&self) -> Model<G> {
        let as_params = |ts: &[Tensor<F>]| -> Vec<Tensor<G>> { ts.iter().map(|t| t.cast::<G>().into_parameter()).collect() };
        Model::from_parts(
            self.config.clone(),
            self.decoder_widths.clone(),
            as_params(self.encoder.params()),
            as_params(self.decoder.params()),
        )
        .expect("cast preserves shapes")
    }
}

// ---------------------------------------------------------------------------
// Checkpoint: "RINR", u16 version, u8 kind (0), then the config, the decoder
// widths, the residual scale, and every parameter tensor (encoder first) as
// four u32 dims + little-endian f32 data.

pub(crate) const MAGIC: &[u8; 4] = b"RINR";
pub(crate) const KIND_CHECKPOINT: u8 = 0;
pub const CHECKPOINT_VERSION: u16 = 1;

pub(crate) fn write_config<W: Write>(w: &mut W, config: &ModelConfig, widths: &[usize]) -> io::Result<()> {
    let u32_of = |v: usize| -> io::Result<[u8; 4]> {
        u32::try_from(v)
            .map(u32::to_le_bytes)
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "value exceeds u32"))
    };
    w.write_all(&[config.variant.code()])?;
    for d in config.feature_shape {
        w.write_all(&u32_of(d)?)?;
    }
    w.write_all(&u32_of(config.stages.len())?)?;
    for s in &config.stages {
        w.write_all(&u32_of(s.upsample)?)?;
        w.write_all(&u32_of(s.kernel)?)?;
    }
    w.write_all(&u32_of(config.base_width)?)?;
    w.write_all(&(config.target_params as u64).to_le_bytes())?;
    w.write_all(&config.channel_decay.to_le_bytes())?;
    w.write_all(&u32_of(config.min_width)?)?;
    w.write_all(&u32_of(config.encoder_width)?)?;
    for &wd in widths {
        w.write_all(&u32_of(wd)?)?;
    }
    Ok(())
}

pub(crate) struct ByteReader<'a> {
    pub buf: &'a [u8],
    pub pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    pub fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    pub fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Option<f64> {
        self.u64().map(f64::from_bits)
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

/// Upper bound on stages accepted from a stream (guards allocation).
const MAX_STAGES: usize = 64;

pub(crate) fn read_config(r: &mut ByteReader<'_>) -> Option<std::result::Result<(ModelConfig, Vec<usize>), String>> {
    let variant = match Variant::from_code(r.u8()?) {
        Some(v) => v,
        None => return Some(Err("unknown variant code".into())),
    };
    let feature_shape = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let n_stages = r.u32()? as usize;
    if n_stages > MAX_STAGES {
        return Some(Err(format!("{n_stages} stages exceeds limit")));
    }
    let mut stages = Vec::with_capacity(n_stages);
    for _ in 0..n_stages {
        stages.push(Stage {
            upsample: r.u32()? as usize,
            kernel: r.u32()? as usize,
        });
    }
    let base_width = r.u32()? as usize;
    let target_params = r.u64()? as usize;
    let channel_decay = r.f64()?;
    let min_width = r.u32()? as usize;
    let encoder_width = r.u32()? as usize;
    let mut widths = Vec::with_capacity(n_stages);
    for _ in 0..n_stages {
        widths.push(r.u32()? as usize);
    }
    let config = ModelConfig {
        variant,
        feature_shape,
        stages,
        base_width,
        target_params,
        channel_decay,
        min_width,
        encoder_width,
    };
    Some(config.validate().map(|_| (config, widths)).map_err(|e| e.to_string()))
}

fn write_tensor_f32<W: Write, F: Scalar>(w: &mut W, t: &Tensor<F>) -> io::Result<()> {
    t.write_dump(w)
}

/// Trained model plus the residual scale it was trained with (0 for the
/// baseline).
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub scale_n: usize,
}

impl Checkpoint {
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.push(KIND_CHECKPOINT);
        write_config(&mut buf, &self.model.config, &self.model.decoder_widths)?;
        buf.extend_from_slice(&(self.scale_n as u32).to_le_bytes());
        let params = self.model.params();
        buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
        for p in &params {
            write_tensor_f32(&mut buf, p)?;
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |m: &str| ModelError::Checkpoint(m.to_string());
        let mut r = ByteReader::new(bytes);
        if r.take(4) != Some(MAGIC.as_slice()) {
            return Err(err("bad magic"));
        }
        let version = r.u16().ok_or_else(|| err("truncated header"))?;
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
        }
        if r.u8() != Some(KIND_CHECKPOINT) {
            return Err(err("not a model checkpoint"));
        }
        let (config, widths) = read_config(&mut r)
            .ok_or_else(|| err("truncated config"))?
            .map_err(ModelError::Checkpoint)?;
        let scale_n = r.u32().ok_or_else(|| err("truncated header"))? as usize;
        let count = r.u32().ok_or_else(|| err("truncated header"))? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for i in 0..count {
            let rest = &r.buf[r.pos..];
            let t = Tensor::<f32>::read_dump(rest)
                .map_err(|_| ModelError::Checkpoint(format!("truncated tensor {i}")))?;
            r.pos += 16 + 4 * t.numel();
            tensors.push(t.into_parameter());
        }
        if r.remaining() != 0 {
            return Err(err("trailing bytes"));
        }
        let n_enc = config.encoder_shapes().len();
        if tensors.len() < n_enc {
            return Err(err("too few tensors"));
        }
        let decoder_params = tensors.split_off(n_enc);
        let model = Model::from_parts(config, widths, tensors, decoder_params)?;
        Ok(Self { model, scale_n })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            variant: Variant::Baseline,
            feature_shape: [4, 1, 2],
            stages: vec![
                Stage {
                    upsample: 2,
                    kernel: 3
                };
                3
            ],
            base_width: 8,
            target_params: 0,
            channel_decay: 0.75,
            min_width: 2,
            encoder_width: 4,
        }
    }

    #[test]
    fn single_conv_count() {
        // 2 -> 4 channels, 3x3, with bias
        let w = Tensor::<f32>::zeros([4, 2, 3, 3]);
        let b = Tensor::<f32>::zeros([1, 4, 1, 1]);
        assert_eq!(count_elements(&[w, b]), 76);
        assert_eq!(count_elements::<f32>(&[]), 0);
    }

    #[test]
    fn output_shape_follows_stages() {
        let m = Model::<f32>::build(&small(), 1).unwrap();
        let frame = Tensor::full([1, 3, 8, 16], 0.5);
        let f = m.encoder_forward(&frame).unwrap();
        assert_eq!(f.shape(), [1, 4, 1, 2]);
        let y = m.decoder_forward(&f).unwrap();
        assert_eq!(y.shape(), [1, 3, 8, 16]);
        assert!(y.to_vec().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn wrong_dims_rejected() {
        let m = Model::<f32>::build(&small(), 1).unwrap();
        assert!(m.encoder_forward(&Tensor::zeros([1, 3, 8, 8])).is_err());
        assert!(m.decoder_forward(&Tensor::zeros([1, 4, 2, 2])).is_err());
    }

    #[test]
    fn variants_share_parameter_count() {
        let mut cfg = small();
        let a = Model::<f32>::build(&cfg, 3).unwrap().count_params();
        cfg.variant = Variant::Residual;
        let b = Model::<f32>::build(&cfg, 3).unwrap().count_params();
        assert_eq!(a, b);
    }

    #[test]
    fn infeasible_target_reports_neighbours() {
        let mut cfg = small();
        cfg.target_params = 10; // smaller than min-width decoder
        match cfg.resolve_widths() {
            Err(ModelError::NoFeasibleWidth { below, above, .. }) => {
                assert!(below.is_none());
                assert!(above.is_some());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = small();
        cfg.stages[0].kernel = 2;
        assert!(cfg.validate().is_err());
        let mut cfg = small();
        cfg.stages[0].upsample = 3;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut cfg = small();
        cfg.variant = Variant::Residual;
        let ck = Checkpoint {
            model: Model::build(&cfg, 9).unwrap(),
            scale_n: 4,
        };
        let mut a = Vec::new();
        ck.write(&mut a).unwrap();
        let back = Checkpoint::from_bytes(&a).unwrap();
        assert_eq!(back.scale_n, 4);
        assert_eq!(back.model.config, cfg);
        let mut b = Vec::new();
        back.write(&mut b).unwrap();
        assert_eq!(a, b);

        a[0] = b'X';
        assert!(Checkpoint::from_bytes(&a).is_err());
        assert!(Checkpoint::from_bytes(&b[..b.len() - 3]).is_err());
    }
}
