//! Post-training quantization and the compressed-video container.
//!
//! Tensors are quantized per tensor with an affine min-max map,
//! `code = round((v - min) / scale)` with `scale = (max - min) / (2^bits - 1)`.
//! The container is a plain bit-packed layout with no entropy coding:
//!
//! ```text
//! "RINR"  u16 version  u8 kind=1
//! u32 frame_h  u32 frame_w  u32 frames  u32 scale_n (0 = no residual)
//! u8 feature_bits  u8 model_bits  u8 lowres_bits (0 = no residual)
//! u64 total_len                      -- byte length of the whole stream
//! model config + decoder widths      -- same encoding as checkpoints
//! u32 decoder_blob_count, then blobs -- declaration order
//! `frames` feature blobs
//! `frames` low-res frames            -- 3 planes, row-major, bit-packed
//! blob := 4 x u32 dims, u8 bits, f64 min, f64 scale, packed codes
//! ```
//!
//! Integers are little-endian, reals IEEE-754. Codes are packed MSB-first and
//! every blob / low-res frame is padded to a byte boundary.

use thiserror::Error;

use crate::model::{self, ByteReader, ModelConfig, Variant, MAGIC};
use crate::residual::{LowResFrame, ResidualConfig, ResidualStream};
use crate::tensor::{Shape, Tensor};
use crate::Scalar;

pub const CONTAINER_VERSION: u16 = 1;
const KIND_VIDEO: u8 = 1;
const FIXED_HEADER_LEN: usize = 4 + 2 + 1 + 16 + 3 + 8;

#[derive(Debug, Error, PartialEq)]
pub enum QuantError {
    #[error("bit width must be in 1..=16, got {0}")]
    InvalidBits(u8),
    #[error("tensor contains a non-finite value")]
    NonFinite,
    #[error("code {code} exceeds {bits}-bit range (corrupt stream)")]
    CodeOverflow { code: u32, bits: u8 },
    #[error("blob holds {codes} codes for shape {shape:?}")]
    ShapeMismatch { codes: usize, shape: Shape },
}

/// Quantized tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedBlob {
    pub shape: Shape,
    pub bits: u8,
    pub min_val: f64,
    pub scale: f64,
    pub codes: Vec<u32>,
}

impl QuantizedBlob {
    pub fn max_code(&self) -> u32 {
        max_code(self.bits)
    }

    /// Exact number of code bits (no padding).
    pub fn payload_bits(&self) -> u64 {
        self.codes.len() as u64 * self.bits as u64
    }

    pub fn payload_bytes(&self) -> usize {
        (self.payload_bits() as usize).div_ceil(8)
    }
}

fn max_code(bits: u8) -> u32 {
    ((1u64 << bits) - 1) as u32
}

/// Affine min-max quantization at `bits` bits.
pub fn quantize_tensor<F: Scalar>(t: &Tensor<F>, bits: u8) -> Result<QuantizedBlob, QuantError> {
    if !(1..=16).contains(&bits) {
        return Err(QuantError::InvalidBits(bits));
    }
    let data = t.data();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(QuantError::NonFinite);
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in data.iter() {
        let v = v.as_f64();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if data.is_empty() {
        (lo, hi) = (0.0, 0.0);
    }
    let top = max_code(bits);
    let scale = if hi > lo { (hi - lo) / top as f64 } else { 1.0 };
    let codes = data
        .iter()
        .map(|v| (((v.as_f64() - lo) / scale).round() as u32).min(top))
        .collect();
    Ok(QuantizedBlob {
        shape: t.shape(),
        bits,
        min_val: lo,
        scale,
        codes,
    })
}

/// `v = min + code * scale`.
pub fn dequantize_tensor<F: Scalar>(blob: &QuantizedBlob) -> Result<Tensor<F>, QuantError> {
    if !(1..=16).contains(&blob.bits) {
        return Err(QuantError::InvalidBits(blob.bits));
    }
    let top = blob.max_code();
    if let Some(&code) = blob.codes.iter().find(|&&c| c > top) {
        return Err(QuantError::CodeOverflow { code, bits: blob.bits });
    }
    let data = blob
        .codes
        .iter()
        .map(|&c| F::lit(blob.min_val + c as f64 * blob.scale))
        .collect();
    Tensor::new(blob.shape, data).map_err(|_| QuantError::ShapeMismatch {
        codes: blob.codes.len(),
        shape: blob.shape,
    })
}

// ---------------------------------------------------------------------------
// Bit packing

struct BitWriter<'a> {
    out: &'a mut Vec<u8>,
    acc: u64,
    filled: u32,
}

impl<'a> BitWriter<'a> {
    fn new(out: &'a mut Vec<u8>) -> Self {
        Self { out, acc: 0, filled: 0 }
    }

    fn put(&mut self, code: u32, bits: u8) {
        self.acc = (self.acc << bits) | code as u64;
        self.filled += bits as u32;
        while self.filled >= 8 {
            self.filled -= 8;
            self.out.push((self.acc >> self.filled) as u8);
        }
        self.acc &= (1u64 << self.filled) - 1;
    }

    fn finish(self) {
        if self.filled > 0 {
            self.out.push((self.acc << (8 - self.filled)) as u8);
        }
    }
}

fn unpack_codes(bytes: &[u8], count: usize, bits: u8) -> Vec<u32> {
    let mut out = Vec::with_capacity(count);
    let (mut acc, mut filled, mut pos) = (0u64, 0u32, 0usize);
    for _ in 0..count {
        while filled < bits as u32 {
            acc = (acc << 8) | bytes[pos] as u64;
            pos += 1;
            filled += 8;
        }
        filled -= bits as u32;
        out.push(((acc >> filled) & ((1u64 << bits) - 1)) as u32);
        acc &= (1u64 << filled) - 1;
    }
    out
}

/// Appends `codes` MSB-first at `bits` bits each, padded to a byte boundary.
pub fn pack_codes(out: &mut Vec<u8>, codes: impl IntoIterator<Item = u32>, bits: u8) {
    let mut w = BitWriter::new(out);
    for c in codes {
        w.put(c, bits);
    }
    w.finish();
}

// ---------------------------------------------------------------------------
// Container

/// Everything a decoder needs; no encoder, no original frames.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressedVideo {
    pub model_config: ModelConfig,
    pub decoder_widths: Vec<usize>,
    pub frame_h: usize,
    pub frame_w: usize,
    pub feature_bits: u8,
    pub model_bits: u8,
    pub decoder: Vec<QuantizedBlob>,
    pub features: Vec<QuantizedBlob>,
    pub residual: Option<ResidualStream>,
}

impl CompressedVideo {
    pub fn frames(&self) -> usize {
        self.features.len()
    }

    pub fn variant(&self) -> Variant {
        self.model_config.variant
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Section {
    Header,
    Config,
    Decoder { index: usize },
    Feature { frame: usize },
    Residual { frame: usize },
}

impl std::fmt::Display for Section {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Section::Header => write!(f, "header"),
            Section::Config => write!(f, "model config"),
            Section::Decoder { index } => write!(f, "decoder section at tensor {index}"),
            Section::Feature { frame } => write!(f, "feature section at frame {frame}"),
            Section::Residual { frame } => write!(f, "residual section at frame {frame}"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),
    #[error("not a compressed video (kind {0})")]
    WrongKind(u8),
    #[error("truncated {0}")]
    Truncated(Section),
    #[error("declared length {declared} but stream has {actual} bytes")]
    LengthMismatch { declared: u64, actual: u64 },
    #[error("invalid {section}: {reason}")]
    Invalid { section: Section, reason: String },
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn write_blob(out: &mut Vec<u8>, b: &QuantizedBlob) {
    for d in b.shape {
        put_u32(out, d);
    }
    out.push(b.bits);
    out.extend_from_slice(&b.min_val.to_le_bytes());
    out.extend_from_slice(&b.scale.to_le_bytes());
    pack_codes(out, b.codes.iter().copied(), b.bits);
}

fn read_blob(r: &mut ByteReader<'_>, section: Section) -> Result<QuantizedBlob, DecodeError> {
    let trunc = || DecodeError::Truncated(section);
    let mut shape = [0usize; 4];
    for d in shape.iter_mut() {
        *d = r.u32().ok_or_else(trunc)? as usize;
    }
    let bits = r.u8().ok_or_else(trunc)?;
    if !(1..=16).contains(&bits) {
        return Err(DecodeError::Invalid {
            section,
            reason: format!("bit width {bits}"),
        });
    }
    let min_val = r.f64().ok_or_else(trunc)?;
    let scale = r.f64().ok_or_else(trunc)?;
    let count = shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| DecodeError::Invalid {
            section,
            reason: "shape overflows".into(),
        })?;
    let nbytes = count
        .checked_mul(bits as usize)
        .map(|b| b.div_ceil(8))
        .ok_or_else(trunc)?;
    let payload = r.take(nbytes).ok_or_else(trunc)?;
    Ok(QuantizedBlob {
        shape,
        bits,
        min_val,
        scale,
        codes: unpack_codes(payload, count, bits),
    })
}

/// Serializes the container.
pub fn pack(c: &CompressedVideo) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.push(KIND_VIDEO);
    put_u32(&mut out, c.frame_h);
    put_u32(&mut out, c.frame_w);
    put_u32(&mut out, c.frames());
    let (scale_n, lowres_bits) = c
        .residual
        .as_ref()
        .map_or((0, 0), |r| (r.config.scale, r.config.bit_depth));
    put_u32(&mut out, scale_n);
    out.extend_from_slice(&[c.feature_bits, c.model_bits, lowres_bits]);
    let len_at = out.len();
    out.extend_from_slice(&0u64.to_le_bytes());
    model::write_config(&mut out, &c.model_config, &c.decoder_widths).expect("vec write cannot fail");
    put_u32(&mut out, c.decoder.len());
    for b in &c.decoder {
        write_blob(&mut out, b);
    }
    for b in &c.features {
        write_blob(&mut out, b);
    }
    if let Some(r) = &c.residual {
        for f in &r.frames {
            pack_codes(&mut out, f.codes.iter().map(|&v| v as u32), f.bit_depth);
        }
    }
    let total = out.len() as u64;
    out[len_at..len_at + 8].copy_from_slice(&total.to_le_bytes());
    out
}

/// Parses a container produced by [`pack`].
pub fn unpack(bytes: &[u8]) -> Result<CompressedVideo, DecodeError> {
    let mut r = ByteReader::new(bytes);
    let hdr = || DecodeError::Truncated(Section::Header);
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(DecodeError::BadMagic);
    }
    r.take(4);
    let version = r.u16().ok_or_else(hdr)?;
    if version != CONTAINER_VERSION {
        return Err(DecodeError::UnsupportedVersion(version));
    }
    let kind = r.u8().ok_or_else(hdr)?;
    if kind != KIND_VIDEO {
        return Err(DecodeError::WrongKind(kind));
    }
    let frame_h = r.u32().ok_or_else(hdr)? as usize;
    let frame_w = r.u32().ok_or_else(hdr)? as usize;
    let frames = r.u32().ok_or_else(hdr)? as usize;
    let scale_n = r.u32().ok_or_else(hdr)? as usize;
    let feature_bits = r.u8().ok_or_else(hdr)?;
    let model_bits = r.u8().ok_or_else(hdr)?;
    let lowres_bits = r.u8().ok_or_else(hdr)?;
    let declared = r.u64().ok_or_else(hdr)?;
    // A short stream is reported by the section where it runs out; the
    // length field itself is checked once parsing succeeds.
    debug_assert_eq!(r.pos, FIXED_HEADER_LEN);

    let (model_config, decoder_widths) = model::read_config(&mut r)
        .ok_or(DecodeError::Truncated(Section::Config))?
        .map_err(|reason| DecodeError::Invalid {
            section: Section::Config,
            reason,
        })?;
    if model_config.frame_dims() != (frame_h, frame_w) {
        return Err(DecodeError::Invalid {
            section: Section::Config,
            reason: format!(
                "decoder produces {:?} but header says {frame_h}x{frame_w}",
                model_config.frame_dims()
            ),
        });
    }
    let has_residual = model_config.variant == Variant::Residual;
    if has_residual != (scale_n > 0) {
        return Err(DecodeError::Invalid {
            section: Section::Header,
            reason: "residual variant requires a resize scale and vice versa".into(),
        });
    }

    let n_dec = r.u32().ok_or(DecodeError::Truncated(Section::Decoder { index: 0 }))? as usize;
    let mut decoder = Vec::with_capacity(n_dec.min(1024));
    for index in 0..n_dec {
        decoder.push(read_blob(&mut r, Section::Decoder { index })?);
    }
    let mut features = Vec::with_capacity(frames.min(1 << 16));
    for frame in 0..frames {
        features.push(read_blob(&mut r, Section::Feature { frame })?);
    }
    let residual = if has_residual {
        let config = ResidualConfig {
            scale: scale_n,
            bit_depth: lowres_bits,
        };
        config.validate(frame_h, frame_w).map_err(|e| DecodeError::Invalid {
            section: Section::Header,
            reason: e.to_string(),
        })?;
        let (lh, lw) = (frame_h / scale_n, frame_w / scale_n);
        let count = 3 * lh * lw;
        let nbytes = (count * lowres_bits as usize).div_ceil(8);
        let mut lows = Vec::with_capacity(frames.min(1 << 16));
        for frame in 0..frames {
            let payload = r.take(nbytes).ok_or(DecodeError::Truncated(Section::Residual { frame }))?;
            let codes = unpack_codes(payload, count, lowres_bits)
                .into_iter()
                .map(|c| c as u8)
                .collect();
            lows.push(LowResFrame {
                height: lh,
                width: lw,
                bit_depth: lowres_bits,
                codes,
            });
        }
        Some(ResidualStream { config, frames: lows })
    } else {
        None
    };
    if declared != bytes.len() as u64 || r.remaining() != 0 {
        return Err(DecodeError::LengthMismatch {
            declared,
            actual: bytes.len() as u64,
        });
    }
    Ok(CompressedVideo {
        model_config,
        decoder_widths,
        frame_h,
        frame_w,
        feature_bits,
        model_bits,
        decoder,
        features,
        residual,
    })
}

/// Bit accounting for a container.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BitBreakdown {
    pub decoder_bits: u64,
    pub feature_bits: u64,
    pub residual_bits: u64,
    /// Length of the packed stream in bits, everything included.
    pub total_bits: u64,
    /// `T * y_h * y_w`.
    pub pixels: u64,
}

impl BitBreakdown {
    pub fn of(c: &CompressedVideo) -> Self {
        let decoder_bits = c.decoder.iter().map(QuantizedBlob::payload_bits).sum();
        let feature_bits = c.features.iter().map(QuantizedBlob::payload_bits).sum();
        let residual_bits = c.residual.as_ref().map_or(0, |r| {
            r.frames
                .iter()
                .map(|f| f.codes.len() as u64 * f.bit_depth as u64)
                .sum()
        });
        Self {
            decoder_bits,
            feature_bits,
            residual_bits,
            total_bits: pack(c).len() as u64 * 8,
            pixels: (c.frames() * c.frame_h * c.frame_w) as u64,
        }
    }

    pub fn payload_bits(&self) -> u64 {
        self.decoder_bits + self.feature_bits + self.residual_bits
    }

    /// Headers, per-blob ranges and byte padding.
    pub fn overhead_bits(&self) -> u64 {
        self.total_bits - self.payload_bits()
    }

    fn per_pixel(&self, bits: u64) -> f64 {
        bits as f64 / self.pixels as f64
    }

    pub fn decoder_bpp(&self) -> f64 {
        self.per_pixel(self.decoder_bits)
    }

    pub fn feature_bpp(&self) -> f64 {
        self.per_pixel(self.feature_bits)
    }

    pub fn residual_bpp(&self) -> f64 {
        self.per_pixel(self.residual_bits)
    }

    pub fn overhead_bpp(&self) -> f64 {
        self.per_pixel(self.overhead_bits())
    }

    /// Bits per pixel excluding container overhead.
    pub fn payload_bpp(&self) -> f64 {
        self.per_pixel(self.payload_bits())
    }

    pub fn total_bpp(&self) -> f64 {
        self.per_pixel(self.total_bits)
    }
}

/// Bits per pixel of the packed stream, overhead included.
pub fn total_bpp(c: &CompressedVideo) -> f64 {
    BitBreakdown::of(c).total_bpp()
}

/// Bits per pixel excluding container overhead.
pub fn payload_bpp(c: &CompressedVideo) -> f64 {
    BitBreakdown::of(c).payload_bpp()
}
