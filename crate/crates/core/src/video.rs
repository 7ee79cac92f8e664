//! Frame sequences, their on-disk formats and synthetic test videos.
//!
//! A video is a directory of same-sized frames named so that lexicographic
//! order is temporal order. Two formats are understood:
//! - binary PPM (`P6`), 8-bit (or 16-bit when maxval > 255)
//! - raw planar little-endian `f32` (`<stem>.raw`) with a text sidecar
//!   `<stem>.dims` holding `3 <height> <width>`

use std::f64::consts::PI;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tensor::Tensor;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum VideoError {
    #[error("{path}: {error}")]
    Io { path: PathBuf, error: io::Error },
    #[error("{path}: malformed PPM: {reason}")]
    Ppm { path: PathBuf, reason: String },
    #[error("{path}: malformed raw frame: {reason}")]
    Raw { path: PathBuf, reason: String },
    #[error("frame {index} is {got:?}, expected {expected:?}")]
    DimMismatch {
        index: usize,
        got: (usize, usize),
        expected: (usize, usize),
    },
    #[error("no frames found in {0}")]
    Empty(PathBuf),
    #[error("cannot crop {h}x{w} to {ch}x{cw}")]
    Crop { h: usize, w: usize, ch: usize, cw: usize },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = VideoError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> VideoError + '_ {
    move |error| VideoError::Io {
        path: path.to_path_buf(),
        error,
    }
}

/// `T` frames of planar RGB in `[0, 1]`, all `height x width`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    pub id: String,
    pub height: usize,
    pub width: usize,
    pub frames: Vec<Vec<f32>>,
}

impl FrameSequence {
    pub fn new(id: impl Into<String>, height: usize, width: usize, frames: Vec<Vec<f32>>) -> Result<Self> {
        if frames.is_empty() {
            return Err(VideoError::Invalid("a video needs at least one frame".into()));
        }
        for (index, f) in frames.iter().enumerate() {
            if f.len() != 3 * height * width {
                return Err(VideoError::Invalid(format!(
                    "frame {index} holds {} samples, expected 3x{height}x{width}",
                    f.len()
                )));
            }
        }
        Ok(Self {
            id: id.into(),
            height,
            width,
            frames,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame<F: Scalar>(&self, index: usize) -> Tensor<F> {
        let data = self.frames[index].iter().map(|&v| F::lit(v as f64)).collect();
        Tensor::new([1, 3, self.height, self.width], data).expect("validated on construction")
    }

    pub fn tensors<F: Scalar>(&self) -> Vec<Tensor<F>> {
        (0..self.len()).map(|i| self.frame(i)).collect()
    }

    pub fn from_tensors<F: Scalar>(id: impl Into<String>, frames: &[Tensor<F>]) -> Result<Self> {
        let first = frames.first().ok_or_else(|| VideoError::Invalid("no frames".into()))?;
        let [_, _, h, w] = first.shape();
        let data = frames
            .iter()
            .enumerate()
            .map(|(index, t)| match t.shape() {
                [1, 3, th, tw] if (th, tw) == (h, w) => Ok(t.data().iter().map(|v| v.as_f64() as f32).collect()),
                s => Err(VideoError::DimMismatch {
                    index,
                    got: (s[2], s[3]),
                    expected: (h, w),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(id, h, w, data)
    }

    /// Center crop to `height x width`.
    pub fn crop_center(&self, height: usize, width: usize) -> Result<Self> {
        if height > self.height || width > self.width || height == 0 || width == 0 {
            return Err(VideoError::Crop {
                h: self.height,
                w: self.width,
                ch: height,
                cw: width,
            });
        }
        let y0 = (self.height - height) / 2;
        let x0 = (self.width - width) / 2;
        let frames = self
            .frames
            .iter()
            .map(|f| {
                let mut out = Vec::with_capacity(3 * height * width);
                for c in 0..3 {
                    for y in 0..height {
                        let row = (c * self.height + y0 + y) * self.width + x0;
                        out.extend_from_slice(&f[row..row + width]);
                    }
                }
                out
            })
            .collect();
        Self::new(self.id.clone(), height, width, frames)
    }

    /// Rounds every sample to the nearest 8-bit level, as a PPM round trip would.
    pub fn quantized_8bit(&self) -> Self {
        let frames = self
            .frames
            .iter()
            .map(|f| f.iter().map(|&v| to_u8(v) as f32 / 255.0).collect())
            .collect();
        Self {
            frames,
            ..self.clone()
        }
    }
}

#[inline]
fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

// ---------------------------------------------------------------------------
// PPM

/// Encodes a planar frame as binary PPM with maxval 255.
pub fn encode_ppm(height: usize, width: usize, planar: &[f32]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    let plane = height * width;
    out.reserve(3 * plane);
    for i in 0..plane {
        for c in 0..3 {
            out.push(to_u8(planar[c * plane + i]));
        }
    }
    out
}

/// Decodes a binary PPM into `(height, width, planar samples in [0, 1])`.
pub fn decode_ppm(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<f32>), String> {
    let mut pos = 0usize;
    let token = |pos: &mut usize| -> std::result::Result<String, String> {
        loop {
            match bytes.get(*pos) {
                Some(b'#') => {
                    while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                        *pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => *pos += 1,
                Some(_) => break,
                None => return Err("unexpected end of header".into()),
            }
        }
        let start = *pos;
        while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            *pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = token(&mut pos)?;
    if magic != "P6" {
        return Err(format!("expected P6, found {magic:?}"));
    }
    let num = |s: String| s.parse::<usize>().map_err(|_| format!("bad header number {s:?}"));
    let width = num(token(&mut pos)?)?;
    let height = num(token(&mut pos)?)?;
    let maxval = num(token(&mut pos)?)?;
    if !(1..=65535).contains(&maxval) {
        return Err(format!("maxval {maxval} out of range"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let bps = if maxval > 255 { 2 } else { 1 };
    let plane = width * height;
    let need = 3 * plane * bps;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| format!("raster needs {need} bytes, file has {}", bytes.len().saturating_sub(pos)))?;
    let maxf = maxval as f32;
    let mut planar = vec![0.0f32; 3 * plane];
    for i in 0..plane {
        for c in 0..3 {
            let k = (3 * i + c) * bps;
            let v = if bps == 2 {
                u16::from_be_bytes([raster[k], raster[k + 1]]) as usize
            } else {
                raster[k] as usize
            };
            planar[c * plane + i] = v.min(maxval) as f32 / maxf;
        }
    }
    Ok((height, width, planar))
}

// ---------------------------------------------------------------------------
// Raw f32

pub fn encode_raw(planar: &[f32]) -> Vec<u8> {
    planar.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn read_raw(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let bad = |reason: String| VideoError::Raw {
        path: path.to_path_buf(),
        reason,
    };
    let dims_path = path.with_extension("dims");
    let dims = fs::read_to_string(&dims_path).map_err(io_err(&dims_path))?;
    let nums: Vec<usize> = dims
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| bad(format!("bad dims {s:?}"))))
        .collect::<Result<_>>()?;
    let [c, h, w] = nums[..] else {
        return Err(bad("dims sidecar must hold 3 numbers".into()));
    };
    if c != 3 {
        return Err(bad(format!("{c} channels, expected 3")));
    }
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() != 4 * 3 * h * w {
        return Err(bad(format!("{} bytes for 3x{h}x{w} f32 samples", bytes.len())));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok((h, w, data))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameFormat {
    Ppm,
    Raw,
}

impl std::str::FromStr for FrameFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ppm" => Ok(Self::Ppm),
            "raw" => Ok(Self::Raw),
            other => Err(format!("unknown frame format '{other}' (expected ppm|raw)")),
        }
    }
}

/// Reads every `.ppm` (or every `.raw`) file of `dir` in name order.
pub fn read_dir(dir: &Path) -> Result<FrameSequence> {
    let mut ppm = Vec::new();
    let mut raw = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        match path.extension().and_then(|e| e.to_str()) {
            Some("ppm") => ppm.push(path),
            Some("raw") => raw.push(path),
            _ => {}
        }
    }
    let (files, format) = match (ppm.is_empty(), raw.is_empty()) {
        (false, true) => (ppm, FrameFormat::Ppm),
        (true, false) => (raw, FrameFormat::Raw),
        (true, true) => return Err(VideoError::Empty(dir.to_path_buf())),
        (false, false) => {
            return Err(VideoError::Invalid(format!(
                "{} mixes .ppm and .raw frames",
                dir.display()
            )))
        }
    };
    let mut files = files;
    files.sort();
    let mut frames = Vec::with_capacity(files.len());
    let mut dims = None;
    for (index, path) in files.iter().enumerate() {
        let (h, w, data) = match format {
            FrameFormat::Ppm => {
                let bytes = fs::read(path).map_err(io_err(path))?;
                decode_ppm(&bytes).map_err(|reason| VideoError::Ppm {
                    path: path.clone(),
                    reason,
                })?
            }
            FrameFormat::Raw => read_raw(path)?,
        };
        match dims {
            None => dims = Some((h, w)),
            Some(expected) if expected != (h, w) => {
                return Err(VideoError::DimMismatch {
                    index,
                    got: (h, w),
                    expected,
                })
            }
            _ => {}
        }
        frames.push(data);
    }
    let (h, w) = dims.expect("at least one frame");
    let id = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "video".into());
    FrameSequence::new(id, h, w, frames)
}

/// Writes `frame_00000.<ext>` files; returns their paths.
pub fn write_dir(seq: &FrameSequence, dir: &Path, format: FrameFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut paths = Vec::with_capacity(seq.len());
    for (i, f) in seq.frames.iter().enumerate() {
        let path = match format {
            FrameFormat::Ppm => {
                let p = dir.join(format!("frame_{i:05}.ppm"));
                fs::write(&p, encode_ppm(seq.height, seq.width, f)).map_err(io_err(&p))?;
                p
            }
            FrameFormat::Raw => {
                let p = dir.join(format!("frame_{i:05}.raw"));
                fs::write(&p, encode_raw(f)).map_err(io_err(&p))?;
                let d = p.with_extension("dims");
                fs::write(&d, format!("3 {} {}\n", seq.height, seq.width)).map_err(io_err(&d))?;
                p
            }
        };
        paths.push(path);
    }
    Ok(paths)
}

// ---------------------------------------------------------------------------
// Synthetic sequences

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    /// Anti-aliased rectangles sliding over a colour gradient.
    Rects,
    /// Striped balls bouncing off the borders over a soft texture.
    Bouncing,
    /// Sum of drifting sinusoidal gratings with whole periods per frame.
    Gratings,
}

impl SynthKind {
    pub const ALL: [SynthKind; 3] = [SynthKind::Rects, SynthKind::Bouncing, SynthKind::Gratings];

    pub fn as_str(self) -> &'static str {
        match self {
            SynthKind::Rects => "rects",
            SynthKind::Bouncing => "bouncing",
            SynthKind::Gratings => "gratings",
        }
    }
}

impl std::str::FromStr for SynthKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "rects" => Ok(Self::Rects),
            "bouncing" => Ok(Self::Bouncing),
            "gratings" => Ok(Self::Gratings),
            other => Err(format!("unknown synthetic kind '{other}' (expected rects|bouncing|gratings)")),
        }
    }
}

/// Deterministic synthetic video; identical `(kind, frames, dims, seed)`
/// give bit-identical output.
pub fn synthesize(kind: SynthKind, frames: usize, height: usize, width: usize, seed: u64) -> Result<FrameSequence> {
    if frames == 0 || height == 0 || width == 0 {
        return Err(VideoError::Invalid("frames and dims must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = match kind {
        SynthKind::Rects => rects(&mut rng, frames, height, width),
        SynthKind::Bouncing => bouncing(&mut rng, frames, height, width),
        SynthKind::Gratings => gratings(&mut rng, frames, height, width),
    };
    FrameSequence::new(format!("{}-{seed}", kind.as_str()), height, width, data)
}

fn background(rng: &mut ChaCha8Rng) -> impl Fn(usize, f64, f64) -> f64 {
    let c0: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.15..0.6));
    let c1: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.3..0.85));
    let fx = rng.gen_range(1.0..3.0);
    let fy = rng.gen_range(1.0..3.0);
    let ph = rng.gen_range(0.0..2.0 * PI);
    move |c, u, v| {
        let t = 0.5 + 0.5 * (PI * (fx * u + fy * v) + ph).sin() * (1.3 * PI * v + 0.7 * ph).cos();
        c0[c] + (c1[c] - c0[c]) * t
    }
}

fn rects(rng: &mut ChaCha8Rng, frames: usize, h: usize, w: usize) -> Vec<Vec<f32>> {
    let bg = background(rng);
    let count = rng.gen_range(3..=5);
    struct R {
        x: f64,
        y: f64,
        rw: f64,
        rh: f64,
        vx: f64,
        vy: f64,
        col: [f64; 3],
    }
    let (wf, hf) = (w as f64, h as f64);
    let shapes: Vec<R> = (0..count)
        .map(|_| R {
            x: rng.gen_range(0.0..wf),
            y: rng.gen_range(0.0..hf),
            rw: rng.gen_range(0.15..0.4) * wf,
            rh: rng.gen_range(0.15..0.4) * hf,
            vx: rng.gen_range(-2.5..2.5),
            vy: rng.gen_range(-1.5..1.5),
            col: std::array::from_fn(|_| rng.gen_range(0.0..1.0)),
        })
        .collect();
    let overlap = |a0: f64, a1: f64, b0: f64, b1: f64| (a1.min(b1) - a0.max(b0)).max(0.0);
    (0..frames)
        .map(|t| {
            let mut img = vec![0.0f32; 3 * h * w];
            for y in 0..h {
                for x in 0..w {
                    let mut px: [f64; 3] =
                        std::array::from_fn(|c| bg(c, x as f64 / wf, y as f64 / hf));
                    for r in &shapes {
                        let rx = (r.x + r.vx * t as f64).rem_euclid(wf);
                        let ry = (r.y + r.vy * t as f64).rem_euclid(hf);
                        // box-filtered coverage, including the wrapped copy
                        let mut cov = 0.0;
                        for ox in [-wf, 0.0] {
                            for oy in [-hf, 0.0] {
                                let cx = overlap(x as f64, x as f64 + 1.0, rx + ox, rx + ox + r.rw);
                                let cy = overlap(y as f64, y as f64 + 1.0, ry + oy, ry + oy + r.rh);
                                cov += cx * cy;
                            }
                        }
                        let cov = cov.min(1.0);
                        for c in 0..3 {
                            px[c] = px[c] * (1.0 - cov) + r.col[c] * cov;
                        }
                    }
                    for c in 0..3 {
                        img[(c * h + y) * w + x] = px[c].clamp(0.0, 1.0) as f32;
                    }
                }
            }
            img
        })
        .collect()
}

fn bouncing(rng: &mut ChaCha8Rng, frames: usize, h: usize, w: usize) -> Vec<Vec<f32>> {
    let bg = background(rng);
    let (wf, hf) = (w as f64, h as f64);
    let count = rng.gen_range(2..=4);
    struct Ball {
        x: f64,
        y: f64,
        r: f64,
        vx: f64,
        vy: f64,
        col: [f64; 3],
        stripe: f64,
        angle: f64,
    }
    let balls: Vec<Ball> = (0..count)
        .map(|_| {
            let r = rng.gen_range(0.12..0.25) * hf;
            Ball {
                x: rng.gen_range(r..wf - r),
                y: rng.gen_range(r..hf - r),
                r,
                vx: rng.gen_range(-3.0..3.0),
                vy: rng.gen_range(-2.0..2.0),
                col: std::array::from_fn(|_| rng.gen_range(0.2..1.0)),
                stripe: rng.gen_range(0.3..0.8),
                angle: rng.gen_range(0.0..PI),
            }
        })
        .collect();
    // reflect a coordinate into [lo, hi]
    let bounce = |p: f64, lo: f64, hi: f64| {
        let span = hi - lo;
        let m = (p - lo).rem_euclid(2.0 * span);
        lo + if m > span { 2.0 * span - m } else { m }
    };
    const SS: usize = 3;
    (0..frames)
        .map(|t| {
            let pos: Vec<(f64, f64)> = balls
                .iter()
                .map(|b| {
                    (
                        bounce(b.x + b.vx * t as f64, b.r, wf - b.r),
                        bounce(b.y + b.vy * t as f64, b.r, hf - b.r),
                    )
                })
                .collect();
            let mut img = vec![0.0f32; 3 * h * w];
            for y in 0..h {
                for x in 0..w {
                    let mut acc = [0.0f64; 3];
                    for sy in 0..SS {
                        for sx in 0..SS {
                            let u = x as f64 + (sx as f64 + 0.5) / SS as f64;
                            let v = y as f64 + (sy as f64 + 0.5) / SS as f64;
                            let mut px: [f64; 3] = std::array::from_fn(|c| bg(c, u / wf, v / hf));
                            for (b, &(bx, by)) in balls.iter().zip(&pos) {
                                let (dx, dy) = (u - bx, v - by);
                                if dx * dx + dy * dy <= b.r * b.r {
                                    let s = (dx * b.angle.cos() + dy * b.angle.sin()) * b.stripe;
                                    let shade = 0.75 + 0.25 * s.sin();
                                    px = std::array::from_fn(|c| b.col[c] * shade);
                                }
                            }
                            for c in 0..3 {
                                acc[c] += px[c];
                            }
                        }
                    }
                    for c in 0..3 {
                        img[(c * h + y) * w + x] = (acc[c] / (SS * SS) as f64).clamp(0.0, 1.0) as f32;
                    }
                }
            }
            img
        })
        .collect()
}

fn gratings(rng: &mut ChaCha8Rng, frames: usize, h: usize, w: usize) -> Vec<Vec<f32>> {
    struct G {
        kx: f64,
        ky: f64,
        omega: f64,
        phase: [f64; 3],
    }
    let waves: Vec<G> = (0..2)
        .map(|_| G {
            kx: rng.gen_range(1..=4) as f64,
            ky: rng.gen_range(0..=2) as f64,
            omega: rng.gen_range(0.1..0.4),
            phase: std::array::from_fn(|_| rng.gen_range(0.0..2.0 * PI)),
        })
        .collect();
    let (wf, hf) = (w as f64, h as f64);
    (0..frames)
        .map(|t| {
            let mut img = vec![0.0f32; 3 * h * w];
            for c in 0..3 {
                for y in 0..h {
                    for x in 0..w {
                        let v = 0.5
                            + waves
                                .iter()
                                .map(|g| {
                                    0.2 * (2.0 * PI * (g.kx * x as f64 / wf + g.ky * y as f64 / hf)
                                        - g.omega * t as f64
                                        + g.phase[c])
                                        .sin()
                                })
                                .sum::<f64>();
                        img[(c * h + y) * w + x] = v as f32;
                    }
                }
            }
            img
        })
        .collect()
}
