//! Encoder-side files written by `train` and read by `compress`.
//!
//! - `checkpoint.rinr`: model checkpoint (see `rinr_core::model::Checkpoint`)
//! - `features.bin`: `"RFEA"`, `u32` count, then one tensor dump per frame
//! - `lowres.bin` (residual only): `"RLOW"`, `u32` n, `u8` bits, `u32` frames,
//!   `u32` height, `u32` width, then one byte per code, frame by frame

use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use rinr_core::model::Checkpoint;
use rinr_core::residual::{LowResFrame, ResidualConfig};
use rinr_core::Tensor;

pub const CHECKPOINT_FILE: &str = "checkpoint.rinr";
pub const FEATURES_FILE: &str = "features.bin";
pub const LOWRES_FILE: &str = "lowres.bin";
pub const LOG_FILE: &str = "train_log.csv";
pub const CONFIG_FILE: &str = "run.cfg";

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut buf = Vec::new();
    ckpt.write(&mut buf)?;
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Checkpoint::from_bytes(&bytes).with_context(|| format!("{}", path.display()))
}

pub fn write_features(path: &Path, features: &[Tensor<f32>]) -> Result<()> {
    let mut buf = b"RFEA".to_vec();
    buf.extend_from_slice(&(features.len() as u32).to_le_bytes());
    for f in features {
        f.write_dump(&mut buf)?;
    }
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

pub fn read_features(path: &Path) -> Result<Vec<Tensor<f32>>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let ctx = || format!("{}: malformed features file", path.display());
    ensure!(bytes.len() >= 8 && &bytes[..4] == b"RFEA", "{}", ctx());
    let count = u32::from_le_bytes(bytes[4..8].try_into()?) as usize;
    let mut rest = &bytes[8..];
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        out.push(Tensor::<f32>::read_dump(&mut rest).with_context(ctx)?);
    }
    ensure!(rest.is_empty(), "{}: trailing bytes", path.display());
    Ok(out)
}

pub fn write_lowres(path: &Path, config: ResidualConfig, frames: &[LowResFrame]) -> Result<()> {
    let first = frames.first().context("no low-res frames")?;
    let mut buf = b"RLOW".to_vec();
    buf.extend_from_slice(&(config.scale as u32).to_le_bytes());
    buf.push(config.bit_depth);
    for v in [frames.len(), first.height, first.width] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for f in frames {
        buf.extend_from_slice(&f.codes);
    }
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

pub fn read_lowres(path: &Path) -> Result<(ResidualConfig, Vec<LowResFrame>)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.len() < 21 || &bytes[..4] != b"RLOW" {
        bail!("{}: malformed low-res file", path.display());
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let config = ResidualConfig {
        scale: word(4),
        bit_depth: bytes[8],
    };
    let (t, h, w) = (word(9), word(13), word(17));
    let per = 3 * h * w;
    ensure!(
        bytes.len() == 21 + t * per,
        "{}: expected {} frames of {per} codes",
        path.display(),
        t
    );
    let frames = bytes[21..]
        .chunks_exact(per.max(1))
        .map(|codes| LowResFrame {
            height: h,
            width: w,
            bit_depth: config.bit_depth,
            codes: codes.to_vec(),
        })
        .collect();
    Ok((config, frames))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_and_lowres_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let feats = vec![
            Tensor::<f32>::new([1, 2, 1, 2], vec![0.5, -1.0, 2.0, 3.5]).unwrap(),
            Tensor::<f32>::zeros([1, 2, 1, 2]),
        ];
        let p = dir.path().join(FEATURES_FILE);
        write_features(&p, &feats).unwrap();
        let back = read_features(&p).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].to_vec(), feats[0].to_vec());

        let cfg = ResidualConfig::new(4);
        let frames = vec![
            LowResFrame {
                height: 1,
                width: 2,
                bit_depth: 8,
                codes: vec![1, 2, 3, 4, 5, 6],
            };
            3
        ];
        let p = dir.path().join(LOWRES_FILE);
        write_lowres(&p, cfg, &frames).unwrap();
        assert_eq!(read_lowres(&p).unwrap(), (cfg, frames));
        fs::write(&p, b"RLOW").unwrap();
        assert!(read_lowres(&p).is_err());
    }
}
