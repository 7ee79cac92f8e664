//! The stages behind the subcommands, usable without going through argv.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use rinr_core::codec::{self, QuantSettings};
use rinr_core::metrics::{fmt_db, MetricReport};
use rinr_core::model::{Checkpoint, Model, Variant};
use rinr_core::quant::{self, BitBreakdown, CompressedVideo};
use rinr_core::residual::{LowResFrame, ResidualConfig};
use rinr_core::train::{self, EpochLog, TrainingSet};
use rinr_core::video::{self, FrameSequence};
use rinr_core::Tensor;

use crate::config::{check_dims, Dims, RunConfig};

pub fn load_video(dir: &Path, crop: Option<Dims>) -> Result<FrameSequence> {
    let seq = video::read_dir(dir)?;
    Ok(match crop {
        Some(d) => seq.crop_center(d.height, d.width)?,
        None => seq,
    })
}

/// Everything `train` produces for one video.
#[derive(Clone, Debug)]
pub struct Trained {
    pub checkpoint: Checkpoint,
    pub features: Vec<Tensor<f32>>,
    pub lowres: Option<(ResidualConfig, Vec<LowResFrame>)>,
    pub log: Vec<EpochLog>,
    /// Mean PSNR of the clamped, unquantized reconstructions.
    pub train_psnr: f64,
}

impl Trained {
    pub fn model(&self) -> &Model<f32> {
        &self.checkpoint.model
    }
}

pub fn train_video(cfg: &RunConfig, seq: &FrameSequence, on_epoch: impl FnMut(&EpochLog)) -> Result<Trained> {
    cfg.validate()?;
    check_dims(seq.height, seq.width, cfg.scale_n)?;
    let model_config = cfg.model_config(seq.height, seq.width);
    let model = Model::<f32>::build(&model_config, cfg.seed)?;
    let frames = seq.tensors::<f32>();
    let set = TrainingSet::new(frames, cfg.variant, cfg.residual_config())?;
    let out = train::train(model, &set, &cfg.train_config(), on_epoch)?;
    let recon = train::reconstruct(&out.model, &set)?;
    let train_psnr = MetricReport::evaluate(seq.id.clone(), &recon, &set.frames)?.mean_psnr();
    let features = train::features(&out.model, &set.frames)?;
    let lowres = set.lowres.map(|l| (cfg.residual_config(), l));
    let scale_n = match cfg.variant {
        Variant::Residual => cfg.scale_n,
        Variant::Baseline => 0,
    };
    Ok(Trained {
        checkpoint: Checkpoint {
            model: out.model,
            scale_n,
        },
        features,
        lowres,
        log: out.log,
        train_psnr,
    })
}

pub fn compress(
    checkpoint: &Checkpoint,
    features: &[Tensor<f32>],
    lowres: Option<&(ResidualConfig, Vec<LowResFrame>)>,
    cfg: &RunConfig,
) -> Result<CompressedVideo> {
    cfg.validate()?;
    let model = &checkpoint.model;
    if let Some((rc, _)) = lowres {
        ensure!(
            rc.scale == checkpoint.scale_n,
            "low-res stream uses n={} but the model was trained with n={}",
            rc.scale,
            checkpoint.scale_n
        );
    }
    let settings = QuantSettings {
        feature_bits: cfg.feature_bits,
        model_bits: cfg.model_bits,
    };
    Ok(codec::compress(
        model,
        features,
        lowres.map(|(c, f)| (*c, f.as_slice())),
        settings,
    )?)
}

/// Decoder-only reconstruction, as floats in `[0, 1]`.
pub fn decode(c: &CompressedVideo, id: &str) -> Result<FrameSequence> {
    let frames = codec::decode(c)?;
    Ok(FrameSequence::from_tensors(id, &frames)?)
}

pub fn evaluate(recon: &FrameSequence, original: &FrameSequence) -> Result<MetricReport> {
    ensure!(
        recon.len() == original.len(),
        "frame count mismatch: {} reconstructed vs {} original",
        recon.len(),
        original.len()
    );
    ensure!(
        (recon.height, recon.width) == (original.height, original.width),
        "frame size mismatch: {}x{} reconstructed vs {}x{} original",
        recon.height,
        recon.width,
        original.height,
        original.width
    );
    Ok(MetricReport::evaluate(
        original.id.clone(),
        &recon.tensors::<f64>(),
        &original.tensors::<f64>(),
    )?)
}

/// Human- and machine-readable `key value` lines for a container.
pub fn breakdown_report(c: &CompressedVideo) -> String {
    let b = BitBreakdown::of(c);
    let mut s = String::new();
    let _ = writeln!(s, "variant {}", c.variant());
    let _ = writeln!(s, "frames {}", c.frames());
    let _ = writeln!(s, "pixels {}", b.pixels);
    let _ = writeln!(s, "decoder_params {}", c.decoder.iter().map(|d| d.codes.len()).sum::<usize>());
    let _ = writeln!(s, "decoder_bpp {}", b.decoder_bpp());
    let _ = writeln!(s, "feature_bpp {}", b.feature_bpp());
    let _ = writeln!(s, "residual_bpp {}", b.residual_bpp());
    let _ = writeln!(s, "overhead_bpp {}", b.overhead_bpp());
    let _ = writeln!(s, "payload_bpp {}", b.payload_bpp());
    let _ = writeln!(s, "total_bpp {}", b.total_bpp());
    let _ = writeln!(s, "total_bytes {}", b.total_bits / 8);
    s
}

/// One cell of the model-size sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct RdRow {
    pub variant: Variant,
    pub size: f64,
    pub decoder_params: usize,
    pub pixels: u64,
    pub payload_bits: u64,
    pub total_bits: u64,
    pub residual_bits: u64,
    pub psnr: f64,
    pub ms_ssim: f64,
    pub error: Option<String>,
}

impl RdRow {
    /// Payload bits per pixel (decoder + features + low-res stream).
    pub fn bpp(&self) -> f64 {
        self.payload_bits as f64 / self.pixels as f64
    }

    pub fn total_bpp(&self) -> f64 {
        self.total_bits as f64 / self.pixels as f64
    }

    pub fn residual_bpp(&self) -> f64 {
        self.residual_bits as f64 / self.pixels as f64
    }
}

pub const RD_HEADER: &str =
    "variant,size,decoder_params,pixels,payload_bits,total_bits,bpp,total_bpp,residual_bpp,psnr_db,ms_ssim,status";

pub fn rd_csv(rows: &[RdRow]) -> String {
    let mut s = format!("{RD_HEADER}\n");
    for r in rows {
        let status = match &r.error {
            None => "ok".to_string(),
            Some(e) => format!("\"error: {}\"", e.replace('"', "'")),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.variant,
            r.size,
            r.decoder_params,
            r.pixels,
            r.payload_bits,
            r.total_bits,
            r.bpp(),
            r.total_bpp(),
            r.residual_bpp(),
            fmt_db(r.psnr),
            r.ms_ssim,
            status
        );
    }
    s
}

/// Train, compress, decode (through the packed bytes) and evaluate one cell.
/// Frames are scored after 8-bit rounding, exactly as `decode` writes them.
pub fn rd_cell(
    base: &RunConfig,
    seq: &FrameSequence,
    variant: Variant,
    size: f64,
    artifacts: Option<&Path>,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<RdRow> {
    let cfg = RunConfig {
        variant,
        model_size: base.model_size * size,
        lr: base.lr,
        ..base.clone()
    };
    let trained = train_video(&cfg, seq, on_epoch)?;
    let c = compress(&trained.checkpoint, &trained.features, trained.lowres.as_ref(), &cfg)?;
    let bytes = quant::pack(&c);
    if let Some(dir) = artifacts {
        std::fs::create_dir_all(dir)?;
        let p = dir.join(format!("{variant}_{size}.rinrv"));
        std::fs::write(&p, &bytes).with_context(|| format!("writing {}", p.display()))?;
    }
    let unpacked = quant::unpack(&bytes)?;
    let recon = decode(&unpacked, &seq.id)?.quantized_8bit();
    let report = evaluate(&recon, seq)?;
    let b = BitBreakdown::of(&unpacked);
    Ok(RdRow {
        variant,
        size,
        decoder_params: trained.model().count_params().decoder,
        pixels: b.pixels,
        payload_bits: b.payload_bits(),
        total_bits: b.total_bits,
        residual_bits: b.residual_bits,
        psnr: report.mean_psnr(),
        ms_ssim: report.mean_ms_ssim(),
        error: None,
    })
}

/// Every `(variant, size)` cell in order; a failing cell is recorded and the
/// sweep moves on.
pub fn rd_sweep(
    base: &RunConfig,
    seq: &FrameSequence,
    sizes: &[f64],
    variants: &[Variant],
    artifacts: Option<&Path>,
    mut progress: impl FnMut(&RdRow),
) -> Result<Vec<RdRow>> {
    if sizes.is_empty() || variants.is_empty() {
        bail!("sweep needs at least one size and one variant");
    }
    let mut rows = Vec::new();
    for &variant in variants {
        for &size in sizes {
            let row = rd_cell(base, seq, variant, size, artifacts, |_| {}).unwrap_or_else(|e| RdRow {
                variant,
                size,
                decoder_params: 0,
                pixels: 0,
                payload_bits: 0,
                total_bits: 0,
                residual_bits: 0,
                psnr: f64::NAN,
                ms_ssim: f64::NAN,
                error: Some(format!("{e:#}")),
            });
            progress(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}
