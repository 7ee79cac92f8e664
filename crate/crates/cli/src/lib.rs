//! `rinr` command-line front end: synthesize or ingest videos, train,
//! compress, decode, evaluate and run the model-size sweep.

pub mod artifacts;
pub mod config;
pub mod pipeline;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rinr_core::model::Variant;
use rinr_core::quant;
use rinr_core::video::{self, FrameFormat, SynthKind};

use crate::config::{check_dims, Dims, Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "rinr", version, about = "Residual INR video codec")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Hyperparameters shared by the training-side subcommands. Precedence:
/// defaults, then `--config`, then individual flags.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// `key = value` config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// baseline | residual
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Low-res resize scale n
    #[arg(long)]
    pub scale_n: Option<usize>,
    /// Decoder size in millions of parameters
    #[arg(long)]
    pub model_size: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Peak learning rate (default 9.9e-4 residual, 1e-3 baseline)
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub feature_bits: Option<u8>,
    #[arg(long)]
    pub model_bits: Option<u8>,
    /// Center-crop input frames to HxW
    #[arg(long)]
    pub crop: Option<Dims>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            variant: self.variant,
            scale_n: self.scale_n,
            model_size: self.model_size,
            epochs: self.epochs,
            lr: self.lr,
            seed: self.seed,
            feature_bits: self.feature_bits,
            model_bits: self.model_bits,
            crop: self.crop,
        }
    }

    /// Resolves against `base` (a saved run config, if any).
    pub fn resolve(&self, base: Option<&Path>) -> Result<RunConfig> {
        let mut o = Overrides::default();
        for path in base.into_iter().chain(self.config.as_deref()) {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            o = o.merge(Overrides::parse_file(&text).with_context(|| format!("{}", path.display()))?);
        }
        let cfg = RunConfig::default().with(&o.merge(self.overrides()));
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a deterministic synthetic video
    Synth {
        /// rects | bouncing | gratings
        #[arg(long)]
        kind: SynthKind,
        #[arg(long, default_value_t = 16)]
        frames: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Resize scale the frames must support
        #[arg(long, default_value_t = 8)]
        scale_n: usize,
        /// ppm | raw
        #[arg(long, default_value = "ppm")]
        format: FrameFormat,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train (encode) one video; writes a run directory
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Suppress per-epoch lines
        #[arg(long)]
        quiet: bool,
    },
    /// Quantize a trained run into a compressed video file
    Compress {
        /// Run directory from `train` (supplies all inputs below)
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        lowres: Option<PathBuf>,
        /// Original frames; when given, the expected decode PSNR is reported
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Reconstruct frames from a compressed video file alone
    Decode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// ppm | raw
        #[arg(long, default_value = "ppm")]
        format: FrameFormat,
    },
    /// Per-frame PSNR / MS-SSIM of reconstructions against originals
    Eval {
        #[arg(long)]
        recon: PathBuf,
        #[arg(long)]
        original: PathBuf,
        /// CSV destination (stdout otherwise)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Center-crop the originals to HxW first
        #[arg(long)]
        crop: Option<Dims>,
    },
    /// Train/compress/decode/eval over variants x model sizes
    RdSweep {
        #[arg(long)]
        input: PathBuf,
        /// RD CSV destination
        #[arg(long)]
        out: PathBuf,
        /// Multipliers of --model-size
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,1.5,2")]
        sizes: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "baseline,residual")]
        variants: Vec<Variant>,
        /// Keep each cell's compressed file here
        #[arg(long)]
        artifacts: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

/// Parses `args` (including the program name) and runs the subcommand,
/// writing reports to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    execute(cli.command, out)
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Synth {
            kind,
            frames,
            height,
            width,
            seed,
            scale_n,
            format,
            out: dir,
        } => {
            check_dims(height, width, scale_n)?;
            let seq = video::synthesize(kind, frames, height, width, seed)?;
            let paths = video::write_dir(&seq, &dir, format)?;
            writeln!(out, "wrote {} frames ({height}x{width}) to {}", paths.len(), dir.display())?;
        }
        Command::Train {
            input,
            out: dir,
            common,
            quiet,
        } => {
            let cfg = common.resolve(None)?;
            let seq = pipeline::load_video(&input, cfg.crop)?;
            let mut log_err = None;
            let trained = pipeline::train_video(&cfg, &seq, |e| {
                if !quiet {
                    if let Err(err) = writeln!(out, "{e}") {
                        log_err.get_or_insert(err);
                    }
                }
            })?;
            if let Some(e) = log_err {
                return Err(e.into());
            }
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            artifacts::write_checkpoint(&dir.join(artifacts::CHECKPOINT_FILE), &trained.checkpoint)?;
            artifacts::write_features(&dir.join(artifacts::FEATURES_FILE), &trained.features)?;
            if let Some((rc, frames)) = &trained.lowres {
                artifacts::write_lowres(&dir.join(artifacts::LOWRES_FILE), *rc, frames)?;
            }
            let mut csv = String::from("epoch,loss,psnr_db\n");
            for e in &trained.log {
                csv.push_str(&format!("{},{},{}\n", e.epoch, e.loss, rinr_core::metrics::fmt_db(e.psnr)));
            }
            fs::write(dir.join(artifacts::LOG_FILE), csv)?;
            fs::write(dir.join(artifacts::CONFIG_FILE), cfg.to_file())?;
            let p = trained.model().count_params();
            writeln!(
                out,
                "trained {} on {} frames: decoder_params {} encoder_params {} train_psnr {}",
                cfg.variant,
                seq.len(),
                p.decoder,
                p.encoder,
                rinr_core::metrics::fmt_db(trained.train_psnr)
            )?;
        }
        Command::Compress {
            run,
            checkpoint,
            features,
            lowres,
            frames,
            out: path,
            common,
        } => {
            let pick = |explicit: Option<PathBuf>, file: &str, what: &str| -> Result<PathBuf> {
                match (explicit, &run) {
                    (Some(p), _) => Ok(p),
                    (None, Some(r)) => Ok(r.join(file)),
                    (None, None) => bail!("missing --{what} (or --run)"),
                }
            };
            let saved = run.as_ref().map(|r| r.join(artifacts::CONFIG_FILE)).filter(|p| p.exists());
            let cfg = common.resolve(saved.as_deref())?;
            let ckpt = artifacts::read_checkpoint(&pick(checkpoint, artifacts::CHECKPOINT_FILE, "checkpoint")?)?;
            let feats = artifacts::read_features(&pick(features, artifacts::FEATURES_FILE, "features")?)?;
            let low = match ckpt.model.config.variant {
                Variant::Baseline => None,
                Variant::Residual => Some(artifacts::read_lowres(&pick(lowres, artifacts::LOWRES_FILE, "lowres")?)?),
            };
            let c = pipeline::compress(&ckpt, &feats, low.as_ref(), &cfg)?;
            let bytes = quant::pack(&c);
            fs::write(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
            write!(out, "{}", pipeline::breakdown_report(&c))?;
            if let Some(dir) = frames {
                let original = pipeline::load_video(&dir, cfg.crop)?;
                let recon = pipeline::decode(&c, &original.id)?.quantized_8bit();
                let report = pipeline::evaluate(&recon, &original)?;
                writeln!(out, "expected_psnr_db {}", rinr_core::metrics::fmt_db(report.mean_psnr()))?;
                writeln!(out, "expected_ms_ssim {}", report.mean_ms_ssim())?;
            }
        }
        Command::Decode { input, out: dir, format } => {
            let bytes = fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let c = quant::unpack(&bytes).with_context(|| format!("{}", input.display()))?;
            let seq = pipeline::decode(&c, "decoded")?;
            let paths = video::write_dir(&seq, &dir, format)?;
            writeln!(out, "decoded {} frames to {}", paths.len(), dir.display())?;
        }
        Command::Eval {
            recon,
            original,
            out: dest,
            crop,
        } => {
            let r = video::read_dir(&recon)?;
            let o = pipeline::load_video(&original, crop)?;
            let report = pipeline::evaluate(&r, &o)?;
            match dest {
                Some(p) => {
                    fs::write(&p, report.to_csv()).with_context(|| format!("writing {}", p.display()))?;
                    writeln!(
                        out,
                        "mean psnr_db {} ms_ssim {}",
                        rinr_core::metrics::fmt_db(report.mean_psnr()),
                        report.mean_ms_ssim()
                    )?;
                }
                None => write!(out, "{}", report.to_csv())?,
            }
        }
        Command::RdSweep {
            input,
            out: dest,
            sizes,
            variants,
            artifacts: keep,
            common,
        } => {
            let cfg = common.resolve(None)?;
            let seq = pipeline::load_video(&input, cfg.crop)?;
            let mut io_err = None;
            let rows = pipeline::rd_sweep(&cfg, &seq, &sizes, &variants, keep.as_deref(), |r| {
                let line = match &r.error {
                    None => format!(
                        "{} x{}: bpp {} psnr {} ms_ssim {}",
                        r.variant,
                        r.size,
                        r.bpp(),
                        rinr_core::metrics::fmt_db(r.psnr),
                        r.ms_ssim
                    ),
                    Some(e) => format!("{} x{}: failed: {e}", r.variant, r.size),
                };
                if let Err(e) = writeln!(out, "{line}") {
                    io_err.get_or_insert(e);
                }
            })?;
            if let Some(e) = io_err {
                return Err(e.into());
            }
            fs::write(&dest, pipeline::rd_csv(&rows)).with_context(|| format!("writing {}", dest.display()))?;
        }
    }
    Ok(())
}

/// Collapses an error chain onto one line.
pub fn one_line(e: &anyhow::Error) -> String {
    format!("{e:#}").lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("; ")
}
