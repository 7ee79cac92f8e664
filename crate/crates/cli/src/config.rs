//! Run configuration: defaults, `key=value` files, then command-line flags.

use std::fmt::Write as _;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use rinr_core::model::{ModelConfig, Variant};
use rinr_core::residual::ResidualConfig;
use rinr_core::train::{default_lr, TrainConfig};

/// `HxW`, e.g. `64x128`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub height: usize,
    pub width: usize,
}

impl FromStr for Dims {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (h, w) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected HxW, got '{s}'"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("expected HxW, got '{s}'"));
        let d = Dims {
            height: parse(h)?,
            width: parse(w)?,
        };
        if d.height == 0 || d.width == 0 {
            return Err(format!("dims must be positive, got '{s}'"));
        }
        Ok(d)
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub variant: Variant,
    pub scale_n: usize,
    /// Decoder size in millions of parameters.
    pub model_size: f64,
    pub epochs: usize,
    /// `None` picks the variant default.
    pub lr: Option<f64>,
    pub seed: u64,
    pub feature_bits: u8,
    pub model_bits: u8,
    pub crop: Option<Dims>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Residual,
            scale_n: 8,
            model_size: 0.05,
            epochs: 500,
            lr: None,
            seed: 0,
            feature_bits: 6,
            model_bits: 8,
            crop: None,
        }
    }
}

/// Optional overrides; every field mirrors a flag and a config-file key.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub variant: Option<Variant>,
    pub scale_n: Option<usize>,
    pub model_size: Option<f64>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub seed: Option<u64>,
    pub feature_bits: Option<u8>,
    pub model_bits: Option<u8>,
    pub crop: Option<Dims>,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| anyhow::anyhow!("invalid value '{value}' for '{key}': {e}"))
}

impl Overrides {
    /// Parses `key = value` lines; `#` starts a comment. Keys use the flag
    /// spelling (`scale-n`), underscores are accepted too.
    pub fn parse_file(text: &str) -> Result<Self> {
        let mut o = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("config line {}: expected key=value, got '{line}'", i + 1))?;
            let key = key.trim().replace('_', "-");
            let value = value.trim();
            o.set(&key, value)
                .with_context(|| format!("config line {}", i + 1))?;
        }
        Ok(o)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "variant" => self.variant = Some(value.parse().map_err(anyhow::Error::msg)?),
            "scale-n" => self.scale_n = Some(parse_value(key, value)?),
            "model-size" => self.model_size = Some(parse_value(key, value)?),
            "epochs" => self.epochs = Some(parse_value(key, value)?),
            "lr" => self.lr = Some(parse_value(key, value)?),
            "seed" => self.seed = Some(parse_value(key, value)?),
            "feature-bits" => self.feature_bits = Some(parse_value(key, value)?),
            "model-bits" => self.model_bits = Some(parse_value(key, value)?),
            "crop" => self.crop = Some(value.parse().map_err(anyhow::Error::msg)?),
            other => bail!("unknown config key '{other}'"),
        }
        Ok(())
    }

    /// Fields set in `other` win.
    pub fn merge(self, other: Overrides) -> Overrides {
        Overrides {
            variant: other.variant.or(self.variant),
            scale_n: other.scale_n.or(self.scale_n),
            model_size: other.model_size.or(self.model_size),
            epochs: other.epochs.or(self.epochs),
            lr: other.lr.or(self.lr),
            seed: other.seed.or(self.seed),
            feature_bits: other.feature_bits.or(self.feature_bits),
            model_bits: other.model_bits.or(self.model_bits),
            crop: other.crop.or(self.crop),
        }
    }
}

impl RunConfig {
    pub fn with(mut self, o: &Overrides) -> Self {
        if let Some(v) = o.variant {
            self.variant = v;
        }
        if let Some(v) = o.scale_n {
            self.scale_n = v;
        }
        if let Some(v) = o.model_size {
            self.model_size = v;
        }
        if let Some(v) = o.epochs {
            self.epochs = v;
        }
        if o.lr.is_some() {
            self.lr = o.lr;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.feature_bits {
            self.feature_bits = v;
        }
        if let Some(v) = o.model_bits {
            self.model_bits = v;
        }
        if o.crop.is_some() {
            self.crop = o.crop;
        }
        self
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr.unwrap_or_else(|| default_lr(self.variant))
    }

    pub fn target_params(&self) -> usize {
        (self.model_size * 1e6).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let lr = self.learning_rate();
        if !(lr.is_finite() && lr > 0.0) {
            bail!("learning rate must be > 0, got {lr}");
        }
        if self.epochs == 0 {
            bail!("epochs must be >= 1");
        }
        if self.scale_n == 0 {
            bail!("scale-n must be >= 1");
        }
        if !(self.model_size.is_finite() && self.model_size > 0.0) || self.target_params() == 0 {
            bail!("model-size must be a positive number of millions of parameters, got {}", self.model_size);
        }
        for (name, bits) in [("feature-bits", self.feature_bits), ("model-bits", self.model_bits)] {
            if !(1..=16).contains(&bits) {
                bail!("{name} must be in 1..=16, got {bits}");
            }
        }
        Ok(())
    }

    pub fn model_config(&self, height: usize, width: usize) -> ModelConfig {
        ModelConfig::desk(self.variant, height, width, self.target_params())
    }

    pub fn residual_config(&self) -> ResidualConfig {
        ResidualConfig::new(self.scale_n)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.learning_rate(),
            seed: self.seed,
            residual: self.residual_config(),
            ..TrainConfig::new(self.variant)
        }
    }

    /// The resolved configuration in config-file syntax.
    pub fn to_file(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "variant = {}", self.variant);
        let _ = writeln!(s, "scale-n = {}", self.scale_n);
        let _ = writeln!(s, "model-size = {}", self.model_size);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "lr = {}", self.learning_rate());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "feature-bits = {}", self.feature_bits);
        let _ = writeln!(s, "model-bits = {}", self.model_bits);
        if let Some(c) = self.crop {
            let _ = writeln!(s, "crop = {c}");
        }
        s
    }
}

/// Rejects frame dims the default architecture or the resize scale cannot
/// handle, naming both requirements.
pub fn check_dims(height: usize, width: usize, scale_n: usize) -> Result<()> {
    let probe = ModelConfig::desk(Variant::Baseline, 1, 1, 1);
    let r = probe.total_upsample();
    if height % r != 0 || width % r != 0 || height == 0 || width == 0 || scale_n == 0 || height % scale_n != 0 || width % scale_n != 0 {
        bail!(
            "frame size {height}x{width} must be divisible by {r} (decoder upsample factor) and by {scale_n} (resize scale n)"
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let file = Overrides::parse_file("# desk run\nepochs = 20\nscale_n=4\nvariant = baseline\ncrop = 32x64\n").unwrap();
        let flags = Overrides {
            epochs: Some(7),
            ..Default::default()
        };
        let cfg = RunConfig::default().with(&file.merge(flags));
        assert_eq!(cfg.epochs, 7);
        assert_eq!(cfg.scale_n, 4);
        assert_eq!(cfg.variant, Variant::Baseline);
        assert_eq!(cfg.learning_rate(), 1e-3);
        assert_eq!(cfg.crop, Some(Dims { height: 32, width: 64 }));
        let again = RunConfig::default().with(&Overrides::parse_file(&cfg.to_file()).unwrap());
        assert_eq!(again.learning_rate(), cfg.learning_rate());
        assert_eq!(again.epochs, 7);
    }

    #[test]
    fn bad_files_are_rejected() {
        assert!(Overrides::parse_file("bogus = 1").is_err());
        assert!(Overrides::parse_file("epochs").is_err());
        assert!(Overrides::parse_file("epochs = many").is_err());
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::default();
        assert_eq!(c.target_params(), 50_000);
        assert_eq!(c.learning_rate(), 9.9e-4);
        c.validate().unwrap();
        c.lr = Some(-1.0);
        assert!(c.validate().is_err());
        assert!(check_dims(64, 128, 8).is_ok());
        let e = check_dims(60, 128, 8).unwrap_err().to_string();
        assert!(e.contains("divisible by 32") && e.contains("by 8"), "{e}");
    }
}
