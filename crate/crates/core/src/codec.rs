//! Compression of a trained model into a [`CompressedVideo`] and decoder-only
//! reconstruction from one.

use thiserror::Error;

use crate::model::{Decoder, Model, ModelError, Variant};
use crate::quant::{dequantize_tensor, quantize_tensor, CompressedVideo, QuantError};
use crate::residual::{self, LowResFrame, ResidualConfig, ResidualError, ResidualStream};
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Residual(#[from] ResidualError),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = CodecError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuantSettings {
    pub feature_bits: u8,
    pub model_bits: u8,
}

impl Default for QuantSettings {
    /// 6-bit features, 8-bit decoder weights.
    fn default() -> Self {
        Self {
            feature_bits: 6,
            model_bits: 8,
        }
    }
}

/// Quantizes the decoder and the per-frame features. `lowres` must be given
/// exactly when the model is the residual variant.
pub fn compress(
    model: &Model<f32>,
    features: &[Tensor<f32>],
    lowres: Option<(ResidualConfig, &[LowResFrame])>,
    settings: QuantSettings,
) -> Result<CompressedVideo> {
    if features.is_empty() {
        return Err(CodecError::Invalid("no features to compress".into()));
    }
    let residual = match (model.config.variant, lowres) {
        (Variant::Baseline, None) => None,
        (Variant::Residual, Some((config, frames))) => {
            if frames.len() != features.len() {
                return Err(CodecError::Invalid(format!(
                    "{} low-res frames for {} features",
                    frames.len(),
                    features.len()
                )));
            }
            Some(ResidualStream {
                config,
                frames: frames.to_vec(),
            })
        }
        (Variant::Baseline, Some(_)) => {
            return Err(CodecError::Invalid("baseline model takes no low-res stream".into()))
        }
        (Variant::Residual, None) => {
            return Err(CodecError::Invalid("residual model needs its low-res stream".into()))
        }
    };
    let decoder = model
        .decoder
        .params()
        .iter()
        .map(|p| quantize_tensor(p, settings.model_bits))
        .collect::<Result<Vec<_>, _>>()?;
    let features = features
        .iter()
        .map(|f| quantize_tensor(f, settings.feature_bits))
        .collect::<Result<Vec<_>, _>>()?;
    let (frame_h, frame_w) = model.config.frame_dims();
    Ok(CompressedVideo {
        model_config: model.config.clone(),
        decoder_widths: model.decoder_widths.clone(),
        frame_h,
        frame_w,
        feature_bits: settings.feature_bits,
        model_bits: settings.model_bits,
        decoder,
        features,
        residual,
    })
}

/// Rebuilds the dequantized decoder.
pub fn decoder_of(c: &CompressedVideo) -> Result<Decoder<f32>> {
    let params = c
        .decoder
        .iter()
        .map(dequantize_tensor::<f32>)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Decoder::from_params(&c.model_config, &c.decoder_widths, params)?)
}

/// Reconstructs every frame in `[0, 1]` from the container alone.
pub fn decode(c: &CompressedVideo) -> Result<Vec<Tensor<f32>>> {
    let decoder = decoder_of(c)?;
    (0..c.frames())
        .map(|i| {
            let feature = dequantize_tensor::<f32>(&c.features[i])?;
            let out = decoder.forward(&feature)?;
            match &c.residual {
                None => Ok(residual::clamp_unit(&out)),
                Some(stream) => {
                    let base = residual::bicubic_upsample(&stream.frames[i].dequantize::<f32>(), (c.frame_h, c.frame_w))?;
                    Ok(residual::reconstruct(&base, &out)?)
                }
            }
        })
        .collect()
}
