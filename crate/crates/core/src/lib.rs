//! Residual implicit neural representation (INR) video codec.
//!
//! A per-frame encoder produces a tiny feature map; a shared convolutional
//! decoder regenerates the frame from it. The residual variant additionally
//! stores an 8-bit low-resolution copy of every frame, bicubically upsamples
//! it at decode time and adds the decoder output on top, so the network only
//! has to learn the missing high-frequency detail.
//!
//! Modules:
//! - [`tensor`]: reverse-mode autodiff over 4-D tensors, conv2d, pixel shuffle, Adam
//! - [`model`]: encoder/decoder architecture, width search, checkpoints
//! - [`residual`]: downsampling, 8-bit low-res stream, bicubic upsampling, bpp accounting
//! - [`quant`]: affine min-max quantization and the compressed container
//! - [`codec`]: model -> container -> frames
//! - [`metrics`]: PSNR and MS-SSIM
//! - [`video`]: frame sequences, PPM / raw I/O, synthetic sequences
//! - [`train`]: the per-video overfitting loop
//! - [`gradcheck`]: finite-difference gradient verification

pub mod codec;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod par;
pub mod quant;
pub mod residual;
mod scalar;
pub mod tensor;
pub mod train;
pub mod video;

pub use scalar::Scalar;
pub use tensor::{backward, Tensor};
