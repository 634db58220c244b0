//! Inverse tone mapping through Reinhard-targeted LDR learning.
//!
//! A CNN maps camera LDR images onto the images Reinhard's global operator
//! would have produced; the operator's closed-form inverse, together with
//! recovery of the log-average luminance, then yields HDR radiance with
//! absolute scale.
//!
//! Images, tensors and the network are generic over [`Scalar`] (`f32` or
//! `f64`); the aliases below fix the common choices.

pub mod camera;
pub mod dataset;
pub mod error;
pub mod image;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod reinhard;
pub mod rng;
pub mod scalar;
pub mod synth;
pub mod unet;

pub use error::{CodecError, Error, Result};
pub use image::{geometric_mean, luminance, rescale_colors, ColorImage, LdrImage, LumaMap, RadianceMap, Rgb};
pub use reinhard::{inverse_tonemap, recover_g, tonemap_forward, ToneParams, ZeroPartition};
pub use scalar::Scalar;
pub use unet::{UNet, UNetConfig};

pub type RadianceMapF32 = RadianceMap<f32>;
pub type RadianceMapF64 = RadianceMap<f64>;
pub type LdrImageF32 = LdrImage<f32>;
pub type LdrImageF64 = LdrImage<f64>;
pub type LumaMapF64 = LumaMap<f64>;
pub type TensorF32 = nn::Tensor<f32>;
pub type TensorF64 = nn::Tensor<f64>;
/// Network used for training and prediction.
pub type UNetF32 = UNet<f32>;
pub type UNetF64 = UNet<f64>;
