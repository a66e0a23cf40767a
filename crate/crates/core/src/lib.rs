//! Reconstruction-based visual anomaly detection with variational autoencoders.
//!
//! Three model families share one training and scoring pipeline:
//!
//! * a convolutional β-VAE with a residual encoder,
//! * the same network with a stationary toroidal Gaussian random field prior
//!   over its convolutional latent grid ([`grf`]),
//! * a ViT-VAE whose per-token latents are decoded by transposed convolutions.
//!
//! Images are scored with a structural-similarity map from the reconstruction
//! and a latent alignment map from the posterior; the product of the two
//! (normalized) maps is evaluated with pixel-level ROCAUC.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the common instantiations.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod grf;
pub mod latent;
pub mod maps;
pub mod nn;
pub mod patch;
pub mod report;
pub mod scalar;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type VaeF32 = nn::Vae<f32>;
pub type VaeF64 = nn::Vae<f64>;
pub type ModelScorerF32<'a> = nn::ModelScorer<'a, f32>;

pub type LatentFieldF32 = latent::LatentField<f32>;
pub type LatentFieldF64 = latent::LatentField<f64>;
pub type GrfPriorF32 = grf::GrfPrior<f32>;
pub type GrfPriorF64 = grf::GrfPrior<f64>;
pub type PriorF32 = latent::Prior<f32>;
pub type PriorF64 = latent::Prior<f64>;
pub type AnomalyMapF32 = maps::AnomalyMap<f32>;
pub type AnomalyMapF64 = maps::AnomalyMap<f64>;
pub type ImageSampleF32 = data::ImageSample<f32>;
pub type ImageSampleF64 = data::ImageSample<f64>;
