//! Neural models: the residual-encoder VAE (optionally with a GRF prior) and
//! the ViT-VAE, on the candle CPU backend.

pub mod config;
pub mod conv;
pub mod layers;
pub mod loss;
pub mod vit;

use std::marker::PhantomData;
use std::sync::Arc;

use candle_core::{DType, Device, Module, Tensor, Var};
use candle_nn::{VarBuilder, VarMap};
use ndarray::{Array3, Array4, ArrayView4, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

pub use config::{Architecture, Backbone, ModelConfig, PriorSpec, ViTConfig};
pub use loss::PrecisionApply;

use crate::data::ImageSample;
use crate::error::{Error, Result};
use crate::eval::AnomalyScorer;
use crate::grf::GrfPrior;
use crate::latent::{LatentField, Prior};
use crate::maps::{fuse_maps, mad_map, ssm_map, AnomalyMap, SsmConfig};
use crate::Scalar;

use conv::{ConvDecoder, ConvEncoder};
use vit::{grid_to_tokens, tokens_to_grid, VitDecoder, VitEncoder};

const POS_EMBED_STD: f64 = 0.02;

// One per model, so the variant size gap does not matter.
#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug)]
enum Network {
    Conv {
        encoder: ConvEncoder,
        decoder: ConvDecoder,
    },
    Vit {
        encoder: VitEncoder,
        decoder: VitDecoder,
    },
}

/// Differentiable β-ELBO terms of one batch.
#[derive(Clone, Debug)]
pub struct ElboTerms {
    pub total: Tensor,
    pub reconstruction: Tensor,
    pub kl: Tensor,
}

/// A VAE with its parameters. Inference takes `&self` and does not mutate
/// the parameters, so a trained model can be shared across threads.
pub struct Vae<T: Scalar> {
    config: ModelConfig,
    seed: u64,
    varmap: VarMap,
    net: Network,
    prior: Prior<T>,
    precision: Option<PrecisionApply>,
    device: Device,
    _scalar: PhantomData<T>,
}

impl<T: Scalar> std::fmt::Debug for Vae<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Vae")
            .field("config", &self.config)
            .field("seed", &self.seed)
            .field("parameters", &self.parameter_count())
            .finish()
    }
}

impl<T: Scalar> Vae<T> {
    /// Builds the network and initializes every parameter from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let device = Device::Cpu;
        let varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, T::TENSOR_DTYPE, &device);
        let net = match config.architecture {
            Architecture::Vae | Architecture::VaeGrf => Network::Conv {
                encoder: ConvEncoder::new(&config, vb.pp("encoder"))?,
                decoder: ConvDecoder::new(&config, vb.pp("decoder"))?,
            },
            Architecture::VitVae => Network::Vit {
                encoder: VitEncoder::new(&config.vit, vb.pp("encoder"))?,
                decoder: VitDecoder::new(&config.vit, vb.pp("decoder"))?,
            },
        };
        let prior = config.prior::<T>()?;
        let precision = match &config.prior {
            PriorSpec::Grf(params) => Some(PrecisionApply::new(Arc::new(GrfPrior::<f64>::new(
                *params,
                (config.latent_spatial, config.latent_spatial),
            )?))),
            _ => None,
        };
        let model = Self {
            config,
            seed,
            varmap,
            net,
            prior,
            precision,
            device,
            _scalar: PhantomData,
        };
        model.initialize(seed)?;
        Ok(model)
    }

    fn initialize(&self, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, var) in self.named_vars() {
            let dims = var.dims().to_vec();
            let n: usize = dims.iter().product();
            let leaf = name.rsplit('.').next().unwrap_or("");
            let owner = name.rsplit('.').nth(1).unwrap_or("");
            let values: Vec<f64> = if leaf == "pos_embed" {
                let normal = Normal::new(0.0, POS_EMBED_STD).expect("valid std");
                (0..n).map(|_| normal.sample(&mut rng)).collect()
            } else if leaf == "bias" {
                vec![0.0; n]
            } else if owner.contains("norm") {
                vec![1.0; n]
            } else {
                let receptive: usize = dims.iter().skip(2).product();
                let fan_in: usize = dims.iter().skip(1).product();
                let fan_out = dims[0] * receptive;
                let bound = if dims.len() == 4 {
                    (6.0 / fan_in as f64).sqrt()
                } else {
                    (6.0 / (fan_in + fan_out) as f64).sqrt()
                };
                let uniform = Uniform::new_inclusive(-bound, bound).expect("valid bounds");
                (0..n).map(|_| uniform.sample(&mut rng)).collect()
            };
            let values = values.into_iter().map(T::of).collect();
            var.set(&T::tensor(values, dims, &self.device)?)?;
        }
        Ok(())
    }

    /// Parameters sorted by their stable name.
    pub fn named_vars(&self) -> Vec<(String, Var)> {
        let data = self.varmap.data().lock().expect("parameter map lock");
        let mut vars: Vec<_> = data.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        vars.sort_by(|a, b| a.0.cmp(&b.0));
        vars
    }

    pub fn vars(&self) -> Vec<Var> {
        self.named_vars().into_iter().map(|(_, v)| v).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.named_vars().iter().map(|(_, v)| v.elem_count()).sum()
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn architecture(&self) -> Architecture {
        self.config.architecture
    }

    pub fn prior(&self) -> &Prior<T> {
        &self.prior
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn dtype(&self) -> DType {
        T::TENSOR_DTYPE
    }

    pub fn image_size(&self) -> usize {
        self.config.image_size()
    }

    pub fn latent_shape(&self) -> (usize, usize, usize) {
        self.config.latent_shape()
    }

    pub fn vit_encoder(&self) -> Option<&VitEncoder> {
        match &self.net {
            Network::Vit { encoder, .. } => Some(encoder),
            Network::Conv { .. } => None,
        }
    }

    pub fn vit_decoder(&self) -> Option<&VitDecoder> {
        match &self.net {
            Network::Vit { decoder, .. } => Some(decoder),
            Network::Conv { .. } => None,
        }
    }

    /// Posterior `(mean, logvar)` tensors, `B × C × h × w`, logvar clamped.
    pub fn encode_tensor(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let s = self.image_size();
        match x.dims() {
            [_, 3, h, w] if *h == s && *w == s => {}
            dims => {
                return Err(Error::Shape(format!(
                    "model expects B×3×{s}×{s} input, got {dims:?}"
                )))
            }
        }
        let (mean, logvar) = match &self.net {
            Network::Conv { encoder, .. } => encoder.forward(x)?,
            Network::Vit { encoder, .. } => {
                let g = self.config.latent_spatial;
                let (m, l) = encoder.forward(x)?;
                (tokens_to_grid(&m, g)?, tokens_to_grid(&l, g)?)
            }
        };
        Ok((mean, loss::clamp_logvar_tensor(&logvar)?))
    }

    /// Reconstruction `B × 3 × H × W` in `[0, 1]` from latents `B × C × h × w`.
    pub fn decode_tensor(&self, z: &Tensor) -> Result<Tensor> {
        let (c, h, w) = self.latent_shape();
        match z.dims() {
            [_, zc, zh, zw] if (*zc, *zh, *zw) == (c, h, w) => {}
            dims => {
                return Err(Error::Shape(format!(
                    "model expects B×{c}×{h}×{w} latents, got {dims:?}"
                )))
            }
        }
        Ok(match &self.net {
            Network::Conv { decoder, .. } => decoder.forward(z)?,
            Network::Vit { decoder, .. } => decoder.forward(z)?,
        })
    }

    /// Per-token posterior `(mean, logvar)`, `B × T × d` (ViT-VAE only).
    pub fn encode_tokens(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        if self.vit_encoder().is_none() {
            return Err(Error::Parameter(
                "token latents exist only for the vit-vae".into(),
            ));
        }
        let (m, l) = self.encode_tensor(x)?;
        Ok((grid_to_tokens(&m)?, grid_to_tokens(&l)?))
    }

    /// β-ELBO of `x` given posterior tensors and standard-normal `noise` of the
    /// same shape.
    pub fn elbo_from_posterior(
        &self,
        x: &Tensor,
        mean: &Tensor,
        logvar: &Tensor,
        noise: &Tensor,
    ) -> Result<ElboTerms> {
        let z = (mean + (logvar * 0.5)?.exp()?.mul(noise)?)?;
        let x_hat = self.decode_tensor(&z)?;
        let reconstruction = loss::reconstruction_term(x, &x_hat)?;
        let kl = match &self.precision {
            Some(op) => loss::kl_grf_term(mean, logvar, op)?,
            None => loss::kl_standard_term(mean, logvar)?,
        };
        let total = (&reconstruction + (&kl * self.config.beta)?)?;
        Ok(ElboTerms {
            total,
            reconstruction,
            kl,
        })
    }

    pub fn elbo(&self, x: &Tensor, noise: &Tensor) -> Result<ElboTerms> {
        let (mean, logvar) = self.encode_tensor(x)?;
        self.elbo_from_posterior(x, &mean, &logvar, noise)
    }

    pub fn to_tensor(&self, pixels: &ArrayView4<T>) -> Result<Tensor> {
        let shape = pixels.dim();
        let values = pixels.iter().copied().collect();
        Ok(T::tensor(values, shape, &self.device)?)
    }

    fn to_array4(t: &Tensor) -> Result<Array4<T>> {
        let (b, c, h, w) = t.dims4()?;
        let values = T::tensor_values(t)?;
        Array4::from_shape_vec((b, c, h, w), values).map_err(|e| Error::Shape(e.to_string()))
    }

    /// One posterior per image.
    pub fn encode(&self, pixels: &ArrayView4<T>) -> Result<Vec<LatentField<T>>> {
        let (mean, logvar) = self.encode_tensor(&self.to_tensor(pixels)?)?;
        let mean = Self::to_array4(&mean)?;
        let logvar = Self::to_array4(&logvar)?;
        mean.axis_iter(Axis(0))
            .zip(logvar.axis_iter(Axis(0)))
            .map(|(m, l)| LatentField::new(m.to_owned(), l.to_owned()))
            .collect()
    }

    pub fn decode(&self, z: &ArrayView4<T>) -> Result<Array4<T>> {
        Self::to_array4(&self.decode_tensor(&self.to_tensor(z)?)?)
    }

    /// Posteriors and reconstructions from the posterior means.
    pub fn reconstruct(&self, pixels: &ArrayView4<T>) -> Result<(Vec<LatentField<T>>, Array4<T>)> {
        let (mean, logvar) = self.encode_tensor(&self.to_tensor(pixels)?)?;
        let recon = Self::to_array4(&self.decode_tensor(&mean)?)?;
        let mean = Self::to_array4(&mean)?;
        let logvar = Self::to_array4(&logvar)?;
        let latents = mean
            .axis_iter(Axis(0))
            .zip(logvar.axis_iter(Axis(0)))
            .map(|(m, l)| LatentField::new(m.to_owned(), l.to_owned()))
            .collect::<Result<Vec<_>>>()?;
        Ok((latents, recon))
    }

    /// Copies parameter values from `other`, which must share the layout.
    pub fn copy_parameters_from(&self, other: &Vae<T>) -> Result<()> {
        let mine = self.named_vars();
        let theirs = other.named_vars();
        if mine.len() != theirs.len() {
            return Err(Error::Checkpoint("parameter sets differ".into()));
        }
        for ((a, va), (b, vb)) in mine.iter().zip(&theirs) {
            if a != b || va.dims() != vb.dims() {
                return Err(Error::Checkpoint(format!(
                    "parameter {a} does not match {b}"
                )));
            }
            va.set(vb.as_tensor())?;
        }
        Ok(())
    }
}

/// Everything produced when scoring one image.
#[derive(Clone, Debug)]
pub struct ScoredImage<T> {
    pub latent: LatentField<T>,
    /// `3 × H × W`
    pub reconstruction: Array3<T>,
    pub ssm: AnomalyMap<T>,
    pub mad: AnomalyMap<T>,
    pub fused: AnomalyMap<T>,
}

/// Scores images with a trained model: SSM from the posterior-mean
/// reconstruction, MAD from the posterior, fused by product.
pub struct ModelScorer<'a, T: Scalar> {
    model: &'a Vae<T>,
    ssm: SsmConfig,
    id: String,
}

impl<'a, T: Scalar> ModelScorer<'a, T> {
    pub fn new(model: &'a Vae<T>) -> Self {
        Self {
            model,
            ssm: SsmConfig::default(),
            id: model.architecture().id().to_string(),
        }
    }

    pub fn with_ssm(mut self, ssm: SsmConfig) -> Result<Self> {
        ssm.validate()?;
        self.ssm = ssm;
        Ok(self)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// `pixels` is `3 × H × W` at the model's input size.
    pub fn score_pixels(&self, pixels: &Array3<T>) -> Result<ScoredImage<T>> {
        let (_, h, w) = pixels.dim();
        let batch = pixels.view().insert_axis(Axis(0));
        let (mut latents, recon) = self.model.reconstruct(&batch)?;
        let latent = latents.pop().expect("one latent per image");
        let reconstruction = recon.index_axis_move(Axis(0), 0);
        let ssm = ssm_map(pixels, &reconstruction, &self.ssm)?;
        let mad = mad_map(&latent, self.model.prior(), (h, w))?;
        let fused = fuse_maps(&ssm, &mad)?;
        Ok(ScoredImage {
            latent,
            reconstruction,
            ssm,
            mad,
            fused,
        })
    }
}

impl<T: Scalar> AnomalyScorer<T> for ModelScorer<'_, T> {
    fn model_id(&self) -> String {
        self.id.clone()
    }

    fn score(&self, sample: &ImageSample<T>) -> Result<AnomalyMap<T>> {
        Ok(self.score_pixels(&sample.pixels)?.fused)
    }
}
