use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grf::{GrfParams, GrfPrior};
use crate::latent::Prior;
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Vae,
    #[serde(alias = "vae_grf")]
    VaeGrf,
    #[serde(alias = "vit_vae")]
    VitVae,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [
        Architecture::Vae,
        Architecture::VaeGrf,
        Architecture::VitVae,
    ];

    /// Identifier used in reports and on the command line.
    pub fn id(self) -> &'static str {
        match self {
            Architecture::Vae => "vae",
            Architecture::VaeGrf => "vae-grf",
            Architecture::VitVae => "vit-vae",
        }
    }

    pub fn is_conv(self) -> bool {
        !matches!(self, Architecture::VitVae)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "vae" => Ok(Architecture::Vae),
            "vae-grf" => Ok(Architecture::VaeGrf),
            "vit-vae" => Ok(Architecture::VitVae),
            other => Err(Error::Parameter(format!(
                "unknown architecture `{other}` (expected vae, vae-grf or vit-vae)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    #[default]
    Resnet18Style,
}

/// Latent prior selection stored in the model config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PriorSpec {
    StandardNormal,
    Grf(GrfParams),
    PerTokenStandardNormal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViTConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: f64,
}

impl Default for ViTConfig {
    fn default() -> Self {
        Self {
            image_size: 224,
            patch_size: 16,
            embed_dim: 384,
            depth: 6,
            heads: 6,
            mlp_ratio: 4.0,
        }
    }
}

impl ViTConfig {
    pub fn token_grid(&self) -> usize {
        self.image_size / self.patch_size.max(1)
    }

    pub fn tokens(&self) -> usize {
        self.token_grid() * self.token_grid()
    }

    pub fn patch_dim(&self) -> usize {
        3 * self.patch_size * self.patch_size
    }

    pub fn mlp_hidden(&self) -> usize {
        (self.embed_dim as f64 * self.mlp_ratio).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        if self.patch_size == 0
            || self.image_size == 0
            || !self.image_size.is_multiple_of(self.patch_size)
        {
            return bad(format!(
                "vit.image_size {} must be a positive multiple of vit.patch_size {}",
                self.image_size, self.patch_size
            ));
        }
        if !self.patch_size.is_power_of_two() || self.patch_size < 2 {
            return bad(format!(
                "vit.patch_size {} must be a power of two of at least 2",
                self.patch_size
            ));
        }
        if self.heads == 0 || self.embed_dim == 0 || !self.embed_dim.is_multiple_of(self.heads) {
            return bad(format!(
                "vit.embed_dim {} must be a positive multiple of vit.heads {}",
                self.embed_dim, self.heads
            ));
        }
        if !(self.mlp_ratio.is_finite() && self.mlp_ratio > 0.0) || self.mlp_hidden() == 0 {
            return bad(format!("vit.mlp_ratio {} must be positive", self.mlp_ratio));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub z_channels: usize,
    /// Side of the square latent grid.
    pub latent_spatial: usize,
    pub beta: f64,
    pub input_size: usize,
    pub backbone: Backbone,
    /// Channel width of the first residual stage (doubles per stage).
    pub base_width: usize,
    pub prior: PriorSpec,
    pub vit: ViTConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::for_architecture(Architecture::Vae)
    }
}

impl ModelConfig {
    /// Full-scale defaults: conv models take 256×256 input onto a 256×32×32
    /// latent; the ViT-VAE takes 224×224 onto 384 channels over 14×14 tokens.
    pub fn for_architecture(architecture: Architecture) -> Self {
        let vit = ViTConfig::default();
        match architecture {
            Architecture::Vae | Architecture::VaeGrf => Self {
                architecture,
                z_channels: 256,
                latent_spatial: 32,
                beta: 1.0,
                input_size: 256,
                backbone: Backbone::Resnet18Style,
                base_width: 64,
                prior: if architecture == Architecture::Vae {
                    PriorSpec::StandardNormal
                } else {
                    PriorSpec::Grf(GrfParams::default())
                },
                vit,
            },
            Architecture::VitVae => Self {
                architecture,
                z_channels: vit.embed_dim,
                latent_spatial: vit.token_grid(),
                beta: 1.0,
                input_size: vit.image_size,
                backbone: Backbone::Resnet18Style,
                base_width: 64,
                prior: PriorSpec::PerTokenStandardNormal,
                vit,
            },
        }
    }

    /// CPU-scale preset on 64×64 images: an 8×8 latent grid with 16 channels,
    /// stage widths 8..64, and a 2-block ViT with 8-pixel patches. The GRF
    /// variant uses an exponential kernel of range 1.
    pub fn smoke(architecture: Architecture) -> Self {
        let mut cfg = Self::for_architecture(architecture);
        cfg.input_size = 64;
        cfg.latent_spatial = 8;
        cfg.z_channels = 16;
        cfg.base_width = 8;
        if architecture == Architecture::VaeGrf {
            cfg.prior = PriorSpec::Grf(GrfParams {
                kind: crate::grf::CorrelationKind::Exponential,
                range: 1.0,
                variance: 1.0,
                smoothness: 1.5,
            });
        }
        cfg.vit = ViTConfig {
            image_size: 64,
            patch_size: 8,
            embed_dim: 64,
            depth: 2,
            heads: 4,
            mlp_ratio: 2.0,
        };
        cfg.sync_vit();
        cfg
    }

    /// Makes the latent and input fields agree with `vit` for the ViT-VAE.
    pub fn sync_vit(&mut self) {
        if self.architecture == Architecture::VitVae {
            self.z_channels = self.vit.embed_dim;
            self.latent_spatial = self.vit.token_grid();
            self.input_size = self.vit.image_size;
        }
    }

    /// Number of ×2 resolution steps between image and latent grid.
    pub fn downsampling_steps(&self) -> usize {
        match self.architecture {
            Architecture::VitVae => self.vit.patch_size.trailing_zeros() as usize,
            _ => (self.input_size / self.latent_spatial.max(1)).trailing_zeros() as usize,
        }
    }

    pub fn image_size(&self) -> usize {
        match self.architecture {
            Architecture::VitVae => self.vit.image_size,
            _ => self.input_size,
        }
    }

    /// `(channels, h, w)` of one posterior.
    pub fn latent_shape(&self) -> (usize, usize, usize) {
        (self.z_channels, self.latent_spatial, self.latent_spatial)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        if self.z_channels == 0 {
            return bad("z_channels must be at least 1".into());
        }
        if self.latent_spatial == 0 {
            return bad("latent_spatial must be at least 1".into());
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad(format!(
                "beta must be finite and nonnegative, got {}",
                self.beta
            ));
        }
        match (self.architecture, &self.prior) {
            (Architecture::Vae, PriorSpec::StandardNormal) => {}
            (Architecture::VaeGrf, PriorSpec::Grf(p)) => p.validate()?,
            (Architecture::VitVae, PriorSpec::PerTokenStandardNormal) => {}
            (arch, prior) => {
                return bad(format!(
                    "prior {prior:?} does not belong to architecture {arch}"
                ));
            }
        }
        if self.architecture == Architecture::VitVae {
            self.vit.validate()?;
            if self.z_channels != self.vit.embed_dim
                || self.latent_spatial != self.vit.token_grid()
                || self.input_size != self.vit.image_size
            {
                return bad(format!(
                    "vit-vae latent {}×{}² and input {} must equal vit.embed_dim {}, vit token grid {} and vit.image_size {}",
                    self.z_channels,
                    self.latent_spatial,
                    self.input_size,
                    self.vit.embed_dim,
                    self.vit.token_grid(),
                    self.vit.image_size
                ));
            }
        } else {
            if self.base_width == 0 {
                return bad("base_width must be at least 1".into());
            }
            let ratio = self.input_size / self.latent_spatial;
            if !self.input_size.is_multiple_of(self.latent_spatial)
                || !ratio.is_power_of_two()
                || ratio > 32
            {
                return bad(format!(
                    "input_size {} must be latent_spatial {} times a power of two no larger than 32",
                    self.input_size, self.latent_spatial
                ));
            }
        }
        Ok(())
    }

    pub fn prior<T: Scalar>(&self) -> Result<Prior<T>> {
        match &self.prior {
            PriorSpec::Grf(params) => Ok(Prior::Grf(GrfPrior::new(
                *params,
                (self.latent_spatial, self.latent_spatial),
            )?)),
            PriorSpec::StandardNormal | PriorSpec::PerTokenStandardNormal => {
                Ok(Prior::StandardNormal)
            }
        }
    }
}
