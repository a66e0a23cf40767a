//! Gaussian latent posteriors and the pieces of the β-ELBO that act on them.

use ndarray::{Array3, ArrayView, Dimension, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grf::GrfPrior;
use crate::scalar::Scalar;

/// Encoder log-variances are clamped to `[-LOGVAR_CLAMP, LOGVAR_CLAMP]`
/// before exponentiation.
pub const LOGVAR_CLAMP: f64 = 10.0;

/// Per-location posterior `N(mean, exp(logvar))` over a `C × h × w` latent
/// grid. Token latents of the ViT model use the same type with
/// `C = embed_dim` and `h = w = token_grid`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentField<T> {
    mean: Array3<T>,
    logvar: Array3<T>,
}

impl<T: Scalar> LatentField<T> {
    pub fn new(mean: Array3<T>, logvar: Array3<T>) -> Result<Self> {
        if mean.dim() != logvar.dim() {
            return Err(Error::Shape(format!(
                "mean {:?} and logvar {:?} differ",
                mean.dim(),
                logvar.dim()
            )));
        }
        let finite = mean.iter().chain(logvar.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Numeric("latent field has non-finite entries".into()));
        }
        Ok(Self { mean, logvar })
    }

    pub fn zeros(channels: usize, h: usize, w: usize) -> Self {
        Self {
            mean: Array3::zeros((channels, h, w)),
            logvar: Array3::zeros((channels, h, w)),
        }
    }

    pub fn mean(&self) -> &Array3<T> {
        &self.mean
    }

    pub fn logvar(&self) -> &Array3<T> {
        &self.logvar
    }

    /// `(channels, h, w)`
    pub fn dim(&self) -> (usize, usize, usize) {
        self.mean.dim()
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Posterior standard deviation `exp(logvar / 2)`, with the log-variance clamp applied.
    pub fn std(&self) -> Array3<T> {
        self.logvar.mapv(|lv| (clamp_logvar(lv) / T::of(2.0)).exp())
    }

    pub fn into_parts(self) -> (Array3<T>, Array3<T>) {
        (self.mean, self.logvar)
    }
}

#[inline]
pub(crate) fn clamp_logvar<T: Scalar>(lv: T) -> T {
    let c = T::of(LOGVAR_CLAMP);
    lv.max(-c).min(c)
}

/// `z = mean + exp(logvar / 2) ⊙ noise`.
pub fn reparameterize<T: Scalar>(latent: &LatentField<T>, noise: &Array3<T>) -> Result<Array3<T>> {
    if noise.dim() != latent.dim() {
        return Err(Error::Shape(format!(
            "noise {:?} does not match latent {:?}",
            noise.dim(),
            latent.dim()
        )));
    }
    let half = T::of(0.5);
    Ok(Zip::from(&latent.mean)
        .and(&latent.logvar)
        .and(noise)
        .map_collect(|&m, &lv, &e| m + (clamp_logvar(lv) * half).exp() * e))
}

/// `KL(N(μ, σ²) ‖ N(0, 1))` summed over every latent entry.
pub fn kl_standard_normal<T: Scalar>(latent: &LatentField<T>) -> Result<T> {
    let half = T::of(0.5);
    let mut total = T::zero();
    for (&m, &lv) in latent.mean.iter().zip(latent.logvar.iter()) {
        if !(m.is_finite() && lv.is_finite()) {
            return Err(Error::Numeric("non-finite latent entry".into()));
        }
        let lv = clamp_logvar(lv);
        total = total + half * (m * m + lv.exp() - T::one() - lv);
    }
    Ok(total.max(T::zero()))
}

/// Sum of squared differences, divided by the batch size when the input is a
/// 4-D `B × C × H × W` batch. Unit-variance Gaussian NLL without its constant.
pub fn reconstruction_loss<T: Scalar, D: Dimension>(
    x: &ArrayView<T, D>,
    x_hat: &ArrayView<T, D>,
) -> Result<T> {
    if x.shape() != x_hat.shape() {
        return Err(Error::Shape(format!(
            "input {:?} and reconstruction {:?} differ",
            x.shape(),
            x_hat.shape()
        )));
    }
    let sum = Zip::from(x).and(x_hat).fold(T::zero(), |acc, &a, &b| {
        let d = a - b;
        acc + d * d
    });
    let batch = if x.ndim() == 4 {
        x.shape()[0].max(1)
    } else {
        1
    };
    Ok(sum / T::of(batch as f64))
}

/// Latent prior used by the KL term and by the latent anomaly map.
#[derive(Clone, Debug)]
pub enum Prior<T> {
    StandardNormal,
    Grf(GrfPrior<T>),
}

impl<T: Scalar> Prior<T> {
    pub fn kl(&self, latent: &LatentField<T>) -> Result<T> {
        match self {
            Prior::StandardNormal => kl_standard_normal(latent),
            Prior::Grf(p) => crate::grf::kl_grf(latent, p),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Prior::StandardNormal => "standard_normal",
            Prior::Grf(_) => "grf",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub reconstruction: f64,
    pub kl: f64,
    pub beta: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(reconstruction: f64, kl: f64, beta: f64) -> Self {
        Self {
            reconstruction,
            kl,
            beta,
            total: reconstruction + beta * kl,
        }
    }
}

/// β-ELBO on a batch: reconstruction and KL are both averaged over the batch.
/// `latents` holds one posterior per batch element.
pub fn elbo_loss<T: Scalar>(
    x: &ArrayView<T, ndarray::Ix4>,
    x_hat: &ArrayView<T, ndarray::Ix4>,
    latents: &[LatentField<T>],
    beta: f64,
    prior: &Prior<T>,
) -> Result<LossBreakdown> {
    if beta < 0.0 || !beta.is_finite() {
        return Err(Error::Parameter(format!(
            "beta must be a finite nonnegative number, got {beta}"
        )));
    }
    let batch = x.shape()[0];
    if latents.len() != batch {
        return Err(Error::Shape(format!(
            "{} latents for a batch of {batch}",
            latents.len()
        )));
    }
    let reconstruction = reconstruction_loss(x, x_hat)?.f64();
    let mut kl = 0.0;
    for latent in latents {
        kl += prior.kl(latent)?.f64();
    }
    kl /= batch.max(1) as f64;
    Ok(LossBreakdown::new(reconstruction, kl, beta))
}
