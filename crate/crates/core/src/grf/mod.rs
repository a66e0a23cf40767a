//! Zero-mean stationary Gaussian random field prior on a toroidal latent lattice.
//!
//! The covariance of a stationary field on a torus is block-circulant with
//! circulant blocks, so the 2-D DFT diagonalizes it. The eigenvalues (the
//! spectrum) are the DFT of the correlation kernel, and every quantity the
//! prior needs (KL divergence, sampling, whitening) reduces to pointwise
//! operations in the frequency domain.
//!
//! DFT convention: unnormalized forward transform, `1/N` on the inverse.

mod fft;
pub mod special;

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{clamp_logvar, LatentField};
use crate::scalar::Scalar;

pub(crate) use fft::spectral_filter;

/// Spectrum entries are clamped from below to this value.
pub const SPECTRUM_FLOOR: f64 = 1e-8;

/// Largest lattice the dense covariance oracle will build.
pub const DENSE_ORACLE_MAX_SITES: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    Identity,
    Exponential,
    Matern,
}

impl std::fmt::Display for CorrelationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CorrelationKind::Identity => "identity",
            CorrelationKind::Exponential => "exponential",
            CorrelationKind::Matern => "matern",
        })
    }
}

/// The scalar hyperparameters of the prior; the lattice comes from the model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrfParams {
    pub kind: CorrelationKind,
    /// Correlation range in lattice units.
    pub range: f64,
    pub variance: f64,
    /// Matérn order ν; ignored by the other kinds.
    #[serde(default = "default_smoothness")]
    pub smoothness: f64,
}

fn default_smoothness() -> f64 {
    1.5
}

impl Default for GrfParams {
    fn default() -> Self {
        Self {
            kind: CorrelationKind::Identity,
            range: 1.0,
            variance: 1.0,
            smoothness: default_smoothness(),
        }
    }
}

impl GrfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.range > 0.0 && self.range.is_finite()) {
            return Err(Error::Parameter(format!(
                "range must be positive, got {}",
                self.range
            )));
        }
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(Error::Parameter(format!(
                "variance must be positive, got {}",
                self.variance
            )));
        }
        if self.kind == CorrelationKind::Matern
            && !(self.smoothness > 0.0 && self.smoothness.is_finite())
        {
            return Err(Error::Parameter(format!(
                "Matérn smoothness must be positive, got {}",
                self.smoothness
            )));
        }
        Ok(())
    }
}

/// Matérn correlation at distance `d`, scaled so that ν = ½ is `exp(-d/range)`.
pub fn matern_correlation(d: f64, range: f64, nu: f64) -> f64 {
    let r = d / range;
    if r == 0.0 {
        return 1.0;
    }
    if nu == 0.5 {
        (-r).exp()
    } else if nu == 1.5 {
        let a = 3f64.sqrt() * r;
        (1.0 + a) * (-a).exp()
    } else if nu == 2.5 {
        let a = 5f64.sqrt() * r;
        (1.0 + a + a * a / 3.0) * (-a).exp()
    } else {
        let x = (2.0 * nu).sqrt() * r;
        if x > 700.0 {
            return 0.0;
        }
        let log_coef = (1.0 - nu) * std::f64::consts::LN_2 - special::ln_gamma(nu);
        (log_coef + nu * x.ln()).exp() * special::bessel_k(nu, x)
    }
}

/// Toroidal distance between lattice offset `(u, v)` and the origin.
pub fn toroidal_distance(u: usize, v: usize, lattice: (usize, usize)) -> f64 {
    let (h, w) = lattice;
    let du = u.min(h - u) as f64;
    let dv = v.min(w - v) as f64;
    (du * du + dv * dv).sqrt()
}

/// Covariance between the origin and every lattice site.
pub fn correlation_kernel<T: Scalar>(
    params: &GrfParams,
    lattice: (usize, usize),
) -> Result<Array2<T>> {
    params.validate()?;
    let (h, w) = lattice;
    if h == 0 || w == 0 {
        return Err(Error::Parameter(format!("empty lattice {h}×{w}")));
    }
    Ok(Array2::from_shape_fn((h, w), |(u, v)| {
        let d = toroidal_distance(u, v, lattice);
        let rho = match params.kind {
            CorrelationKind::Identity => {
                if d == 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            CorrelationKind::Exponential => (-d / params.range).exp(),
            CorrelationKind::Matern => matern_correlation(d, params.range, params.smoothness),
        };
        T::of(params.variance * rho)
    }))
}

#[derive(Clone, Debug)]
pub struct SpectralDensity<T> {
    pub values: Array2<T>,
    /// Number of entries raised to [`SPECTRUM_FLOOR`].
    pub clamped: usize,
}

/// Eigenvalues of the circulant covariance generated by `kernel`: the real part
/// of its 2-D DFT, floored at [`SPECTRUM_FLOOR`].
pub fn spectral_density<T: Scalar>(kernel: &Array2<T>) -> Result<SpectralDensity<T>> {
    let (h, w) = kernel.dim();
    let flat: Vec<T> = kernel.iter().copied().collect();
    let mut buf = fft::to_complex(&flat);
    fft::fft2(&mut buf, h, w, false);

    let l1: f64 = flat.iter().map(|v| v.f64().abs()).sum();
    let tol = 1e-6f64.max(100.0 * T::epsilon().f64()) * l1.max(1.0);
    let residue = buf.iter().map(|c| c.im.f64().abs()).fold(0.0, f64::max);
    if residue > tol {
        return Err(Error::Symmetry { residue });
    }
    let floor = T::of(SPECTRUM_FLOOR);
    let mut clamped = 0;
    let values = Array2::from_shape_vec(
        (h, w),
        buf.iter()
            .map(|c| {
                if c.re < floor {
                    clamped += 1;
                    floor
                } else {
                    c.re
                }
            })
            .collect(),
    )
    .expect("shape preserved");
    Ok(SpectralDensity { values, clamped })
}

/// A GRF prior bound to a lattice, with its spectrum cached.
#[derive(Clone, Debug)]
pub struct GrfPrior<T> {
    params: GrfParams,
    lattice: (usize, usize),
    kernel: Array2<T>,
    spectrum: Array2<T>,
    clamped: usize,
    inverse_mean: T,
    log_det: T,
}

impl<T: Scalar> GrfPrior<T> {
    pub fn new(params: GrfParams, lattice: (usize, usize)) -> Result<Self> {
        let kernel = correlation_kernel::<T>(&params, lattice)?;
        let SpectralDensity { values, clamped } = spectral_density(&kernel)?;
        let n = T::of(values.len() as f64);
        let inverse_mean = values.iter().map(|&s| T::one() / s).sum::<T>() / n;
        let log_det = values.iter().map(|&s| s.ln()).sum::<T>();
        Ok(Self {
            params,
            lattice,
            kernel,
            spectrum: values,
            clamped,
            inverse_mean,
            log_det,
        })
    }

    pub fn params(&self) -> &GrfParams {
        &self.params
    }

    pub fn kind(&self) -> CorrelationKind {
        self.params.kind
    }

    pub fn lattice(&self) -> (usize, usize) {
        self.lattice
    }

    pub fn sites(&self) -> usize {
        self.lattice.0 * self.lattice.1
    }

    pub fn kernel(&self) -> &Array2<T> {
        &self.kernel
    }

    pub fn spectrum(&self) -> &Array2<T> {
        &self.spectrum
    }

    pub fn clamped(&self) -> usize {
        self.clamped
    }

    /// `(1/N) Σₖ 1/sₖ`, the constant diagonal of the precision matrix.
    pub fn inverse_mean(&self) -> T {
        self.inverse_mean
    }

    /// `ln det Σ = Σₖ ln sₖ`.
    pub fn log_det(&self) -> T {
        self.log_det
    }

    /// `Σ⁻¹ f` for a row-major field `f` on the lattice.
    pub fn apply_precision(&self, field: &[T]) -> Vec<T> {
        let gain = self.spectrum.mapv(|s| T::one() / s);
        spectral_filter(field, &gain).0
    }

    /// `Σ^{-1/2} f`, the prior-whitened field.
    pub fn whiten(&self, field: &[T]) -> Vec<T> {
        let gain = self.spectrum.mapv(|s| T::one() / s.sqrt());
        spectral_filter(field, &gain).0
    }

    /// Same prior with the spectrum converted to another scalar type.
    pub fn cast<U: Scalar>(&self) -> GrfPrior<U> {
        GrfPrior {
            params: self.params,
            lattice: self.lattice,
            kernel: self.kernel.mapv(|v| U::of(v.f64())),
            spectrum: self.spectrum.mapv(|v| U::of(v.f64())),
            clamped: self.clamped,
            inverse_mean: U::of(self.inverse_mean.f64()),
            log_det: U::of(self.log_det.f64()),
        }
    }
}

fn check_lattice<T: Scalar>(latent: &LatentField<T>, prior: &GrfPrior<T>) -> Result<()> {
    let (_, h, w) = latent.dim();
    if (h, w) != prior.lattice {
        return Err(Error::PriorMismatch(format!(
            "latent grid {h}×{w} vs prior lattice {}×{}",
            prior.lattice.0, prior.lattice.1
        )));
    }
    Ok(())
}

/// `KL(N(μ, diag σ²) ‖ N(0, Σ))` summed over latent channels, with the
/// circulant `Σ` of `prior`:
///
/// `½ [ S̄⁻¹ Σᵢ σᵢ² + (1/N) Σₖ |μ̂ₖ|² / sₖ − N − Σᵢ ln σᵢ² + Σₖ ln sₖ ]`
///
/// where `S̄⁻¹ = (1/N) Σₖ 1/sₖ`. Costs `O(N log N)` per channel.
pub fn kl_grf<T: Scalar>(latent: &LatentField<T>, prior: &GrfPrior<T>) -> Result<T> {
    check_lattice(latent, prior)?;
    let (channels, h, w) = latent.dim();
    let n = T::of((h * w) as f64);
    let half = T::of(0.5);
    let mut total = T::zero();
    for c in 0..channels {
        let mean = latent.mean().index_axis(Axis(0), c);
        let logvar = latent.logvar().index_axis(Axis(0), c);
        if mean.iter().chain(logvar.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite latent entry".into()));
        }
        let mut buf: Vec<Complex<T>> = mean.iter().map(|&m| Complex::new(m, T::zero())).collect();
        fft::fft2(&mut buf, h, w, false);
        let quad = buf
            .iter()
            .zip(prior.spectrum.iter())
            .map(|(c, &s)| c.norm_sqr() / s)
            .sum::<T>()
            / n;
        let mut var_sum = T::zero();
        let mut logvar_sum = T::zero();
        for &lv in logvar.iter() {
            let lv = clamp_logvar(lv);
            var_sum = var_sum + lv.exp();
            logvar_sum = logvar_sum + lv;
        }
        total =
            total + half * (prior.inverse_mean * var_sum + quad - n - logvar_sum + prior.log_det);
    }
    Ok(total)
}

/// Per-location posterior marginals after whitening by the prior:
/// `μ̃ = Σ^{-1/2} μ` (per channel) and `σ̃² = σ² · S̄⁻¹`. Returns
/// `(whitened mean, whitened variance)` with the latent's shape.
pub fn whiten_posterior<T: Scalar>(
    latent: &LatentField<T>,
    prior: &GrfPrior<T>,
) -> Result<(ndarray::Array3<T>, ndarray::Array3<T>)> {
    check_lattice(latent, prior)?;
    let (channels, h, w) = latent.dim();
    let mut mean = ndarray::Array3::zeros((channels, h, w));
    for c in 0..channels {
        let src: Vec<T> = latent
            .mean()
            .index_axis(Axis(0), c)
            .iter()
            .copied()
            .collect();
        let white = prior.whiten(&src);
        for (dst, v) in mean.index_axis_mut(Axis(0), c).iter_mut().zip(white) {
            *dst = v;
        }
    }
    let var = latent
        .logvar()
        .mapv(|lv| clamp_logvar(lv).exp() * prior.inverse_mean);
    Ok((mean, var))
}

/// Draws a field with covariance `Σ` from real white noise:
/// `Re(IDFT(√s ⊙ ξ))` with `ξ = DFT(white)`, which is complex white noise with
/// Hermitian symmetry. Returns the field and the discarded imaginary residue.
pub fn sample_grf_from_noise<T: Scalar>(
    prior: &GrfPrior<T>,
    white: &Array2<T>,
) -> Result<(Array2<T>, T)> {
    if white.dim() != prior.lattice {
        return Err(Error::Shape(format!(
            "noise {:?} does not match lattice {:?}",
            white.dim(),
            prior.lattice
        )));
    }
    let gain = prior.spectrum.mapv(|s| s.sqrt());
    let flat: Vec<T> = white.iter().copied().collect();
    let (field, residue) = spectral_filter(&flat, &gain);
    Ok((
        Array2::from_shape_vec(prior.lattice, field).expect("lattice shape"),
        residue,
    ))
}

pub fn sample_grf<T: Scalar, R: Rng + ?Sized>(prior: &GrfPrior<T>, rng: &mut R) -> Array2<T> {
    let white = Array2::from_shape_fn(prior.lattice, |_| {
        let e: f64 = StandardNormal.sample(rng);
        T::of(e)
    });
    sample_grf_from_noise(prior, &white)
        .expect("noise drawn on the prior lattice")
        .0
}

/// Dense `N × N` covariance `Σ[(u,v),(u',v')] = kernel[(u−u') mod h, (v−v') mod w]`.
/// Test oracle; refuses lattices above [`DENSE_ORACLE_MAX_SITES`] sites.
pub fn dense_covariance<T: Scalar>(prior: &GrfPrior<T>) -> Result<Array2<T>> {
    let (h, w) = prior.lattice;
    let n = h * w;
    if n > DENSE_ORACLE_MAX_SITES {
        return Err(Error::OracleTooLarge { n });
    }
    Ok(Array2::from_shape_fn((n, n), |(a, b)| {
        let (u, v) = (a / w, a % w);
        let (u2, v2) = (b / w, b % w);
        prior.kernel[[(u + h - u2) % h, (v + w - v2) % w]]
    }))
}
