//! Per-pixel anomaly maps: SSM from the reconstruction, MAD from the latent
//! posterior, and their product.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use image::{GrayImage, Luma};
use ndarray::{Array2, Array3, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grf::whiten_posterior;
use crate::latent::{clamp_logvar, LatentField, Prior};
use crate::scalar::Scalar;

/// Magic bytes of the raw float map format: `AMF1`, then `H` and `W` as
/// little-endian `u32`, then `H·W` little-endian `f32` scores in row-major order.
pub const F32_MAP_MAGIC: [u8; 4] = *b"AMF1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapSource {
    Ssm,
    Mad,
    Fused,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Normalization {
    Raw,
    /// Min-max scaled using the recorded extremes; constant maps become zeros.
    MinMax {
        min: f64,
        max: f64,
    },
    /// Product of min-max normalized maps.
    Product,
}

/// Scores with "higher = more anomalous".
#[derive(Clone, Debug, PartialEq)]
pub struct AnomalyMap<T> {
    pub scores: Array2<T>,
    pub normalization: Normalization,
    pub source: MapSource,
}

impl<T: Scalar> AnomalyMap<T> {
    pub fn raw(scores: Array2<T>, source: MapSource) -> Self {
        Self {
            scores,
            normalization: Normalization::Raw,
            source,
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.scores.dim()
    }

    /// Min-max scaled copy; a constant map normalizes to all zeros.
    pub fn normalized(&self) -> Self {
        let (min, max) = self
            .scores
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let span = max - min;
        let scores = if span > T::zero() && span.is_finite() {
            self.scores.mapv(|v| (v - min) / span)
        } else {
            Array2::zeros(self.scores.dim())
        };
        Self {
            scores,
            normalization: Normalization::MinMax {
                min: min.f64(),
                max: max.f64(),
            },
            source: self.source,
        }
    }

    pub fn mean(&self) -> T {
        self.scores.mean().unwrap_or_else(T::zero)
    }

    /// 8-bit grayscale image of `clamp(score, 0, 1) · 255`, rounded.
    pub fn to_gray_image(&self) -> GrayImage {
        let (h, w) = self.dim();
        GrayImage::from_fn(w as u32, h as u32, |x, y| {
            let v = self.scores[[y as usize, x as usize]].f64().clamp(0.0, 1.0);
            Luma([(v * 255.0).round() as u8])
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_gray_image().save(path).map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn save_f32(&self, path: &Path) -> Result<()> {
        let (h, w) = self.dim();
        let mut buf = Vec::with_capacity(12 + 4 * h * w);
        buf.extend_from_slice(&F32_MAP_MAGIC);
        buf.extend_from_slice(&(h as u32).to_le_bytes());
        buf.extend_from_slice(&(w as u32).to_le_bytes());
        for &v in self.scores.iter() {
            buf.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }
}

/// Reads a map written by [`AnomalyMap::save_f32`].
pub fn read_f32_map(path: &Path) -> Result<Array2<f32>> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    let bad = |reason: &str| Error::Decode {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if buf.len() < 12 || buf[..4] != F32_MAP_MAGIC {
        return Err(bad("missing AMF1 header"));
    }
    let h = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    if buf.len() != 12 + 4 * h * w {
        return Err(bad("payload length does not match header"));
    }
    let values = buf[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((h, w), values).map_err(|e| bad(&e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsmConfig {
    pub window: usize,
    pub gaussian_sigma: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for SsmConfig {
    fn default() -> Self {
        Self {
            window: 11,
            gaussian_sigma: 1.5,
            c1: 0.01f64.powi(2),
            c2: 0.03f64.powi(2),
        }
    }
}

impl SsmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::Parameter(format!(
                "SSIM window must be odd and at least 3, got {}",
                self.window
            )));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0 && self.gaussian_sigma > 0.0) {
            return Err(Error::Parameter(
                "SSIM constants and sigma must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn taps(&self) -> Vec<f64> {
        let r = (self.window / 2) as i64;
        let two_s2 = 2.0 * self.gaussian_sigma * self.gaussian_sigma;
        let raw: Vec<f64> = (-r..=r)
            .map(|k| (-((k * k) as f64) / two_s2).exp())
            .collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / sum).collect()
    }
}

/// Whole-sample symmetric reflection (`d c b | a b c d | c b a`).
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

fn gaussian_filter<T: Scalar>(img: &Array2<T>, taps: &[T]) -> Array2<T> {
    let (h, w) = img.dim();
    let r = (taps.len() / 2) as isize;
    let mut tmp = Array2::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            let mut acc = T::zero();
            for (k, &t) in taps.iter().enumerate() {
                let jj = reflect_index(j as isize + k as isize - r, w);
                acc = acc + t * img[[i, jj]];
            }
            tmp[[i, j]] = acc;
        }
    }
    let mut out = Array2::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            let mut acc = T::zero();
            for (k, &t) in taps.iter().enumerate() {
                let ii = reflect_index(i as isize + k as isize - r, h);
                acc = acc + t * tmp[[ii, j]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

/// Per-pixel SSIM between two single-channel images.
pub fn ssim_channel<T: Scalar>(x: &Array2<T>, y: &Array2<T>, cfg: &SsmConfig) -> Array2<T> {
    let taps: Vec<T> = cfg.taps().into_iter().map(T::of).collect();
    let mu_x = gaussian_filter(x, &taps);
    let mu_y = gaussian_filter(y, &taps);
    let xx = gaussian_filter(&(x * x), &taps);
    let yy = gaussian_filter(&(y * y), &taps);
    let xy = gaussian_filter(&(x * y), &taps);
    let (c1, c2) = (T::of(cfg.c1), T::of(cfg.c2));
    let two = T::of(2.0);
    let mut out = Array2::zeros(x.dim());
    Zip::from(&mut out)
        .and(&mu_x)
        .and(&mu_y)
        .and(&xx)
        .and(&yy)
        .and(&xy)
        .for_each(|o, &mx, &my, &sxx, &syy, &sxy| {
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cov = sxy - mx * my;
            *o = ((two * mx * my + c1) * (two * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
        });
    out
}

/// SSIM averaged over channels, for `C × H × W` images.
pub fn ssim_image<T: Scalar>(
    x: &Array3<T>,
    x_hat: &Array3<T>,
    cfg: &SsmConfig,
) -> Result<Array2<T>> {
    cfg.validate()?;
    if x.dim() != x_hat.dim() {
        return Err(Error::Shape(format!(
            "image {:?} and reconstruction {:?} differ",
            x.dim(),
            x_hat.dim()
        )));
    }
    let (c, h, w) = x.dim();
    let mut acc = Array2::<T>::zeros((h, w));
    for ch in 0..c {
        let a = x.index_axis(Axis(0), ch).to_owned();
        let b = x_hat.index_axis(Axis(0), ch).to_owned();
        acc = acc + ssim_channel(&a, &b, cfg);
    }
    Ok(acc / T::of(c.max(1) as f64))
}

/// Structural-similarity anomaly map `clamp(1 − SSIM, 0, 1)`.
pub fn ssm_map<T: Scalar>(
    x: &Array3<T>,
    x_hat: &Array3<T>,
    cfg: &SsmConfig,
) -> Result<AnomalyMap<T>> {
    let ssim = ssim_image(x, x_hat, cfg)?;
    Ok(AnomalyMap::raw(
        ssim.mapv(|s| (T::one() - s).max(T::zero()).min(T::one())),
        MapSource::Ssm,
    ))
}

/// Bilinear resize with half-pixel centers and edge clamping.
pub fn upsample_bilinear<T: Scalar>(grid: &Array2<T>, out: (usize, usize)) -> Array2<T> {
    let (h, w) = grid.dim();
    let coord = |i: usize, n_in: usize, n_out: usize| -> (usize, usize, T) {
        let s = ((i as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let lo = s.floor() as usize;
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, T::of(s - lo as f64))
    };
    Array2::from_shape_fn(out, |(i, j)| {
        let (i0, i1, fy) = coord(i, h, out.0);
        let (j0, j1, fx) = coord(j, w, out.1);
        let top = grid[[i0, j0]] * (T::one() - fx) + grid[[i0, j1]] * fx;
        let bottom = grid[[i1, j0]] * (T::one() - fx) + grid[[i1, j1]] * fx;
        top * (T::one() - fy) + bottom * fy
    })
}

/// Latent-grid deviation scores before upsampling: per location,
/// `Σ_c ½(μ̃² + σ̃² − 1 − ln σ̃²)` over prior-whitened posterior marginals.
pub fn latent_deviation<T: Scalar>(latent: &LatentField<T>, prior: &Prior<T>) -> Result<Array2<T>> {
    let (mean, var) = match prior {
        Prior::StandardNormal => (
            latent.mean().clone(),
            latent.logvar().mapv(|lv| clamp_logvar(lv).exp()),
        ),
        Prior::Grf(p) => whiten_posterior(latent, p)?,
    };
    let half = T::of(0.5);
    let per_entry = Zip::from(&mean)
        .and(&var)
        .map_collect(|&m, &v| half * (m * m + v - T::one() - v.ln()));
    Ok(per_entry.sum_axis(Axis(0)))
}

/// Latent alignment anomaly map upsampled to `out` (image) resolution.
pub fn mad_map<T: Scalar>(
    latent: &LatentField<T>,
    prior: &Prior<T>,
    out: (usize, usize),
) -> Result<AnomalyMap<T>> {
    let grid = latent_deviation(latent, prior)?;
    Ok(AnomalyMap::raw(
        upsample_bilinear(&grid, out),
        MapSource::Mad,
    ))
}

/// Min-max normalizes both raw maps and multiplies them pointwise.
pub fn fuse_maps<T: Scalar>(ssm: &AnomalyMap<T>, mad: &AnomalyMap<T>) -> Result<AnomalyMap<T>> {
    if ssm.dim() != mad.dim() {
        return Err(Error::Shape(format!(
            "maps {:?} and {:?} differ",
            ssm.dim(),
            mad.dim()
        )));
    }
    if ssm.normalization != Normalization::Raw || mad.normalization != Normalization::Raw {
        return Err(Error::NotRaw);
    }
    let a = ssm.normalized();
    let b = mad.normalized();
    Ok(AnomalyMap {
        scores: &a.scores * &b.scores,
        normalization: Normalization::Product,
        source: MapSource::Fused,
    })
}
