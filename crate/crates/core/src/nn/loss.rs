//! Differentiable β-ELBO terms on tensors.

use std::sync::Arc;

use candle_core::backend::BackendStorage;
use candle_core::{CpuStorage, CustomOp1, DType, Layout, Shape, Tensor};

use crate::grf::GrfPrior;
use crate::latent::LOGVAR_CLAMP;

/// Applies a circulant precision `Σ⁻¹` to every trailing `h × w` plane of a
/// tensor through the DFT. The operator is symmetric, so its gradient is the
/// same operator applied to the incoming gradient.
#[derive(Clone)]
pub struct PrecisionApply {
    prior: Arc<GrfPrior<f64>>,
}

impl PrecisionApply {
    pub fn new(prior: Arc<GrfPrior<f64>>) -> Self {
        Self { prior }
    }

    pub fn prior(&self) -> &GrfPrior<f64> {
        &self.prior
    }

    fn plane(&self) -> usize {
        self.prior.sites()
    }

    fn apply_all(&self, values: &[f64]) -> Vec<f64> {
        let n = self.plane();
        let mut out = Vec::with_capacity(values.len());
        for chunk in values.chunks(n) {
            out.extend(self.prior.apply_precision(chunk));
        }
        out
    }
}

impl CustomOp1 for PrecisionApply {
    fn name(&self) -> &'static str {
        "grf-precision"
    }

    fn cpu_fwd(
        &self,
        storage: &CpuStorage,
        layout: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        let dims = layout.shape().dims();
        let (h, w) = self.prior.lattice();
        if dims.len() < 2 || dims[dims.len() - 2] != h || dims[dims.len() - 1] != w {
            candle_core::bail!("precision for a {h}×{w} lattice applied to shape {dims:?}");
        }
        let (start, end) = match layout.contiguous_offsets() {
            Some(offsets) => offsets,
            None => candle_core::bail!("grf-precision needs a contiguous input"),
        };
        let out = match storage {
            CpuStorage::F64(v) => CpuStorage::F64(self.apply_all(&v[start..end])),
            CpuStorage::F32(v) => {
                let wide: Vec<f64> = v[start..end].iter().map(|&x| x as f64).collect();
                CpuStorage::F32(
                    self.apply_all(&wide)
                        .into_iter()
                        .map(|x| x as f32)
                        .collect(),
                )
            }
            other => candle_core::bail!("grf-precision does not support {:?}", other.dtype()),
        };
        Ok((out, layout.shape().clone()))
    }

    fn bwd(
        &self,
        _arg: &Tensor,
        _res: &Tensor,
        grad_res: &Tensor,
    ) -> candle_core::Result<Option<Tensor>> {
        Ok(Some(grad_res.contiguous()?.apply_op1(self.clone())?))
    }
}

/// Batch-averaged sum of squared differences.
pub fn reconstruction_term(x: &Tensor, x_hat: &Tensor) -> candle_core::Result<Tensor> {
    let batch = x.dim(0)? as f64;
    (x - x_hat)?.sqr()?.sum_all()? / batch
}

/// Batch-averaged KL to the standard normal; `mean`, `logvar` are `B × …`.
pub fn kl_standard_term(mean: &Tensor, logvar: &Tensor) -> candle_core::Result<Tensor> {
    let batch = mean.dim(0)? as f64;
    let per = ((mean.sqr()? + logvar.exp()?)? - logvar)?;
    let elems = per.elem_count() as f64;
    ((per.sum_all()? - elems)? * 0.5)? / batch
}

/// Batch-averaged KL to a toroidal GRF prior over `B × C × h × w` posteriors:
/// `½[S̄⁻¹Σσ² + Σμ·Σ⁻¹μ − Σ ln σ² + C(ln|Σ| − N)]` per sample.
pub fn kl_grf_term(
    mean: &Tensor,
    logvar: &Tensor,
    precision: &PrecisionApply,
) -> candle_core::Result<Tensor> {
    let (batch, channels, _, _) = mean.dims4()?;
    let prior = precision.prior();
    let n = prior.sites() as f64;
    let trace = (logvar.exp()?.sum_all()? * prior.inverse_mean())?;
    let precise = mean.contiguous()?.apply_op1(precision.clone())?;
    let quad = (mean * precise)?.sum_all()?;
    let constant = (batch * channels) as f64 * (prior.log_det() - n);
    let total = ((trace + quad)? - logvar.sum_all()?)?;
    ((total + constant)? * 0.5)? / batch as f64
}

pub(crate) fn clamp_logvar_tensor(logvar: &Tensor) -> candle_core::Result<Tensor> {
    logvar.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)
}

pub(crate) fn scalar_value(t: &Tensor) -> candle_core::Result<f64> {
    t.to_dtype(DType::F64)?.to_scalar::<f64>()
}
