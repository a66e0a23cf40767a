//! Building blocks shared by the convolutional and transformer models.

use candle_core::{Module, Result, Tensor, D};
use candle_nn::{
    conv2d, conv2d_no_bias, conv_transpose2d, group_norm, Conv2d, Conv2dConfig, ConvTranspose2d,
    ConvTranspose2dConfig, GroupNorm, VarBuilder,
};

const NORM_EPS: f64 = 1e-5;

/// Largest group count ≤ 8 dividing `channels`.
pub(crate) fn norm_groups(channels: usize) -> usize {
    (1..=8.min(channels))
        .rev()
        .find(|g| channels.is_multiple_of(*g))
        .unwrap_or(1)
}

pub(crate) fn norm2d(channels: usize, vb: VarBuilder) -> Result<GroupNorm> {
    group_norm(norm_groups(channels), channels, NORM_EPS, vb)
}

pub(crate) fn conv(
    c_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    vb: VarBuilder,
) -> Result<Conv2d> {
    let cfg = Conv2dConfig {
        padding: k / 2,
        stride,
        ..Default::default()
    };
    conv2d(c_in, c_out, k, cfg, vb)
}

fn conv_nb(c_in: usize, c_out: usize, k: usize, stride: usize, vb: VarBuilder) -> Result<Conv2d> {
    let cfg = Conv2dConfig {
        padding: k / 2,
        stride,
        ..Default::default()
    };
    conv2d_no_bias(c_in, c_out, k, cfg, vb)
}

/// Kernel 4, stride 2, padding 1: exactly doubles height and width.
pub(crate) fn upsample2x(c_in: usize, c_out: usize, vb: VarBuilder) -> Result<ConvTranspose2d> {
    let cfg = ConvTranspose2dConfig {
        padding: 1,
        stride: 2,
        ..Default::default()
    };
    conv_transpose2d(c_in, c_out, 4, cfg, vb)
}

/// 2×2 max pooling at stride 2; identity when `stride` is 1.
pub(crate) fn max_pool(x: &Tensor, stride: usize) -> Result<Tensor> {
    if stride == 1 {
        Ok(x.clone())
    } else {
        x.max_pool2d(2)
    }
}

/// Layer normalization over the last dimension, written with differentiable
/// primitives only.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
}

impl LayerNorm {
    pub fn new(dim: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            weight: vb.get(dim, "weight")?,
            bias: vb.get(dim, "bias")?,
        })
    }
}

impl Module for LayerNorm {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        centered
            .broadcast_div(&(var + NORM_EPS)?.sqrt()?)?
            .broadcast_mul(&self.weight)?
            .broadcast_add(&self.bias)
    }
}

/// Two 3×3 convolutions with a residual connection (projected when the
/// shape changes).
#[derive(Clone, Debug)]
pub struct BasicBlock {
    conv1: Conv2d,
    norm1: GroupNorm,
    conv2: Conv2d,
    norm2: GroupNorm,
    shortcut: Option<(Conv2d, GroupNorm)>,
}

impl BasicBlock {
    pub fn new(c_in: usize, c_out: usize, stride: usize, vb: VarBuilder) -> Result<Self> {
        let shortcut = if stride != 1 || c_in != c_out {
            Some((
                conv_nb(c_in, c_out, 1, stride, vb.pp("shortcut"))?,
                norm2d(c_out, vb.pp("shortcut_norm"))?,
            ))
        } else {
            None
        };
        Ok(Self {
            conv1: conv_nb(c_in, c_out, 3, stride, vb.pp("conv1"))?,
            norm1: norm2d(c_out, vb.pp("norm1"))?,
            conv2: conv_nb(c_out, c_out, 3, 1, vb.pp("conv2"))?,
            norm2: norm2d(c_out, vb.pp("norm2"))?,
            shortcut,
        })
    }
}

impl Module for BasicBlock {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.norm1.forward(&self.conv1.forward(x)?)?.relu()?;
        let h = self.norm2.forward(&self.conv2.forward(&h)?)?;
        let skip = match &self.shortcut {
            Some((conv, norm)) => norm.forward(&conv.forward(x)?)?,
            None => x.clone(),
        };
        (h + skip)?.relu()
    }
}
