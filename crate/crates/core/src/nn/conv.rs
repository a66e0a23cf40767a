//! Residual convolutional encoder (18-layer layout) and its transposed
//! convolution decoder.

use candle_core::{Module, Result, Tensor};
use candle_nn::{Conv2d, Conv2dConfig, ConvTranspose2d, GroupNorm, VarBuilder};

use super::config::ModelConfig;
use super::layers::{conv, max_pool, norm2d, upsample2x, BasicBlock};

/// Points where the encoder may halve resolution, in the order they are used:
/// stem convolution, stem pooling, then the first block of stages 2, 3 and 4.
const DOWNSAMPLE_SITES: usize = 5;

fn strides(steps: usize) -> [usize; DOWNSAMPLE_SITES] {
    let mut s = [1; DOWNSAMPLE_SITES];
    for slot in s.iter_mut().take(steps) {
        *slot = 2;
    }
    s
}

#[derive(Clone, Debug)]
pub struct ConvEncoder {
    stem: Conv2d,
    stem_norm: GroupNorm,
    pool_stride: usize,
    stages: Vec<BasicBlock>,
    mean_head: Conv2d,
    logvar_head: Conv2d,
}

impl ConvEncoder {
    pub fn new(cfg: &ModelConfig, vb: VarBuilder) -> Result<Self> {
        let w = cfg.base_width;
        let s = strides(cfg.downsampling_steps());
        let stem = candle_nn::conv2d_no_bias(
            3,
            w,
            7,
            Conv2dConfig {
                padding: 3,
                stride: s[0],
                ..Default::default()
            },
            vb.pp("stem"),
        )?;
        let widths = [w, 2 * w, 4 * w, 8 * w];
        let stage_strides = [1, s[2], s[3], s[4]];
        let mut stages = Vec::with_capacity(8);
        let mut c_in = w;
        for (i, (&c_out, &stride)) in widths.iter().zip(&stage_strides).enumerate() {
            let vb_stage = vb.pp(format!("layer{}", i + 1));
            stages.push(BasicBlock::new(c_in, c_out, stride, vb_stage.pp("0"))?);
            stages.push(BasicBlock::new(c_out, c_out, 1, vb_stage.pp("1"))?);
            c_in = c_out;
        }
        Ok(Self {
            stem,
            stem_norm: norm2d(w, vb.pp("stem_norm"))?,
            pool_stride: s[1],
            stages,
            mean_head: conv(8 * w, cfg.z_channels, 1, 1, vb.pp("mean_head"))?,
            logvar_head: conv(8 * w, cfg.z_channels, 1, 1, vb.pp("logvar_head"))?,
        })
    }

    /// Returns unclamped `(mean, logvar)` heads, each `B × z × h × w`.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut h = self.stem_norm.forward(&self.stem.forward(x)?)?.relu()?;
        h = max_pool(&h, self.pool_stride)?;
        for block in &self.stages {
            h = block.forward(&h)?;
        }
        Ok((self.mean_head.forward(&h)?, self.logvar_head.forward(&h)?))
    }
}

#[derive(Clone, Debug)]
struct UpStage {
    up: ConvTranspose2d,
    norm: GroupNorm,
    block: BasicBlock,
}

#[derive(Clone, Debug)]
pub struct ConvDecoder {
    proj: Conv2d,
    proj_norm: GroupNorm,
    proj_block: BasicBlock,
    stages: Vec<UpStage>,
    head: Conv2d,
}

impl ConvDecoder {
    pub fn new(cfg: &ModelConfig, vb: VarBuilder) -> Result<Self> {
        let w = cfg.base_width;
        let mut c = 8 * w;
        let proj = conv(cfg.z_channels, c, 1, 1, vb.pp("proj"))?;
        let proj_norm = norm2d(c, vb.pp("proj_norm"))?;
        let proj_block = BasicBlock::new(c, c, 1, vb.pp("proj_block"))?;
        let mut stages = Vec::new();
        for i in 0..cfg.downsampling_steps() {
            let next = (c / 2).max(w);
            let vb_stage = vb.pp(format!("up{i}"));
            stages.push(UpStage {
                up: upsample2x(c, next, vb_stage.pp("deconv"))?,
                norm: norm2d(next, vb_stage.pp("norm"))?,
                block: BasicBlock::new(next, next, 1, vb_stage.pp("block"))?,
            });
            c = next;
        }
        Ok(Self {
            proj,
            proj_norm,
            proj_block,
            stages,
            head: conv(c, 3, 3, 1, vb.pp("head"))?,
        })
    }

    pub fn forward(&self, z: &Tensor) -> Result<Tensor> {
        let mut h = self.proj_norm.forward(&self.proj.forward(z)?)?.relu()?;
        h = self.proj_block.forward(&h)?;
        for stage in &self.stages {
            h = stage.norm.forward(&stage.up.forward(&h)?)?.relu()?;
            h = stage.block.forward(&h)?;
        }
        candle_nn::ops::sigmoid(&self.head.forward(&h)?)
    }
}
