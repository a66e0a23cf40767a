//! Patch-token transformer encoder and convolutional token-grid decoder.

use candle_core::{Module, Result, Tensor, D};
use candle_nn::{linear, ConvTranspose2d, GroupNorm, Linear, VarBuilder};

use super::config::ViTConfig;
use super::layers::{conv, norm2d, upsample2x, LayerNorm};

/// `B × C × H × W` → `B × T × (C·p²)`, row-major patch order, each token laid
/// out channel-major then row then column.
pub fn patchify_tensor(x: &Tensor, patch: usize) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        candle_core::bail!("image {h}×{w} is not divisible into {patch}×{patch} patches");
    }
    let (gh, gw) = (h / patch, w / patch);
    x.reshape((b, c, gh, patch, gw, patch))?
        .permute((0, 2, 4, 1, 3, 5))?
        .reshape((b, gh * gw, c * patch * patch))
}

/// Tokens `B × T × d` to a `B × d × g × g` grid.
pub fn tokens_to_grid(tokens: &Tensor, grid: usize) -> Result<Tensor> {
    let (b, t, d) = tokens.dims3()?;
    if t != grid * grid {
        candle_core::bail!("{t} tokens do not fill a {grid}×{grid} grid");
    }
    tokens.transpose(1, 2)?.reshape((b, d, grid, grid))
}

pub fn grid_to_tokens(grid: &Tensor) -> Result<Tensor> {
    let (b, d, h, w) = grid.dims4()?;
    grid.reshape((b, d, h * w))?.transpose(1, 2)?.contiguous()
}

#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    qkv: Linear,
    proj: Linear,
    heads: usize,
}

impl MultiHeadAttention {
    pub fn new(dim: usize, heads: usize, vb: VarBuilder) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            candle_core::bail!("embedding dim {dim} is not divisible by {heads} heads");
        }
        Ok(Self {
            qkv: linear(dim, 3 * dim, vb.pp("qkv"))?,
            proj: linear(dim, dim, vb.pp("proj"))?,
            heads,
        })
    }

    /// Queries, keys and values, each `B × heads × T × d_head`.
    pub fn qkv(&self, x: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let (b, t, d) = x.dims3()?;
        let qkv = self
            .qkv
            .forward(x)?
            .reshape((b, t, 3, self.heads, d / self.heads))?
            .permute((2, 0, 3, 1, 4))?;
        Ok((
            qkv.get(0)?.contiguous()?,
            qkv.get(1)?.contiguous()?,
            qkv.get(2)?.contiguous()?,
        ))
    }

    /// Attention context before the output projection (`B × heads × T ×
    /// d_head`) and the row-stochastic weights (`B × heads × T × T`).
    pub fn attend(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let (q, k, v) = self.qkv(x)?;
        let scale = 1.0 / (q.dim(D::Minus1)? as f64).sqrt();
        let scores = (q.matmul(&k.t()?.contiguous()?)? * scale)?;
        let weights = candle_nn::ops::softmax(&scores, D::Minus1)?;
        Ok((weights.matmul(&v)?, weights))
    }

    pub fn forward_with_weights(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let (b, t, d) = x.dims3()?;
        let (ctx, weights) = self.attend(x)?;
        let merged = ctx.transpose(1, 2)?.reshape((b, t, d))?;
        Ok((self.proj.forward(&merged)?, weights))
    }
}

#[derive(Clone, Debug)]
struct Mlp {
    fc1: Linear,
    fc2: Linear,
}

impl Module for Mlp {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.fc2.forward(&self.fc1.forward(x)?.gelu_erf()?)
    }
}

/// Pre-norm transformer encoder layer.
#[derive(Clone, Debug)]
pub struct AttentionBlock {
    norm1: LayerNorm,
    attn: MultiHeadAttention,
    norm2: LayerNorm,
    mlp: Mlp,
}

impl AttentionBlock {
    pub fn new(dim: usize, heads: usize, mlp_hidden: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            norm1: LayerNorm::new(dim, vb.pp("norm1"))?,
            attn: MultiHeadAttention::new(dim, heads, vb.pp("attn"))?,
            norm2: LayerNorm::new(dim, vb.pp("norm2"))?,
            mlp: Mlp {
                fc1: linear(dim, mlp_hidden, vb.pp("mlp.fc1"))?,
                fc2: linear(mlp_hidden, dim, vb.pp("mlp.fc2"))?,
            },
        })
    }

    pub fn attention(&self) -> &MultiHeadAttention {
        &self.attn
    }

    pub fn norm1(&self) -> &LayerNorm {
        &self.norm1
    }

    pub fn forward_with_weights(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let (attn, weights) = self.attn.forward_with_weights(&self.norm1.forward(x)?)?;
        let x = (x + attn)?;
        let out = (&x + self.mlp.forward(&self.norm2.forward(&x)?)?)?;
        Ok((out, weights))
    }
}

impl Module for AttentionBlock {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_with_weights(x)?.0)
    }
}

#[derive(Clone, Debug)]
pub struct VitEncoder {
    patch_size: usize,
    embed: Linear,
    pos_embed: Tensor,
    blocks: Vec<AttentionBlock>,
    norm: LayerNorm,
    mean_head: Linear,
    logvar_head: Linear,
}

impl VitEncoder {
    pub fn new(cfg: &ViTConfig, vb: VarBuilder) -> Result<Self> {
        let d = cfg.embed_dim;
        let blocks = (0..cfg.depth)
            .map(|i| {
                AttentionBlock::new(d, cfg.heads, cfg.mlp_hidden(), vb.pp(format!("blocks.{i}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            patch_size: cfg.patch_size,
            embed: linear(cfg.patch_dim(), d, vb.pp("patch_embed"))?,
            pos_embed: vb.get((1, cfg.tokens(), d), "pos_embed")?,
            blocks,
            norm: LayerNorm::new(d, vb.pp("norm"))?,
            mean_head: linear(d, d, vb.pp("mean_head"))?,
            logvar_head: linear(d, d, vb.pp("logvar_head"))?,
        })
    }

    pub fn blocks(&self) -> &[AttentionBlock] {
        &self.blocks
    }

    /// Embedded tokens with positional embedding, `B × T × d`.
    pub fn embed(&self, x: &Tensor) -> Result<Tensor> {
        let tokens = patchify_tensor(x, self.patch_size)?;
        self.embed.forward(&tokens)?.broadcast_add(&self.pos_embed)
    }

    /// Per-token unclamped `(mean, logvar)`, each `B × T × d`.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut h = self.embed(x)?;
        for block in &self.blocks {
            h = block.forward(&h)?;
        }
        let h = self.norm.forward(&h)?;
        Ok((self.mean_head.forward(&h)?, self.logvar_head.forward(&h)?))
    }
}

/// Closed-form parameter count of [`VitEncoder`].
pub fn vit_encoder_parameter_count(cfg: &ViTConfig) -> usize {
    let d = cfg.embed_dim;
    let hidden = cfg.mlp_hidden();
    let embed = cfg.patch_dim() * d + d + cfg.tokens() * d;
    let block =
        2 * (2 * d) + (d * 3 * d + 3 * d) + (d * d + d) + (d * hidden + hidden) + (hidden * d + d);
    let heads = 2 * (d * d + d);
    embed + cfg.depth * block + 2 * d + heads
}

#[derive(Clone, Debug)]
struct DecoderStage {
    up: ConvTranspose2d,
    norm: GroupNorm,
}

/// Doubles the token grid `log2(patch)` times while halving channels.
#[derive(Clone, Debug)]
pub struct VitDecoder {
    stages: Vec<DecoderStage>,
    head: candle_nn::Conv2d,
}

impl VitDecoder {
    pub fn new(cfg: &ViTConfig, vb: VarBuilder) -> Result<Self> {
        let steps = cfg.patch_size.trailing_zeros() as usize;
        let mut c = cfg.embed_dim;
        let mut stages = Vec::with_capacity(steps);
        for i in 0..steps {
            let next = (c / 2).max(1);
            let vb_stage = vb.pp(format!("up{i}"));
            stages.push(DecoderStage {
                up: upsample2x(c, next, vb_stage.pp("deconv"))?,
                norm: norm2d(next, vb_stage.pp("norm"))?,
            });
            c = next;
        }
        Ok(Self {
            stages,
            head: conv(c, 3, 3, 1, vb.pp("head"))?,
        })
    }

    /// Output image and the spatial side after each upsampling stage.
    pub fn forward_traced(&self, grid: &Tensor) -> Result<(Tensor, Vec<usize>)> {
        let mut h = grid.clone();
        let mut sides = vec![h.dim(3)?];
        for stage in &self.stages {
            h = stage.norm.forward(&stage.up.forward(&h)?)?.relu()?;
            sides.push(h.dim(3)?);
        }
        Ok((candle_nn::ops::sigmoid(&self.head.forward(&h)?)?, sides))
    }
}

impl Module for VitDecoder {
    fn forward(&self, grid: &Tensor) -> Result<Tensor> {
        Ok(self.forward_traced(grid)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patch::patchify;
    use candle_core::{DType, Device};
    use ndarray::Array3;

    #[test]
    fn tensor_patchify_matches_array_layout() -> Result<()> {
        let dev = Device::Cpu;
        let img = Array3::from_shape_fn((3, 8, 12), |(c, i, j)| (c * 1000 + i * 20 + j) as f64);
        let t = Tensor::from_vec(img.iter().copied().collect::<Vec<_>>(), (1, 3, 8, 12), &dev)?;
        let tokens = patchify_tensor(&t, 4)?.squeeze(0)?.to_vec2::<f64>()?;
        let expected = patchify(&img, 4).unwrap();
        assert_eq!(tokens.len(), 6);
        for (row, exp) in tokens.iter().zip(expected.rows()) {
            assert_eq!(row.as_slice(), exp.to_vec().as_slice());
        }
        assert!(patchify_tensor(&Tensor::zeros((1, 3, 10, 8), DType::F64, &dev)?, 4).is_err());
        Ok(())
    }

    #[test]
    fn grid_token_round_trip() -> Result<()> {
        let dev = Device::Cpu;
        let g = Tensor::arange(0f32, 2.0 * 5.0 * 9.0, &dev)?.reshape((2, 5, 3, 3))?;
        let back = tokens_to_grid(&grid_to_tokens(&g)?, 3)?;
        assert_eq!(
            back.flatten_all()?.to_vec1::<f32>()?,
            g.flatten_all()?.to_vec1::<f32>()?
        );
        assert!(tokens_to_grid(&grid_to_tokens(&g)?, 2).is_err());
        Ok(())
    }
}
