//! Splitting images into non-overlapping square patches and back.

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `C × H × W` → `T × (C·p²)` with patches in row-major order. Each token is
/// laid out channel-major, then patch row, then patch column.
pub fn patchify<T: Scalar>(image: &Array3<T>, patch: usize) -> Result<Array2<T>> {
    let (c, h, w) = image.dim();
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::Shape(format!(
            "image {h}×{w} is not divisible into {patch}×{patch} patches"
        )));
    }
    let (gh, gw) = (h / patch, w / patch);
    let mut out = Array2::zeros((gh * gw, c * patch * patch));
    for gi in 0..gh {
        for gj in 0..gw {
            let t = gi * gw + gj;
            for ch in 0..c {
                for i in 0..patch {
                    for j in 0..patch {
                        out[[t, (ch * patch + i) * patch + j]] =
                            image[[ch, gi * patch + i, gj * patch + j]];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`patchify`] for a `grid.0 × grid.1` patch grid.
pub fn unpatchify<T: Scalar>(
    tokens: &Array2<T>,
    channels: usize,
    patch: usize,
    grid: (usize, usize),
) -> Result<Array3<T>> {
    let (n, len) = tokens.dim();
    if n != grid.0 * grid.1 || len != channels * patch * patch {
        return Err(Error::Shape(format!(
            "{n} tokens of length {len} do not form a {}×{} grid of {channels}×{patch}×{patch} patches",
            grid.0, grid.1
        )));
    }
    let mut out = Array3::zeros((channels, grid.0 * patch, grid.1 * patch));
    for gi in 0..grid.0 {
        for gj in 0..grid.1 {
            let t = gi * grid.1 + gj;
            for ch in 0..channels {
                for i in 0..patch {
                    for j in 0..patch {
                        out[[ch, gi * patch + i, gj * patch + j]] =
                            tokens[[t, (ch * patch + i) * patch + j]];
                    }
                }
            }
        }
    }
    Ok(out)
}
