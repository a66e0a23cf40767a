//! Generated MVTec-layout dataset of textured squares with planted bright
//! blob anomalies, for smoke tests and benchmarks.

use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ANOMALY_TYPE: &str = "blob";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub category: String,
    pub image_size: usize,
    pub train_images: usize,
    pub test_good: usize,
    pub test_anomalous: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            category: "squares".into(),
            image_size: 64,
            train_images: 32,
            test_good: 4,
            test_anomalous: 12,
            seed: 7,
        }
    }
}

fn clamp_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Gray striped background with a checkered square whose position, size and
/// tint vary slightly between images.
fn textured_square(size: usize, rng: &mut ChaCha8Rng) -> RgbImage {
    let s = size as f64;
    let side = s * rng.random_range(0.40..0.50);
    let cx = s / 2.0 + rng.random_range(-0.06..0.06) * s;
    let cy = s / 2.0 + rng.random_range(-0.06..0.06) * s;
    let tint: [f64; 3] = [
        0.55 + rng.random_range(-0.04..0.04),
        0.40 + rng.random_range(-0.04..0.04),
        0.28 + rng.random_range(-0.04..0.04),
    ];
    let cell = (size / 16).max(2);
    let mut img = RgbImage::new(size as u32, size as u32);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
        let stripe = 0.015 * (2.0 * std::f64::consts::PI * (xf + yf) / 8.0).sin();
        let inside = (xf - cx).abs() < side / 2.0 && (yf - cy).abs() < side / 2.0;
        let rgb: [f64; 3] = if inside {
            let checker = if ((x as usize / cell) + (y as usize / cell)).is_multiple_of(2) {
                0.02
            } else {
                -0.02
            };
            [tint[0] + checker, tint[1] + checker, tint[2] + checker]
        } else {
            [0.30 + stripe, 0.32 + stripe, 0.35 + stripe]
        };
        let noise = rng.random_range(-0.01..0.01);
        *px = Rgb([
            clamp_u8(rgb[0] + noise),
            clamp_u8(rgb[1] + noise),
            clamp_u8(rgb[2] + noise),
        ]);
    }
    img
}

/// Paints a near-white disc and returns its mask.
fn plant_blob(img: &mut RgbImage, rng: &mut ChaCha8Rng) -> GrayImage {
    let size = img.width() as f64;
    let radius = size * rng.random_range(0.07..0.11);
    let margin = radius + 1.0;
    let cx = rng.random_range(margin..size - margin);
    let cy = rng.random_range(margin..size - margin);
    let mut mask = GrayImage::new(img.width(), img.height());
    for (x, y, px) in img.enumerate_pixels_mut() {
        let d = ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)).sqrt();
        if d <= radius {
            let v = clamp_u8(0.97 + rng.random_range(-0.02..0.02));
            *px = Rgb([v, v, v]);
            mask.put_pixel(x, y, Luma([255]));
        }
    }
    mask
}

fn save_rgb(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Writes `root/<category>/{train/good, test/good, test/blob,
/// ground_truth/blob}` and returns the category directory.
pub fn generate(root: &Path, spec: &SyntheticSpec) -> Result<PathBuf> {
    if spec.image_size < 16 {
        return Err(Error::Parameter(
            "synthetic images must be at least 16 pixels".into(),
        ));
    }
    let dir = root.join(&spec.category);
    let train = dir.join("train").join("good");
    let test_good = dir.join("test").join("good");
    let test_bad = dir.join("test").join(ANOMALY_TYPE);
    let masks = dir.join("ground_truth").join(ANOMALY_TYPE);
    for d in [&train, &test_good, &test_bad, &masks] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for i in 0..spec.train_images {
        save_rgb(
            &textured_square(spec.image_size, &mut rng),
            &train.join(format!("{i:03}.png")),
        )?;
    }
    for i in 0..spec.test_good {
        save_rgb(
            &textured_square(spec.image_size, &mut rng),
            &test_good.join(format!("{i:03}.png")),
        )?;
    }
    for i in 0..spec.test_anomalous {
        let mut img = textured_square(spec.image_size, &mut rng);
        let mask = plant_blob(&mut img, &mut rng);
        save_rgb(&img, &test_bad.join(format!("{i:03}.png")))?;
        let mask_path = masks.join(format!("{i:03}_mask.png"));
        mask.save(&mask_path).map_err(|e| Error::Decode {
            path: mask_path.clone(),
            reason: e.to_string(),
        })?;
    }
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{scan_dataset, DatasetKind, Split};

    #[test]
    fn layout_scans_as_mvtec() {
        let tmp = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            train_images: 3,
            test_good: 2,
            test_anomalous: 2,
            ..Default::default()
        };
        generate(tmp.path(), &spec).unwrap();
        let index = scan_dataset(tmp.path(), DatasetKind::Mvtec, "squares").unwrap();
        assert_eq!(index.len(Split::Train), 3);
        assert_eq!(index.len(Split::Test), 4);
        let bad: Vec<_> = index.test_entries.iter().filter(|e| !e.is_good()).collect();
        assert_eq!(bad.len(), 2);
        assert!(bad.iter().all(|e| e.mask_path.is_some()));
    }

    #[test]
    fn generation_is_seeded() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            train_images: 2,
            test_good: 0,
            test_anomalous: 1,
            ..Default::default()
        };
        generate(a.path(), &spec).unwrap();
        generate(b.path(), &spec).unwrap();
        for rel in [
            "squares/train/good/001.png",
            "squares/ground_truth/blob/000_mask.png",
        ] {
            assert_eq!(
                std::fs::read(a.path().join(rel)).unwrap(),
                std::fs::read(b.path().join(rel)).unwrap()
            );
        }
    }
}
