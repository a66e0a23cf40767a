//! Dataset discovery and loading for MVTec-style and MiAD-style trees:
//!
//! ```text
//! <root>/<category>/train/good/*.png
//! <root>/<category>/test/<defect>/*.png
//! <root>/<category>/ground_truth/<defect>/<stem>_mask.png
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::{DynamicImage, GrayImage, ImageReader};
use ndarray::{Array2, Array3, Array4, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_IMAGE_SIZE: usize = 224;
pub const GOOD: &str = "good";

/// The surface-anomaly MiAD classes; the logical-anomaly classes are not supported.
pub const MIAD_SURFACE_CATEGORIES: [&str; 4] = [
    "electrical_insulator",
    "metal_welding",
    "photovoltaic_module",
    "wind_turbine",
];

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mvtec,
    Miad,
}

impl std::fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DatasetKind::Mvtec => "mvtec",
            DatasetKind::Miad => "miad",
        })
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mvtec" => Ok(DatasetKind::Mvtec),
            "miad" => Ok(DatasetKind::Miad),
            other => Err(format!(
                "unknown dataset kind {other:?} (expected mvtec or miad)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestEntry {
    pub image_path: PathBuf,
    pub defect_type: String,
    pub mask_path: Option<PathBuf>,
}

impl TestEntry {
    pub fn is_good(&self) -> bool {
        self.defect_type == GOOD
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Immutable listing of one category. Entries are sorted by path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub kind: DatasetKind,
    pub category: String,
    pub root: PathBuf,
    pub train_entries: Vec<PathBuf>,
    pub test_entries: Vec<TestEntry>,
    pub target_image_size: usize,
}

impl DatasetIndex {
    pub fn with_image_size(mut self, size: usize) -> Self {
        self.target_image_size = size;
        self
    }

    pub fn len(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train_entries.len(),
            Split::Test => self.test_entries.len(),
        }
    }

    pub fn is_empty(&self, split: Split) -> bool {
        self.len(split) == 0
    }

    /// Entries of a split in index order, as loadable references.
    pub fn entries(&self, split: Split) -> Vec<EntryRef<'_>> {
        match split {
            Split::Train => self.train_entries.iter().map(EntryRef::Train).collect(),
            Split::Test => self.test_entries.iter().map(EntryRef::Test).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum EntryRef<'a> {
    Train(&'a PathBuf),
    Test(&'a TestEntry),
}

impl EntryRef<'_> {
    pub fn image_path(&self) -> &Path {
        match self {
            EntryRef::Train(p) => p,
            EntryRef::Test(t) => &t.image_path,
        }
    }

    pub fn mask_path(&self) -> Option<&Path> {
        match self {
            EntryRef::Train(_) => None,
            EntryRef::Test(t) => t.mask_path.as_deref(),
        }
    }
}

fn is_image(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            .unwrap_or(false)
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if is_image(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn list_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn find_mask(gt_dir: &Path, stem: &str) -> Option<PathBuf> {
    // `<stem>_mask.<ext>` first, then a same-stem file.
    for suffix in ["_mask", ""] {
        for ext in IMAGE_EXTENSIONS {
            let candidate = gt_dir.join(format!("{stem}{suffix}.{ext}"));
            if candidate.is_file() {
                return Some(candidate);
            }
        }
    }
    None
}

/// Lists one category of an MVTec- or MiAD-layout dataset.
pub fn scan_dataset(root: &Path, kind: DatasetKind, category: &str) -> Result<DatasetIndex> {
    if kind == DatasetKind::Miad && !MIAD_SURFACE_CATEGORIES.contains(&category) {
        return Err(Error::UnsupportedCategory {
            kind: kind.to_string(),
            category: category.to_string(),
        });
    }
    let cat_dir = root.join(category);
    if !cat_dir.is_dir() {
        return Err(Error::CategoryNotFound(cat_dir));
    }

    let train_entries = list_images(&cat_dir.join("train").join(GOOD))?;

    let mut test_entries = Vec::new();
    for defect_dir in list_dirs(&cat_dir.join("test"))? {
        let defect = defect_dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        let gt_dir = cat_dir.join("ground_truth").join(&defect);
        for image_path in list_images(&defect_dir)? {
            let mask_path = if defect == GOOD {
                None
            } else {
                let stem = image_path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or_default();
                Some(
                    find_mask(&gt_dir, stem)
                        .ok_or_else(|| Error::MaskMissing(image_path.clone()))?,
                )
            };
            test_entries.push(TestEntry {
                image_path,
                defect_type: defect.clone(),
                mask_path,
            });
        }
    }
    test_entries.sort_by(|a, b| a.image_path.cmp(&b.image_path));

    Ok(DatasetIndex {
        kind,
        category: category.to_string(),
        root: root.to_path_buf(),
        train_entries,
        test_entries,
        target_image_size: DEFAULT_IMAGE_SIZE,
    })
}

/// Category directories under `root` that contain a `train/good` folder.
pub fn list_categories(root: &Path) -> Result<Vec<String>> {
    if !root.is_dir() {
        return Err(Error::CategoryNotFound(root.to_path_buf()));
    }
    Ok(list_dirs(root)?
        .into_iter()
        .filter(|d| d.join("train").join(GOOD).is_dir())
        .filter_map(|d| d.file_name().and_then(|n| n.to_str()).map(String::from))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Anomalous,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageSample<T> {
    /// `3 × H × W`, values in `[0, 1]`.
    pub pixels: Array3<T>,
    /// `H × W` binary mask.
    pub mask: Option<Array2<bool>>,
    pub label: Label,
    pub source_path: PathBuf,
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Decodes an image, converts it to RGB and resizes it bilinearly to `size × size`.
pub fn load_image<T: Scalar>(path: &Path, size: usize) -> Result<(Array3<T>, (u32, u32))> {
    let img = decode(path)?;
    let dims = (img.width(), img.height());
    Ok((image_to_array(&img, size), dims))
}

/// Writes a `3 × H × W` array in `[0, 1]` as an 8-bit RGB image, resized
/// bilinearly to `width × height` when that differs.
pub fn save_image<T: Scalar>(
    pixels: &Array3<T>,
    (width, height): (u32, u32),
    path: &Path,
) -> Result<()> {
    let (c, h, w) = pixels.dim();
    if c != 3 {
        return Err(Error::Shape(format!("expected 3 channels, got {c}")));
    }
    let rgb = image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        image::Rgb(std::array::from_fn(|ch| {
            (pixels[[ch, y as usize, x as usize]].f64().clamp(0.0, 1.0) * 255.0).round() as u8
        }))
    });
    let rgb = if (width, height) == (w as u32, h as u32) {
        rgb
    } else {
        image::imageops::resize(&rgb, width, height, FilterType::Triangle)
    };
    rgb.save(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub(crate) fn image_to_array<T: Scalar>(img: &DynamicImage, size: usize) -> Array3<T> {
    let rgb = img.to_rgb32f();
    let rgb = if rgb.width() as usize == size && rgb.height() as usize == size {
        rgb
    } else {
        image::imageops::resize(&rgb, size as u32, size as u32, FilterType::Triangle)
    };
    let mut out = Array3::zeros((3, size, size));
    for (x, y, p) in rgb.enumerate_pixels() {
        for c in 0..3 {
            out[[c, y as usize, x as usize]] = T::of(p.0[c].clamp(0.0, 1.0) as f64);
        }
    }
    out
}

fn mask_to_array(mask: &GrayImage, size: usize) -> Array2<bool> {
    let mask = if mask.width() as usize == size && mask.height() as usize == size {
        mask.clone()
    } else {
        image::imageops::resize(mask, size as u32, size as u32, FilterType::Nearest)
    };
    let mut out = Array2::from_elem((size, size), false);
    for (x, y, p) in mask.enumerate_pixels() {
        out[[y as usize, x as usize]] = p.0[0] as f64 / 255.0 > 0.5;
    }
    out
}

/// Loads one entry at `target_size × target_size`.
pub fn load_sample<T: Scalar>(entry: EntryRef<'_>, target_size: usize) -> Result<ImageSample<T>> {
    if target_size == 0 {
        return Err(Error::Parameter(
            "target image size must be positive".into(),
        ));
    }
    let path = entry.image_path();
    let img = decode(path)?;
    let pixels = image_to_array(&img, target_size);
    let mask = match entry.mask_path() {
        None => None,
        Some(mask_path) => {
            let m = decode(mask_path)?.to_luma8();
            if (m.width(), m.height()) != (img.width(), img.height()) {
                return Err(Error::Layout {
                    path: mask_path.to_path_buf(),
                    reason: format!(
                        "mask is {}×{} but image is {}×{}",
                        m.width(),
                        m.height(),
                        img.width(),
                        img.height()
                    ),
                });
            }
            Some(mask_to_array(&m, target_size))
        }
    };
    let label = match &mask {
        Some(m) if m.iter().any(|&v| v) => Label::Anomalous,
        _ => Label::Normal,
    };
    Ok(ImageSample {
        pixels,
        mask,
        label,
        source_path: path.to_path_buf(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleMeta {
    pub label: Label,
    pub mask: Option<Array2<bool>>,
    pub source_path: PathBuf,
}

#[derive(Clone, Debug)]
pub struct Batch<T> {
    /// `B × 3 × H × W`
    pub pixels: Array4<T>,
    pub samples: Vec<SampleMeta>,
}

impl<T: Scalar> Batch<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn from_samples(samples: Vec<ImageSample<T>>) -> Self {
        let views: Vec<_> = samples.iter().map(|s| s.pixels.view()).collect();
        let pixels = ndarray::stack(Axis(0), &views).expect("uniform sample size");
        let samples = samples
            .into_iter()
            .map(|s| SampleMeta {
                label: s.label,
                mask: s.mask,
                source_path: s.source_path,
            })
            .collect();
        Batch { pixels, samples }
    }
}

/// Order in which a split is visited: index order, or a permutation that is a
/// pure function of `seed`.
pub fn epoch_order(n: usize, shuffle: bool, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
    }
    order
}

/// Streams `⌈N / batch_size⌉` batches of a split, loading images lazily.
pub struct BatchIter<'a, T> {
    index: &'a DatasetIndex,
    entries: Vec<EntryRef<'a>>,
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
    _scalar: std::marker::PhantomData<T>,
}

pub fn batch_iter<T: Scalar>(
    index: &DatasetIndex,
    split: Split,
    batch_size: usize,
    shuffle: bool,
    seed: u64,
) -> Result<BatchIter<'_, T>> {
    if batch_size == 0 {
        return Err(Error::Parameter("batch size must be at least 1".into()));
    }
    let entries = index.entries(split);
    if entries.is_empty() {
        return Err(Error::EmptySplit(split.name()));
    }
    let order = epoch_order(entries.len(), shuffle, seed);
    Ok(BatchIter {
        index,
        entries,
        order,
        batch_size,
        cursor: 0,
        _scalar: std::marker::PhantomData,
    })
}

impl<T> BatchIter<'_, T> {
    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

impl<T: Scalar> Iterator for BatchIter<'_, T> {
    type Item = Result<Batch<T>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let picked = &self.order[self.cursor..end];
        self.cursor = end;
        let size = self.index.target_image_size;
        let samples: Result<Vec<_>> = picked
            .iter()
            .map(|&i| load_sample::<T>(self.entries[i], size))
            .collect();
        Some(samples.map(Batch::from_samples))
    }
}
