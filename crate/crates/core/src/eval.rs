//! Pixel-level ROCAUC and per-category evaluation.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{load_sample, DatasetIndex, ImageSample, Label, Split, TestEntry};
use crate::error::{Error, Result};
use crate::maps::AnomalyMap;
use crate::scalar::Scalar;

/// Area under the ROC curve as the Mann–Whitney statistic
/// `P(s⁺ > s⁻) + ½ P(s⁺ = s⁻)`, from one sort with midranks for ties.
///
/// The result is symmetric under label flipping to the last bit:
/// `roc_auc(s, l) + roc_auc(s, !l) == 1.0`.
pub fn roc_auc<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN anomaly score".into()));
    }
    let n = scores.len();
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels {
            positives: n_pos,
            total: n,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("NaN excluded"));

    // Sum of (1-based) midranks of the positives; half-integers, exact in f64.
    let mut rank_sum = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        let positives = order[i..j].iter().filter(|&&k| labels[k]).count();
        rank_sum += midrank * positives as f64;
        i = j;
    }
    let pairs = n_pos as f64 * n_neg as f64;
    let u = rank_sum - (n_pos as f64 * (n_pos as f64 + 1.0)) / 2.0;
    if 2.0 * u <= pairs {
        Ok(u / pairs)
    } else {
        Ok(1.0 - (pairs - u) / pairs)
    }
}

fn check_dims<T: Scalar>(map: &AnomalyMap<T>, mask: &Array2<bool>) -> Result<()> {
    if map.dim() != mask.dim() {
        return Err(Error::Shape(format!(
            "map {:?} and mask {:?} differ",
            map.dim(),
            mask.dim()
        )));
    }
    Ok(())
}

/// ROCAUC over the pixels of one image, labels taken from `mask`.
pub fn pixel_rocauc<T: Scalar>(map: &AnomalyMap<T>, mask: &Array2<bool>) -> Result<f64> {
    check_dims(map, mask)?;
    let scores: Vec<T> = map.scores.iter().copied().collect();
    let labels: Vec<bool> = mask.iter().copied().collect();
    roc_auc(&scores, &labels)
}

/// ROCAUC over the pixels of many images pooled together.
pub fn pooled_pixel_rocauc<T: Scalar>(pairs: &[(AnomalyMap<T>, Array2<bool>)]) -> Result<f64> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (map, mask) in pairs {
        check_dims(map, mask)?;
        scores.extend(map.scores.iter().copied());
        labels.extend(mask.iter().copied());
    }
    roc_auc(&scores, &labels)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AucConvention {
    /// Mean ± population std of per-image pixel AUCs over anomalous test images.
    PerImage,
    /// One AUC over all test pixels pooled.
    Pooled,
}

impl AucConvention {
    pub fn describe(self) -> &'static str {
        match self {
            AucConvention::PerImage => {
                "mean ± population std of per-image pixel ROCAUC over anomalous test images"
            }
            AucConvention::Pooled => {
                "pixel ROCAUC pooled over all test pixels (std not applicable)"
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub category: String,
    pub model_id: String,
    pub per_image_auc: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub images_evaluated: usize,
    pub images_skipped: usize,
    pub convention: AucConvention,
    #[serde(default)]
    pub pooled_auc: Option<f64>,
}

impl EvalResult {
    /// Builds a per-image result; mean and population std are recomputed from the AUCs.
    pub fn from_aucs(
        category: impl Into<String>,
        model_id: impl Into<String>,
        per_image_auc: Vec<f64>,
        images_skipped: usize,
    ) -> Self {
        let (mean, std) = mean_std(&per_image_auc);
        Self {
            category: category.into(),
            model_id: model_id.into(),
            images_evaluated: per_image_auc.len(),
            per_image_auc,
            mean,
            std,
            images_skipped,
            convention: AucConvention::PerImage,
            pooled_auc: None,
        }
    }

    /// Value and spread shown in reports under the result's convention.
    pub fn headline(&self) -> (f64, f64) {
        match (self.convention, self.pooled_auc) {
            (AucConvention::Pooled, Some(auc)) => (auc, 0.0),
            _ => (self.mean, self.std),
        }
    }
}

/// Mean and population (divide-by-N) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Anything that turns an image into a pixel anomaly map.
pub trait AnomalyScorer<T: Scalar> {
    fn model_id(&self) -> String;

    fn score(&self, sample: &ImageSample<T>) -> Result<AnomalyMap<T>>;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Report one pooled-pixel AUC instead of the per-image statistics.
    pub pooled: bool,
}

/// Scores every test image of `index` and aggregates pixel ROCAUCs. Images
/// without both positive and negative mask pixels (defect-free images in
/// particular) are skipped for the per-image statistic. `visit` sees every
/// scored test image in index order.
pub fn evaluate_category_with<T, S, F>(
    scorer: &S,
    index: &DatasetIndex,
    options: &EvalOptions,
    mut visit: F,
) -> Result<EvalResult>
where
    T: Scalar,
    S: AnomalyScorer<T> + ?Sized,
    F: FnMut(&TestEntry, &ImageSample<T>, &AnomalyMap<T>) -> Result<()>,
{
    if index.is_empty(Split::Test) {
        return Err(Error::EmptySplit("test"));
    }
    let mut aucs = Vec::new();
    let mut skipped = 0;
    let mut pooled = Vec::new();
    for (entry, entry_ref) in index.test_entries.iter().zip(index.entries(Split::Test)) {
        let sample = load_sample::<T>(entry_ref, index.target_image_size)?;
        let needs_map = options.pooled || sample.label == Label::Anomalous;
        if !needs_map {
            skipped += 1;
            continue;
        }
        let map = scorer.score(&sample)?;
        visit(entry, &sample, &map)?;
        let mask = sample
            .mask
            .clone()
            .unwrap_or_else(|| Array2::from_elem(map.dim(), false));
        if sample.label == Label::Anomalous {
            match pixel_rocauc(&map, &mask) {
                Ok(auc) => aucs.push(auc),
                Err(Error::DegenerateLabels { .. }) => skipped += 1,
                Err(e) => return Err(e),
            }
        } else {
            skipped += 1;
        }
        if options.pooled {
            pooled.push((map, mask));
        }
    }
    if aucs.is_empty() && !options.pooled {
        return Err(Error::EmptyEvaluation(index.category.clone()));
    }
    let mut result =
        EvalResult::from_aucs(index.category.clone(), scorer.model_id(), aucs, skipped);
    if options.pooled {
        result.convention = AucConvention::Pooled;
        result.pooled_auc = Some(match pooled_pixel_rocauc(&pooled) {
            Ok(v) => v,
            Err(Error::DegenerateLabels { .. }) => {
                return Err(Error::EmptyEvaluation(index.category.clone()))
            }
            Err(e) => return Err(e),
        });
    }
    Ok(result)
}

pub fn evaluate_category<T: Scalar, S: AnomalyScorer<T> + ?Sized>(
    scorer: &S,
    index: &DatasetIndex,
    options: &EvalOptions,
) -> Result<EvalResult> {
    evaluate_category_with(scorer, index, options, |_, _, _| Ok(()))
}
