use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::LazyLock;

use ndarray::{Array2, Array3, Axis};
use proptest::prelude::*;
use vae_anomaly::data::{batch_iter, load_sample, scan_dataset, DatasetIndex, DatasetKind, Split};
use vae_anomaly::eval::{pixel_rocauc, roc_auc};
use vae_anomaly::grf::{dense_covariance, kl_grf, CorrelationKind, GrfParams, GrfPrior};
use vae_anomaly::latent::{kl_standard_normal, LatentField, Prior};
use vae_anomaly::maps::{fuse_maps, mad_map, ssm_map, AnomalyMap, MapSource, SsmConfig};
use vae_anomaly::synthetic::{generate, SyntheticSpec};

static FIXTURE: LazyLock<(tempfile::TempDir, DatasetIndex)> = LazyLock::new(|| {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        image_size: 16,
        train_images: 11,
        test_good: 2,
        test_anomalous: 3,
        ..Default::default()
    };
    generate(dir.path(), &spec).unwrap();
    let index = scan_dataset(dir.path(), DatasetKind::Mvtec, &spec.category)
        .unwrap()
        .with_image_size(16);
    (dir, index)
});

fn kind() -> impl Strategy<Value = CorrelationKind> {
    prop_oneof![
        Just(CorrelationKind::Identity),
        Just(CorrelationKind::Exponential),
        Just(CorrelationKind::Matern),
    ]
}

fn field(c: usize, h: usize, w: usize) -> impl Strategy<Value = LatentField<f64>> {
    let n = c * h * w;
    (
        proptest::collection::vec(-3.0..3.0f64, n),
        proptest::collection::vec(-2.0..2.0f64, n),
    )
        .prop_map(move |(m, l)| {
            LatentField::new(
                Array3::from_shape_vec((c, h, w), m).unwrap(),
                Array3::from_shape_vec((c, h, w), l).unwrap(),
            )
            .unwrap()
        })
}

fn roll(a: &Array3<f64>, di: usize, dj: usize) -> Array3<f64> {
    let (_, h, w) = a.dim();
    Array3::from_shape_fn(a.dim(), |(c, i, j)| {
        a[[c, (i + h - di) % h, (j + w - dj) % w]]
    })
}

fn image(h: usize, w: usize) -> impl Strategy<Value = Array3<f64>> {
    proptest::collection::vec(0.0..1.0f64, 3 * h * w)
        .prop_map(move |v| Array3::from_shape_vec((3, h, w), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn batches_cover_the_split_exactly_once(batch_size in 1usize..14, seed in any::<u64>(), shuffle in any::<bool>()) {
        let index = &FIXTURE.1;
        for split in [Split::Train, Split::Test] {
            let mut seen: BTreeMap<PathBuf, usize> = BTreeMap::new();
            for batch in batch_iter::<f32>(index, split, batch_size, shuffle, seed).unwrap() {
                let batch = batch.unwrap();
                prop_assert!(batch.len() <= batch_size);
                prop_assert!(batch.pixels.iter().all(|v| (0.0..=1.0).contains(v)));
                for s in batch.samples {
                    *seen.entry(s.source_path).or_default() += 1;
                }
            }
            let expected: Vec<PathBuf> = index.entries(split).iter().map(|e| e.image_path().to_path_buf()).collect();
            prop_assert_eq!(seen.len(), expected.len());
            prop_assert!(expected.iter().all(|p| seen.get(p) == Some(&1)));
        }
    }

    #[test]
    fn standard_kl_is_nonnegative(latent in field(2, 3, 3)) {
        prop_assert!(kl_standard_normal(&latent).unwrap() >= 0.0);
    }

    #[test]
    fn grf_kl_is_nonnegative(latent in field(2, 4, 4), kind in kind(), range in 0.5..3.0f64, variance in 0.3..3.0f64) {
        let prior = GrfPrior::<f64>::new(GrfParams { kind, range, variance, smoothness: 1.5 }, (4, 4)).unwrap();
        prop_assert!(kl_grf(&latent, &prior).unwrap() >= -1e-9);
    }

    #[test]
    fn identity_kl_grows_with_mean_norm(latent in field(1, 4, 4), scale in 1.01..3.0f64) {
        prop_assume!(latent.mean().iter().any(|v| v.abs() > 1e-3));
        let prior = GrfPrior::<f64>::new(GrfParams::default(), (4, 4)).unwrap();
        let bigger = LatentField::new(latent.mean() * scale, latent.logvar().clone()).unwrap();
        prop_assert!(kl_grf(&bigger, &prior).unwrap() > kl_grf(&latent, &prior).unwrap());
    }

    #[test]
    fn grf_kl_is_translation_invariant(latent in field(2, 4, 6), kind in kind(), di in 0usize..4, dj in 0usize..6) {
        let prior = GrfPrior::<f64>::new(GrfParams { kind, range: 1.7, variance: 1.2, smoothness: 1.5 }, (4, 6)).unwrap();
        let moved = LatentField::new(roll(latent.mean(), di, dj), roll(latent.logvar(), di, dj)).unwrap();
        let (a, b) = (kl_grf(&latent, &prior).unwrap(), kl_grf(&moved, &prior).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn covariance_commutes_with_translation(kind in kind(), range in 0.5..3.0f64, di in 0usize..4, dj in 0usize..5) {
        let (h, w) = (4, 5);
        let prior = GrfPrior::<f64>::new(GrfParams { kind, range, variance: 1.0, smoothness: 1.5 }, (h, w)).unwrap();
        let cov = dense_covariance(&prior).unwrap();
        let shift = |s: usize| ((s / w + di) % h) * w + (s % w + dj) % w;
        for a in 0..h * w {
            for b in 0..h * w {
                prop_assert!((cov[[shift(a), shift(b)]] - cov[[a, b]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ssm_is_symmetric_and_deterministic(x in image(12, 12), y in image(12, 12)) {
        let cfg = SsmConfig::default();
        let a = ssm_map(&x, &y, &cfg).unwrap();
        let b = ssm_map(&y, &x, &cfg).unwrap();
        prop_assert!((&a.scores - &b.scores).iter().all(|d| d.abs() < 1e-12));
        prop_assert_eq!(a, ssm_map(&x, &y, &cfg).unwrap());
    }

    #[test]
    fn fused_is_bounded_by_both_inputs(x in image(10, 10), y in image(10, 10), latent in field(2, 5, 5)) {
        let ssm = ssm_map(&x, &y, &SsmConfig::default()).unwrap();
        let mad = mad_map(&latent, &Prior::StandardNormal, (10, 10)).unwrap();
        let fused = fuse_maps(&ssm, &mad).unwrap();
        let (ns, nm) = (ssm.normalized(), mad.normalized());
        for ((f, s), m) in fused.scores.iter().zip(&ns.scores).zip(&nm.scores) {
            prop_assert!(*f <= s.min(*m) + 1e-12);
            prop_assert!((0.0..=1.0).contains(f));
        }
    }

    #[test]
    fn grf_mad_follows_translation(latent in field(2, 4, 4), kind in kind(), di in 0usize..4, dj in 0usize..4) {
        let prior = Prior::Grf(GrfPrior::<f64>::new(GrfParams { kind, range: 1.4, variance: 0.8, smoothness: 1.5 }, (4, 4)).unwrap());
        let moved = LatentField::new(roll(latent.mean(), di, dj), roll(latent.logvar(), di, dj)).unwrap();
        let a = mad_map(&latent, &prior, (4, 4)).unwrap().scores.insert_axis(Axis(0));
        let b = mad_map(&moved, &prior, (4, 4)).unwrap().scores;
        let expected = roll(&a, di, dj).index_axis_move(Axis(0), 0);
        prop_assert!((&expected - &b).iter().all(|d| d.abs() < 1e-9));
    }

    #[test]
    fn flipped_labels_complement_the_auc(raw in proptest::collection::vec((0u8..30, any::<bool>()), 2..150)) {
        let scores: Vec<f64> = raw.iter().map(|r| r.0 as f64).collect();
        let labels: Vec<bool> = raw.iter().map(|r| r.1).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        prop_assert_eq!(roc_auc(&scores, &labels).unwrap() + roc_auc(&scores, &flipped).unwrap(), 1.0);
    }

    #[test]
    fn pixel_auc_ignores_normalization(
        values in proptest::collection::vec(0.0..5.0f64, 64),
        mask in proptest::collection::vec(any::<bool>(), 64),
    ) {
        prop_assume!(mask.iter().any(|&m| m) && mask.iter().any(|&m| !m));
        let map = AnomalyMap::raw(Array2::from_shape_vec((8, 8), values).unwrap(), MapSource::Fused);
        let mask = Array2::from_shape_vec((8, 8), mask).unwrap();
        prop_assume!(map.scores.iter().any(|&v| v != map.scores[[0, 0]]));
        prop_assert_eq!(pixel_rocauc(&map, &mask).unwrap(), pixel_rocauc(&map.normalized(), &mask).unwrap());
    }
}

#[test]
fn loaded_masks_are_binary_and_cover_anomalies() {
    let index = &FIXTURE.1;
    for entry in index.entries(Split::Test) {
        let sample = load_sample::<f64>(entry, 16).unwrap();
        assert!(sample.pixels.iter().all(|v| (0.0..=1.0).contains(v)));
        if let Some(mask) = &sample.mask {
            assert!(mask.iter().any(|&m| m));
        }
    }
}
