use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use vae_anomaly::checkpoint::{self, CheckpointMeta};
use vae_anomaly::data::{
    list_categories, load_image, save_image, scan_dataset, DatasetIndex, DatasetKind, Split,
};
use vae_anomaly::eval::{evaluate_category, EvalOptions};
use vae_anomaly::maps::{upsample_bilinear, AnomalyMap, SsmConfig};
use vae_anomaly::nn::{Architecture, ModelScorer};
use vae_anomaly::report::{render_report, Group};
use vae_anomaly::train::{losses_csv, train as fit};
use vae_anomaly::VaeF32;

use crate::config::{self, Overrides, Preset, RunConfig};
use crate::manifest::{now, CategoryRecord, RunManifest, TrainingRecord};
use crate::Usage;

pub const MANIFEST: &str = "manifest.json";
pub const EVALUATION_MANIFEST: &str = "evaluation.json";
pub const CHECKPOINT: &str = "model.safetensors";
pub const LOSSES: &str = "losses.csv";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";

fn existing_root(root: Option<&Path>) -> Result<PathBuf> {
    let root =
        root.ok_or_else(|| Usage("no dataset root: pass --dataset-root or set data.root".into()))?;
    if !root.is_dir() {
        return Err(Usage(format!("dataset root not found: {}", root.display())).into());
    }
    Ok(std::path::absolute(root)?)
}

fn fresh_out_dir(out: &Path, manifest: &str) -> Result<PathBuf> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let out = std::path::absolute(out)?;
    if out.join(manifest).exists() {
        return Err(Usage(format!(
            "{} already holds {manifest}; choose another --out",
            out.display()
        ))
        .into());
    }
    Ok(out)
}

fn record(index: &DatasetIndex) -> CategoryRecord {
    CategoryRecord {
        name: index.category.clone(),
        train_images: index.len(Split::Train),
        test_images: index.len(Split::Test),
        anomalous_images: index.test_entries.iter().filter(|e| !e.is_good()).count(),
    }
}

pub fn train(config_path: Option<&Path>, overrides: &Overrides, out: &Path) -> Result<()> {
    let started = now();
    let file = config_path.map(config::read_file).transpose()?;
    let cfg = config::resolve(file, overrides)?;
    let root = existing_root(cfg.data.root.as_deref())?;
    let categories = if cfg.data.categories.is_empty() {
        list_categories(&root)?
    } else {
        cfg.data.categories.clone()
    };
    if categories.is_empty() {
        return Err(Usage(format!("no categories under {}", root.display())).into());
    }
    let indexes = categories
        .iter()
        .map(|c| scan_dataset(&root, cfg.data.kind, c))
        .collect::<Result<Vec<_>, _>>()?;
    let out = fresh_out_dir(out, MANIFEST)?;

    let mut manifest = RunManifest::new("train", cfg.clone(), root.clone(), started);
    let train_cfg = cfg.train_config();
    for index in &indexes {
        let category = &index.category;
        let model = VaeF32::new(cfg.model.clone(), cfg.seed)?;
        eprintln!(
            "training {} on {category}: {} images, {} epochs",
            cfg.model.architecture,
            index.len(Split::Train),
            train_cfg.epochs
        );
        let stats = fit(&model, index, &train_cfg, |epoch, loss| {
            eprintln!(
                "  epoch {epoch:>4}  total {:.4}  reconstruction {:.4}  kl {:.4}",
                loss.total, loss.reconstruction, loss.kl
            );
        })?;
        let dir = out.join(category);
        fs::create_dir_all(&dir)?;
        let losses = dir.join(LOSSES);
        fs::write(&losses, losses_csv(&stats))
            .with_context(|| format!("cannot write {}", losses.display()))?;
        let ckpt = dir.join(CHECKPOINT);
        let extra = HashMap::from([
            ("category".to_string(), category.clone()),
            (
                "dataset_root".to_string(),
                root.to_string_lossy().into_owned(),
            ),
            ("dataset_kind".to_string(), cfg.data.kind.to_string()),
        ]);
        checkpoint::save(&model, &ckpt, &extra)?;

        manifest.categories.push(record(index));
        manifest.checkpoints.insert(category.clone(), ckpt);
        manifest
            .outputs
            .insert(format!("losses/{category}"), losses);
        manifest.training.insert(
            category.clone(),
            TrainingRecord {
                epochs_completed: stats.epochs_completed,
                wall_clock_seconds: stats.wall_clock_seconds,
                final_loss: stats.epochs.last().copied(),
            },
        );
    }
    manifest.finished_at = now();
    let path = out.join(MANIFEST);
    manifest.write_new(&path)?;
    println!("{}", path.display());
    Ok(())
}

pub struct EvaluateArgs {
    pub checkpoints: Vec<PathBuf>,
    pub config: Option<PathBuf>,
    pub dataset_root: Option<PathBuf>,
    pub categories: Vec<String>,
    pub kind: Option<DatasetKind>,
    pub arch: Option<Architecture>,
    pub pooled: bool,
    pub out: PathBuf,
}

fn read_manifest(path: &Path) -> Result<RunManifest> {
    RunManifest::read(path)
        .map_err(|e| Usage(format!("{}: not a run manifest: {e:#}", path.display())).into())
}

/// Checkpoint path and the category to evaluate it on.
type Job = (PathBuf, String);

/// The jobs to run, with the manifest they came from if any.
fn evaluation_jobs(args: &EvaluateArgs) -> Result<(Vec<Job>, Option<RunManifest>)> {
    let manifest = match &args.config {
        Some(p) if p.extension().is_some_and(|e| e == "json") => Some(read_manifest(p)?),
        _ => None,
    };
    let mut jobs = Vec::new();
    if !args.checkpoints.is_empty() {
        for ckpt in &args.checkpoints {
            if !args.categories.is_empty() {
                jobs.extend(args.categories.iter().map(|c| (ckpt.clone(), c.clone())));
                continue;
            }
            let meta = checkpoint::read_meta(ckpt)?;
            let category = meta.extra.get("category").cloned().ok_or_else(|| {
                Usage(format!(
                    "{} does not name its category; pass --category",
                    ckpt.display()
                ))
            })?;
            jobs.push((ckpt.clone(), category));
        }
    } else if let Some(m) = &manifest {
        for (category, ckpt) in &m.checkpoints {
            if args.categories.is_empty() || args.categories.contains(category) {
                jobs.push((ckpt.clone(), category.clone()));
            }
        }
    }
    if jobs.is_empty() {
        return Err(Usage(
            "nothing to evaluate: pass --checkpoint or a training manifest via --config".into(),
        )
        .into());
    }
    Ok((jobs, manifest))
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let started = now();
    let (jobs, manifest) = evaluation_jobs(args)?;
    let toml_cfg = match (&args.config, &manifest) {
        (Some(p), None) => Some(config::resolve(
            Some(config::read_file(p)?),
            &Overrides::default(),
        )?),
        _ => None,
    };
    let base = manifest.as_ref().map(|m| &m.config).or(toml_cfg.as_ref());

    let mut models: BTreeMap<PathBuf, (VaeF32, CheckpointMeta)> = BTreeMap::new();
    for (ckpt, _) in &jobs {
        if models.contains_key(ckpt) {
            continue;
        }
        let (model, meta) =
            checkpoint::load::<f32>(ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
        if let Some(expected) = args.arch {
            if meta.config.architecture != expected {
                return Err(Usage(format!(
                    "architecture mismatch: --arch {expected} but {} holds a {} model",
                    ckpt.display(),
                    meta.config.architecture
                ))
                .into());
            }
        }
        models.insert(ckpt.clone(), (model, meta));
    }
    let first_meta = &models[&jobs[0].0].1;
    let root_hint = args
        .dataset_root
        .clone()
        .or_else(|| base.and_then(|c| c.data.root.clone()))
        .or_else(|| first_meta.extra.get("dataset_root").map(PathBuf::from));
    let root = existing_root(root_hint.as_deref())?;
    let kind = match (args.kind, base, first_meta.extra.get("dataset_kind")) {
        (Some(k), _, _) => k,
        (None, Some(c), _) => c.data.kind,
        (None, None, Some(k)) => k.parse().map_err(Usage)?,
        _ => DatasetKind::Mvtec,
    };
    let ssm = base.map(|c| c.ssm).unwrap_or_default();
    let options = EvalOptions {
        pooled: args.pooled,
    };
    let out = fresh_out_dir(&args.out, EVALUATION_MANIFEST)?;

    let mut results = Vec::new();
    let mut records = Vec::new();
    for (ckpt, category) in &jobs {
        let (model, _) = &models[ckpt];
        let index = scan_dataset(&root, kind, category)?.with_image_size(model.image_size());
        let scorer = ModelScorer::new(model).with_ssm(ssm)?;
        let result = evaluate_category(&scorer, &index, &options)?;
        let (value, spread) = result.headline();
        eprintln!(
            "{category:<14} {:<8} {value:.4} ± {spread:.4}",
            result.model_id
        );
        if !records.iter().any(|r: &CategoryRecord| r.name == *category) {
            records.push(record(&index));
        }
        results.push(result);
    }
    let report = render_report(&results, kind)?;
    let csv_path = out.join(REPORT_CSV);
    let txt_path = out.join(REPORT_TXT);
    fs::write(&csv_path, &report.csv)?;
    fs::write(&txt_path, &report.text)?;

    let mut cfg = match base {
        Some(c) => c.clone(),
        None => {
            let mut c = RunConfig::defaults(first_meta.config.architecture, Preset::Full);
            c.model = first_meta.config.clone();
            c.seed = first_meta.seed;
            c
        }
    };
    cfg.data.root = Some(root.clone());
    cfg.data.kind = kind;
    cfg.data.categories = records.iter().map(|r| r.name.clone()).collect();
    let mut m = RunManifest::new("evaluate", cfg, root, started);
    m.categories = records;
    for (ckpt, category) in &jobs {
        m.checkpoints.insert(category.clone(), ckpt.clone());
    }
    m.outputs.insert("report_csv".into(), csv_path);
    m.outputs.insert("report_txt".into(), txt_path);
    m.metrics = results;
    m.finished_at = now();
    m.write_new(&out.join(EVALUATION_MANIFEST))?;
    print!("{}", report.text);
    Ok(())
}

fn resized(map: &AnomalyMap<f32>, (h, w): (usize, usize)) -> AnomalyMap<f32> {
    if map.dim() == (h, w) {
        return map.clone();
    }
    AnomalyMap {
        scores: upsample_bilinear(&map.scores, (h, w)),
        ..map.clone()
    }
}

pub fn score(ckpt: &Path, image: &Path, config_path: Option<&Path>, out: &Path) -> Result<()> {
    let ssm = match config_path {
        Some(p) => config::resolve(Some(config::read_file(p)?), &Overrides::default())?.ssm,
        None => SsmConfig::default(),
    };
    let (model, _) =
        checkpoint::load::<f32>(ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    let (pixels, (width, height)) = load_image::<f32>(image, model.image_size())?;
    let scored = ModelScorer::new(&model)
        .with_ssm(ssm)?
        .score_pixels(&pixels)?;

    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let stem = image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    let dims = (height as usize, width as usize);
    let ssm_map = resized(&scored.ssm.normalized(), dims);
    let mad_map = resized(&scored.mad.normalized(), dims);
    let fused = resized(&scored.fused, dims);
    ssm_map.save_png(&out.join(format!("{stem}_ssm.png")))?;
    mad_map.save_png(&out.join(format!("{stem}_mad.png")))?;
    fused.save_png(&out.join(format!("{stem}_fused.png")))?;
    fused.save_f32(&out.join(format!("{stem}_fused.f32")))?;
    save_image(
        &scored.reconstruction,
        (width, height),
        &out.join(format!("{stem}_recon.png")),
    )?;
    println!(
        "{stem}: fused mean {:.4}, max {:.4}",
        fused.mean(),
        fused.scores.iter().fold(0.0f32, |m, &v| m.max(v))
    );
    Ok(())
}

pub fn list_datasets(root: Option<&Path>, kind: DatasetKind) -> Result<()> {
    let root = existing_root(root)?;
    let categories = list_categories(&root)?;
    if categories.is_empty() {
        println!("no categories under {}", root.display());
        return Ok(());
    }
    println!(
        "{:<16} {:<12} {:>6} {:>6} {:>10}",
        "category", "group", "train", "test", "anomalous"
    );
    for category in categories {
        match scan_dataset(&root, kind, &category) {
            Ok(index) => {
                let r = record(&index);
                println!(
                    "{:<16} {:<12} {:>6} {:>6} {:>10}",
                    r.name,
                    Group::of(kind, &category).label(),
                    r.train_images,
                    r.test_images,
                    r.anomalous_images
                );
            }
            Err(e) => println!("{category:<16} unusable: {e}"),
        }
    }
    Ok(())
}
