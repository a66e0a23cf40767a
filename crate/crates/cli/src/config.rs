//! Run configuration: preset defaults, then the config file, then flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};
use vae_anomaly::data::DatasetKind;
use vae_anomaly::maps::SsmConfig;
use vae_anomaly::nn::{Architecture, ModelConfig};
use vae_anomaly::train::TrainConfig;

use crate::manifest::RunManifest;
use crate::Usage;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Full-scale models and the default 100-epoch schedule.
    #[default]
    Full,
    /// 64-pixel models for quick CPU runs.
    Smoke,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
    pub kind: DatasetKind,
    pub categories: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    /// Root of all randomness: initialization, shuffling and noise.
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub ssm: SsmConfig,
}

impl RunConfig {
    pub fn defaults(architecture: Architecture, preset: Preset) -> Self {
        let (model, train) = match preset {
            Preset::Full => {
                let t = TrainConfig::default();
                (
                    ModelConfig::for_architecture(architecture),
                    TrainSection {
                        epochs: t.epochs,
                        batch_size: t.batch_size,
                        learning_rate: t.learning_rate,
                    },
                )
            }
            Preset::Smoke => (
                ModelConfig::smoke(architecture),
                TrainSection {
                    epochs: 5,
                    batch_size: 8,
                    learning_rate: 1e-3,
                },
            ),
        };
        Self {
            preset,
            seed: 0,
            data: DataConfig {
                root: None,
                kind: DatasetKind::Mvtec,
                categories: Vec::new(),
            },
            model,
            train,
            ssm: SsmConfig::default(),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), Usage> {
        let field = |name: &str, e: vae_anomaly::Error| Usage(format!("{name}: {e}"));
        self.model.validate().map_err(|e| field("model", e))?;
        self.train_config()
            .validate()
            .map_err(|e| field("train", e))?;
        self.ssm.validate().map_err(|e| field("ssm", e))?;
        Ok(())
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub architecture: Option<Architecture>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub dataset_root: Option<PathBuf>,
    pub kind: Option<DatasetKind>,
    pub categories: Vec<String>,
}

/// Recursively overlays `top` onto `base`; tables merge, everything else is
/// replaced.
pub fn deep_merge(base: &mut Table, top: Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(t)) => deep_merge(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Reads a TOML config file, or a JSON run manifest whose config is reused.
pub fn read_file(path: &Path) -> Result<Table, Usage> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Usage(format!("cannot read config {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let manifest: RunManifest = serde_json::from_str(&text)
            .map_err(|e| Usage(format!("{}: not a run manifest: {e}", path.display())))?;
        return to_table(&manifest.config);
    }
    text.parse::<Table>()
        .map_err(|e| Usage(format!("{}: {e}", path.display())))
}

fn to_table<S: Serialize>(value: &S) -> Result<Table, Usage> {
    Table::try_from(value).map_err(|e| Usage(format!("cannot serialize config: {e}")))
}

fn lookup<'a>(table: &'a Table, path: &[&str]) -> Option<&'a Value> {
    let (last, parents) = path.split_last()?;
    let mut t = table;
    for p in parents {
        t = t.get(*p)?.as_table()?;
    }
    t.get(*last)
}

fn section<'a>(table: &'a mut Table, name: &str) -> &'a mut Table {
    let entry = table
        .entry(name)
        .or_insert_with(|| Value::Table(Table::new()));
    if !entry.is_table() {
        *entry = Value::Table(Table::new());
    }
    entry.as_table_mut().expect("just made a table")
}

/// Builds the effective configuration. Defaults come from the preset and
/// architecture named by the flags or the file.
pub fn resolve(file: Option<Table>, overrides: &Overrides) -> Result<RunConfig, Usage> {
    let file = file.unwrap_or_default();
    let parse_key = |path: &[&str]| -> Result<Option<String>, Usage> {
        match lookup(&file, path) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(other) => Err(Usage(format!(
                "{}: expected a string, got {other}",
                path.join(".")
            ))),
        }
    };
    let architecture = match (
        overrides.architecture,
        parse_key(&["model", "architecture"])?,
    ) {
        (Some(a), _) => a,
        (None, Some(s)) => s
            .parse()
            .map_err(|e| Usage(format!("model.architecture: {e}")))?,
        (None, None) => Architecture::Vae,
    };
    let preset = match parse_key(&["preset"])?.as_deref() {
        None | Some("full") => Preset::Full,
        Some("smoke") => Preset::Smoke,
        Some(other) => {
            return Err(Usage(format!(
                "preset: unknown preset {other:?} (expected full or smoke)"
            )))
        }
    };

    let mut merged = to_table(&RunConfig::defaults(architecture, preset))?;
    deep_merge(&mut merged, file);

    let o = overrides;
    section(&mut merged, "model").insert(
        "architecture".into(),
        Value::String(architecture.to_string()),
    );
    if let Some(seed) = o.seed {
        merged.insert("seed".into(), Value::Integer(seed as i64));
    }
    let train = section(&mut merged, "train");
    if let Some(epochs) = o.epochs {
        train.insert("epochs".into(), Value::Integer(epochs as i64));
    }
    if let Some(batch) = o.batch_size {
        train.insert("batch_size".into(), Value::Integer(batch as i64));
    }
    let data = section(&mut merged, "data");
    if let Some(root) = &o.dataset_root {
        data.insert(
            "root".into(),
            Value::String(root.to_string_lossy().into_owned()),
        );
    }
    if let Some(kind) = o.kind {
        data.insert("kind".into(), Value::String(kind.to_string()));
    }
    if !o.categories.is_empty() {
        let list = o.categories.iter().cloned().map(Value::String).collect();
        data.insert("categories".into(), Value::Array(list));
    }

    let mut config: RunConfig = serde_path_to_error::deserialize(Value::Table(merged))
        .map_err(|e| Usage(format!("{}: {}", e.path(), e.inner())))?;
    config.model.sync_vit();
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(text: &str) -> Table {
        text.parse().unwrap()
    }

    #[test]
    fn defaults_are_full_scale() {
        let cfg = resolve(None, &Overrides::default()).unwrap();
        assert_eq!(cfg.train.epochs, 100);
        assert_eq!(cfg.train.batch_size, 8);
        assert_eq!(cfg.train.learning_rate, 1e-4);
        assert_eq!(cfg.model.beta, 1.0);
        assert_eq!(cfg.model.z_channels, 256);
        assert_eq!(cfg.model.latent_spatial, 32);
        let vit = resolve(
            None,
            &Overrides {
                architecture: Some(Architecture::VitVae),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!((vit.model.z_channels, vit.model.latent_spatial), (384, 14));
    }

    #[test]
    fn file_overlays_defaults_and_flags_overlay_file() {
        let file = table(
            r#"
            seed = 4
            [train]
            epochs = 7
            [model]
            architecture = "vae-grf"
            [model.prior]
            type = "grf"
            kind = "exponential"
            range = 2.0
            variance = 1.0
            "#,
        );
        let cfg = resolve(Some(file.clone()), &Overrides::default()).unwrap();
        assert_eq!(
            (cfg.seed, cfg.train.epochs, cfg.train.batch_size),
            (4, 7, 8)
        );
        assert_eq!(cfg.model.architecture, Architecture::VaeGrf);
        assert_eq!(cfg.model.z_channels, 256);

        let flags = Overrides {
            seed: Some(9),
            epochs: Some(2),
            categories: vec!["carpet".into()],
            ..Default::default()
        };
        let cfg = resolve(Some(file), &flags).unwrap();
        assert_eq!((cfg.seed, cfg.train.epochs), (9, 2));
        assert_eq!(cfg.data.categories, vec!["carpet".to_string()]);
    }

    #[test]
    fn smoke_preset_shrinks_the_model() {
        let cfg = resolve(Some(table("preset = \"smoke\"")), &Overrides::default()).unwrap();
        assert_eq!(cfg.model, ModelConfig::smoke(Architecture::Vae));
        assert_eq!(cfg.train.learning_rate, 1e-3);
    }

    #[test]
    fn errors_name_the_field() {
        let err = resolve(
            Some(table("[train]\nepochs = \"ten\"")),
            &Overrides::default(),
        )
        .unwrap_err();
        assert!(err.0.contains("train.epochs"), "{err}");
        let err = resolve(Some(table("[train]\nepoch = 3")), &Overrides::default()).unwrap_err();
        assert!(err.0.contains("epoch"), "{err}");
        let err = resolve(
            Some(table("[train]\nbatch_size = 0")),
            &Overrides::default(),
        )
        .unwrap_err();
        assert!(err.0.starts_with("train:"), "{err}");
        let err = resolve(
            Some(table("[model]\narchitecture = \"gan\"")),
            &Overrides::default(),
        )
        .unwrap_err();
        assert!(err.0.contains("model.architecture"), "{err}");
    }

    #[test]
    fn deep_merge_keeps_sibling_keys() {
        let mut base = table("[a]\nx = 1\ny = 2\n[b]\nz = 3");
        deep_merge(&mut base, table("[a]\ny = 5"));
        assert_eq!(base, table("[a]\nx = 1\ny = 5\n[b]\nz = 3"));
    }

    #[test]
    fn config_round_trips_through_toml() {
        for arch in Architecture::ALL {
            let cfg = RunConfig::defaults(arch, Preset::Full);
            let text = toml::to_string(&cfg).unwrap();
            let back = resolve(Some(table(&text)), &Overrides::default()).unwrap();
            assert_eq!(back, cfg);
        }
    }
}
