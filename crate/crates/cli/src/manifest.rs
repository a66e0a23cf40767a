use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vae_anomaly::eval::EvalResult;
use vae_anomaly::latent::LossBreakdown;

use crate::config::RunConfig;

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// How the reported maps are built, so results stay attributable.
pub const MAP_DEFINITIONS: &str =
    "ssm = 1 - SSIM(x, posterior-mean reconstruction), averaged over channels; \
     mad = per-location KL of prior-whitened posterior marginals, bilinearly upsampled; \
     fused = product of per-image min-max normalized ssm and mad";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryRecord {
    pub name: String,
    pub train_images: usize,
    pub test_images: usize,
    pub anomalous_images: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub epochs_completed: usize,
    pub wall_clock_seconds: f64,
    pub final_loss: Option<LossBreakdown>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub config: RunConfig,
    /// Content hash of the config in the style of a git blob id, over SHA-256.
    pub config_hash: String,
    pub seed: u64,
    pub dataset_root: PathBuf,
    pub categories: Vec<CategoryRecord>,
    /// Checkpoint per category.
    pub checkpoints: BTreeMap<String, PathBuf>,
    pub started_at: String,
    pub finished_at: String,
    /// Written artifacts by role, e.g. `losses/<category>` or `report_csv`.
    pub outputs: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub training: BTreeMap<String, TrainingRecord>,
    #[serde(default)]
    pub metrics: Vec<EvalResult>,
    pub map_definitions: String,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: RunConfig,
        dataset_root: PathBuf,
        started_at: String,
    ) -> Self {
        Self {
            tool: TOOL.into(),
            tool_version: TOOL_VERSION.into(),
            command: command.into(),
            config_hash: config_hash(&config),
            seed: config.seed,
            config,
            dataset_root,
            categories: Vec::new(),
            checkpoints: BTreeMap::new(),
            started_at,
            finished_at: String::new(),
            outputs: BTreeMap::new(),
            training: BTreeMap::new(),
            metrics: Vec::new(),
            map_definitions: MAP_DEFINITIONS.into(),
        }
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Writes the manifest; refuses to replace an existing one.
    pub fn write_new(&self, path: &Path) -> anyhow::Result<()> {
        use std::io::Write;
        let mut f = std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(path)?;
        f.write_all(serde_json::to_string_pretty(self)?.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

/// `sha256("blob <len>\0" + canonical JSON)` as lowercase hex.
pub fn config_hash(config: &RunConfig) -> String {
    let body = serde_json::to_string(config).expect("config serializes");
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", body.len()));
    h.update(body.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
