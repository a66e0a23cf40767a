//! Safetensors checkpoints: parameters keyed by name, with the model config,
//! seed and dtype in the header metadata.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use safetensors::SafeTensors;

use crate::error::{Error, Result};
use crate::nn::{ModelConfig, Vae};
use crate::Scalar;

pub const FORMAT: &str = "vae-anomaly/1";

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointMeta {
    pub config: ModelConfig,
    pub seed: u64,
    pub dtype: String,
    /// Free-form entries stored next to the required ones.
    pub extra: HashMap<String, String>,
}

fn dtype_name(dtype: DType) -> &'static str {
    match dtype {
        DType::F32 => "f32",
        DType::F64 => "f64",
        _ => "other",
    }
}

pub fn save<T: Scalar>(model: &Vae<T>, path: &Path, extra: &HashMap<String, String>) -> Result<()> {
    let mut meta = extra.clone();
    meta.insert("format".into(), FORMAT.into());
    meta.insert(
        "config".into(),
        serde_json::to_string(model.config()).map_err(|e| Error::Checkpoint(e.to_string()))?,
    );
    meta.insert("seed".into(), model.seed().to_string());
    meta.insert("dtype".into(), dtype_name(model.dtype()).into());
    let tensors: Vec<(String, Tensor)> = model
        .named_vars()
        .into_iter()
        .map(|(name, var)| (name, var.as_tensor().clone()))
        .collect();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    safetensors::serialize_to_file(tensors, Some(meta), path)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

fn parse_meta(header: &HashMap<String, String>) -> Result<CheckpointMeta> {
    let get = |key: &str| {
        header
            .get(key)
            .ok_or_else(|| Error::Checkpoint(format!("metadata entry `{key}` missing")))
    };
    if get("format")? != FORMAT {
        return Err(Error::Checkpoint(format!(
            "unknown format {}",
            get("format")?
        )));
    }
    let config: ModelConfig = serde_json::from_str(get("config")?)
        .map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
    let seed = get("seed")?
        .parse()
        .map_err(|e| Error::Checkpoint(format!("seed: {e}")))?;
    let dtype = get("dtype")?.clone();
    let extra = header
        .iter()
        .filter(|(k, _)| !matches!(k.as_str(), "format" | "config" | "seed" | "dtype"))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    Ok(CheckpointMeta {
        config,
        seed,
        dtype,
        extra,
    })
}

/// Reads only the metadata of a checkpoint.
pub fn read_meta(path: &Path) -> Result<CheckpointMeta> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (_, metadata) = SafeTensors::read_metadata(&bytes)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    let header = metadata
        .metadata()
        .clone()
        .ok_or_else(|| Error::Checkpoint(format!("{} has no metadata", path.display())))?;
    parse_meta(&header)
}

/// Rebuilds the model recorded in a checkpoint. Parameters stored at another
/// precision are converted to `T`.
pub fn load<T: Scalar>(path: &Path) -> Result<(Vae<T>, CheckpointMeta)> {
    let meta = read_meta(path)?;
    let model = Vae::<T>::new(meta.config.clone(), meta.seed)?;
    let stored = candle_core::safetensors::load(path, &Device::Cpu)?;
    let vars = model.named_vars();
    if stored.len() != vars.len() {
        return Err(Error::Checkpoint(format!(
            "{} holds {} tensors, the model has {}",
            path.display(),
            stored.len(),
            vars.len()
        )));
    }
    for (name, var) in vars {
        let tensor = stored
            .get(&name)
            .ok_or_else(|| Error::Checkpoint(format!("parameter {name} missing")))?;
        if tensor.dims() != var.dims() {
            return Err(Error::Checkpoint(format!(
                "parameter {name} has shape {:?}, expected {:?}",
                tensor.dims(),
                var.dims()
            )));
        }
        var.set(&tensor.to_dtype(T::TENSOR_DTYPE)?)?;
    }
    Ok((model, meta))
}
