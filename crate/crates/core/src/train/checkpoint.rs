//! Checkpoint directories: `manifest.json` plus one SWT1 file per parameter.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use swinct_tensor::io::{write_atomic, DType, RawTensor};

use crate::error::{CoreError, Result};
use crate::model::{ModelConfig, SwinModel};
use crate::params::ParamStore;

pub const CHECKPOINT_FORMAT: &str = "swinct-checkpoint-1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub config: ModelConfig,
    pub step: u64,
    pub params: Vec<ParamRecord>,
}

/// Writes `params` under `dir`, replacing any previous checkpoint there.
/// The manifest is written last, so a directory with a manifest is complete.
pub fn save(dir: &Path, config: &ModelConfig, params: &ParamStore, step: u64) -> Result<()> {
    let staging = staging_dir(dir)?;
    let mut records = Vec::with_capacity(params.len());
    for e in params.entries() {
        let file = format!("{}.swt", e.name);
        RawTensor::from_tensor(&e.value, DType::F64).write(staging.join(&file))?;
        records.push(ParamRecord { name: e.name.clone(), shape: e.value.shape().to_vec(), file });
    }
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.into(),
        config: config.clone(),
        step,
        params: records,
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_atomic(&staging.join("manifest.json"), &json).map_err(|e| CoreError::io(&staging, e))?;
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    }
    fs::rename(&staging, dir).map_err(|e| CoreError::io(dir, e))
}

fn staging_dir(dir: &Path) -> Result<PathBuf> {
    let parent = dir.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(|e| CoreError::io(parent, e))?;
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let staging = parent.join(format!(".{name}.partial{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| CoreError::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| CoreError::io(&staging, e))?;
    Ok(staging)
}

pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest> {
    let path = dir.join("manifest.json");
    let bytes = fs::read(&path).map_err(|e| CoreError::io(&path, e))?;
    let manifest: CheckpointManifest = serde_json::from_slice(&bytes)
        .map_err(|e| CoreError::Checkpoint { path: path.clone(), msg: e.to_string() })?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(CoreError::Checkpoint { path, msg: format!("unknown format `{}`", manifest.format) });
    }
    Ok(manifest)
}

/// Rebuilds the model stored in `dir`.
pub fn load(dir: &Path) -> Result<(SwinModel, u64)> {
    let manifest = read_manifest(dir)?;
    let mut model = SwinModel::new(manifest.config.clone(), 0)?;
    let report = load_params(dir, &manifest, &mut model.params)?;
    if !report.missing.is_empty() || !report.unexpected.is_empty() {
        return Err(CoreError::Checkpoint {
            path: dir.to_path_buf(),
            msg: format!("missing {:?}, unexpected {:?}", report.missing, report.unexpected),
        });
    }
    Ok((model, manifest.step))
}

/// Outcome of loading a checkpoint into an existing model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub loaded: Vec<String>,
    /// Model parameters absent from the checkpoint.
    pub missing: Vec<String>,
    /// Checkpoint parameters the model does not have.
    pub unexpected: Vec<String>,
}

/// Copies matching parameters from the checkpoint at `dir` into `params`.
///
/// Any parameter present on both sides with a different shape is an error
/// listing every such mismatch; names present on one side only are reported.
pub fn init_from(dir: &Path, params: &mut ParamStore) -> Result<LoadReport> {
    let manifest = read_manifest(dir)?;
    load_params(dir, &manifest, params)
}

fn load_params(dir: &Path, manifest: &CheckpointManifest, params: &mut ParamStore) -> Result<LoadReport> {
    let mismatches: Vec<String> = manifest
        .params
        .iter()
        .filter_map(|r| {
            let id = params.find(&r.name)?;
            let have = params.get(id).shape();
            (have != r.shape.as_slice()).then(|| format!("{}: checkpoint {:?}, model {:?}", r.name, r.shape, have))
        })
        .collect();
    if !mismatches.is_empty() {
        return Err(CoreError::Checkpoint {
            path: dir.to_path_buf(),
            msg: format!("incompatible parameter shapes:\n  {}", mismatches.join("\n  ")),
        });
    }
    let mut report = LoadReport::default();
    for r in &manifest.params {
        let Some(id) = params.find(&r.name) else {
            report.unexpected.push(r.name.clone());
            continue;
        };
        let tensor = RawTensor::read(dir.join(&r.file))?.to_tensor();
        params.set(id, tensor)?;
        report.loaded.push(r.name.clone());
    }
    report.missing = params
        .entries()
        .iter()
        .filter(|e| !manifest.params.iter().any(|r| r.name == e.name))
        .map(|e| e.name.clone())
        .collect();
    Ok(report)
}
