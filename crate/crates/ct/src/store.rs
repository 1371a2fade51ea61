//! Content-addressed SWT1 slice storage and the dataset manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use swinct_tensor::io::{write_atomic, RawTensor, TensorData};

use crate::error::{CtError, Result};
use crate::slicing::{Label, Provenance, SliceRecord, HU_WINDOW};
use crate::splits::SplitPlan;

pub const DATASET_FORMAT: &str = "swinct-dataset-1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";
pub const SLICES_DIR: &str = "slices";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Segmentation,
}

impl std::str::FromStr for Task {
    type Err = CtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(Task::Classification),
            "segmentation" => Ok(Task::Segmentation),
            other => Err(CtError::Usage(format!("unknown task `{other}`"))),
        }
    }
}

/// Files holding tensors, named by the SHA-256 of their encoded bytes.
#[derive(Debug, Clone)]
pub struct SliceStore {
    dir: PathBuf,
}

impl SliceStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_of(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.swt"))
    }

    /// Stores `t` and returns its key. Identical tensors share one file.
    pub fn put(&self, t: &RawTensor) -> Result<String> {
        let (key, bytes) = blob(t)?;
        let path = self.path_of(&key);
        if !path.exists() {
            write_atomic(&path, &bytes).map_err(|e| CtError::io(&path, e))?;
        }
        Ok(key)
    }

    /// Writes pre-encoded blobs directly. Only for directories no reader can
    /// see yet, since files are not written atomically.
    pub fn put_staged(&self, blobs: &[(String, Vec<u8>)]) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| CtError::io(&self.dir, e))?;
        for (key, bytes) in blobs {
            let path = self.path_of(key);
            if !path.exists() {
                fs::write(&path, bytes).map_err(|e| CtError::io(&path, e))?;
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<RawTensor> {
        let path = self.path_of(key);
        let t = RawTensor::read(&path).map_err(|e| CtError::format(&path, e))?;
        let bytes = t.encode().map_err(|e| CtError::format(&path, e))?;
        if hex::encode(Sha256::digest(&bytes)) != key {
            return Err(CtError::data(format!("{} does not match its content hash", path.display())));
        }
        Ok(t)
    }
}

/// One stored slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub provenance: Provenance,
    /// Classification label.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub class: Option<u8>,
    /// Key of the `[H, W, 3]` f32 image.
    pub image: String,
    /// Key of the `[H, W]` u8 mask, for segmentation.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mask: Option<String>,
}

/// Encoded tensor files keyed by content hash.
pub type Blobs = Vec<(String, Vec<u8>)>;

fn blob(t: &RawTensor) -> Result<(String, Vec<u8>)> {
    let bytes = t.encode().map_err(|e| CtError::format(SLICES_DIR, e))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes))
}

impl RecordEntry {
    /// Encodes the record's tensors without touching the disk.
    pub fn encode(rec: &SliceRecord) -> Result<(Self, Blobs)> {
        let (h, w) = (rec.height, rec.width);
        let shape_err = |e| CtError::format(SLICES_DIR, e);
        let image = blob(&RawTensor::new(vec![h, w, 3], TensorData::F32(rec.rgb())).map_err(shape_err)?)?;
        let mut blobs = Vec::new();
        let (class, mask) = match &rec.label {
            Label::Class(c) => (Some(*c), None),
            Label::Mask(m) => {
                let b = blob(&RawTensor::new(vec![h, w], TensorData::U8(m.clone())).map_err(shape_err)?)?;
                let key = b.0.clone();
                blobs.push(b);
                (None, Some(key))
            }
        };
        let entry = Self { provenance: rec.provenance.clone(), class, image: image.0.clone(), mask };
        blobs.insert(0, image);
        Ok((entry, blobs))
    }
}

/// The prepared dataset: settings and the records of each split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitManifest {
    pub format: String,
    pub task: Task,
    pub seed: u64,
    pub image_size: usize,
    /// HU range mapped onto `[0, 1]`.
    pub hu_window: [f32; 2],
    pub resize: String,
    /// Declared positive:negative ratios (classification) or split
    /// proportions (segmentation), in train/val/test order.
    pub ratios: [f64; 3],
    pub plan: SplitPlan,
    pub train: Vec<RecordEntry>,
    pub val: Vec<RecordEntry>,
    pub test: Vec<RecordEntry>,
}

impl SplitManifest {
    pub fn new(task: Task, seed: u64, image_size: usize, ratios: [f64; 3], plan: SplitPlan) -> Self {
        Self {
            format: DATASET_FORMAT.into(),
            task,
            seed,
            image_size,
            hu_window: [HU_WINDOW.0, HU_WINDOW.1],
            resize: "bicubic (Catmull-Rom) for images, nearest for masks".into(),
            ratios,
            plan,
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        }
    }

    pub fn split(&self, name: &str) -> Result<&[RecordEntry]> {
        match name {
            "train" => Ok(&self.train),
            "val" => Ok(&self.val),
            "test" => Ok(&self.test),
            other => Err(CtError::Usage(format!("unknown split `{other}`"))),
        }
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = fs::read(&path).map_err(|e| CtError::io(&path, e))?;
        let m: SplitManifest =
            serde_json::from_slice(&bytes).map_err(|e| CtError::data(format!("{}: {e}", path.display())))?;
        if m.format != DATASET_FORMAT {
            return Err(CtError::data(format!("{}: unknown dataset format `{}`", path.display(), m.format)));
        }
        Ok(m)
    }
}

/// Per-split counts written next to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub records: usize,
    pub positives: usize,
    pub negatives: usize,
    pub volumes: usize,
    /// Positives per negative, when there are negatives.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareReport {
    pub task: Task,
    pub seed: u64,
    pub candidate_positives: usize,
    pub candidate_negatives: usize,
    pub train: SplitCounts,
    pub val: SplitCounts,
    pub test: SplitCounts,
    /// Volumes that appear in more than one split.
    pub shared_volumes: usize,
}
