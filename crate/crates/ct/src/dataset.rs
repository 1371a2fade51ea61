//! Training-time access to a prepared split.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use swinct_core::train::{Batch, Dataset, Targets};
use swinct_core::CoreError;
use swinct_tensor::io::TensorData;
use swinct_tensor::Tensor;

use crate::augment::AugPlan;
use crate::error::{CtError, Result};
use crate::slicing::{Label, SliceRecord};
use crate::store::{SliceStore, SplitManifest, Task, SLICES_DIR};

/// Per-channel statistics the loader standardizes with. These are the
/// usual ImageNet values, so converted ImageNet weights see familiar inputs.
pub const CHANNEL_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const CHANNEL_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// Maps a grey value in [0, 1] to the three standardized channels.
pub fn standardize(v: f32) -> [f64; 3] {
    std::array::from_fn(|c| (v as f64 - CHANNEL_MEAN[c]) / CHANNEL_STD[c])
}

/// One split held in memory as grey images with class or mask labels.
#[derive(Debug, Clone)]
pub struct SliceDataset {
    size: usize,
    images: Vec<Vec<f32>>,
    labels: Vec<Label>,
}

impl SliceDataset {
    /// Loads split `name` of the dataset in `dir`.
    pub fn open(dir: &Path, name: &str) -> Result<Self> {
        let manifest = SplitManifest::read(dir)?;
        let store = SliceStore::new(dir.join(SLICES_DIR));
        let size = manifest.image_size;
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for entry in manifest.split(name)? {
            let t = store.get(&entry.image)?;
            let TensorData::F32(rgb) = &t.data else {
                return Err(CtError::data(format!("slice {} is not f32", entry.image)));
            };
            if t.shape != [size, size, 3] {
                return Err(CtError::data(format!("slice {} has shape {:?}, expected [{size}, {size}, 3]", entry.image, t.shape)));
            }
            images.push(rgb.iter().step_by(3).copied().collect());
            labels.push(match (manifest.task, entry.class, &entry.mask) {
                (Task::Classification, Some(c), _) => Label::Class(c),
                (Task::Segmentation, _, Some(key)) => {
                    let m = store.get(key)?;
                    match m.data {
                        TensorData::U8(v) if m.shape == [size, size] => Label::Mask(v),
                        _ => return Err(CtError::data(format!("mask {key} is not a [{size}, {size}] u8 tensor"))),
                    }
                }
                _ => return Err(CtError::data(format!("record {:?} has no label for the task", entry.provenance))),
            });
        }
        Ok(Self { size, images, labels })
    }

    /// Builds a dataset from square records of equal size.
    pub fn from_records(records: &[SliceRecord]) -> Result<Self> {
        let size = records.first().map_or(0, |r| r.height);
        if let Some(r) = records.iter().find(|r| r.height != size || r.width != size) {
            return Err(CtError::data(format!("record {:?} is {}x{}, expected {size}x{size}", r.provenance, r.height, r.width)));
        }
        Ok(Self {
            size,
            images: records.iter().map(|r| r.image.clone()).collect(),
            labels: records.iter().map(|r| r.label.clone()).collect(),
        })
    }

    pub fn image_size(&self) -> usize {
        self.size
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }
}

impl Dataset for SliceDataset {
    fn len(&self) -> usize {
        self.images.len()
    }

    /// With `augment`, each sample gets its own plan drawn in index order.
    /// Images leave standardized with [`CHANNEL_MEAN`] and [`CHANNEL_STD`].
    fn batch(&self, indices: &[usize], mut augment: Option<&mut ChaCha8Rng>) -> swinct_core::Result<Batch> {
        let n = self.size * self.size;
        let mut pixels = Vec::with_capacity(indices.len() * n * 3);
        let mut classes = Vec::new();
        let mut masks = Vec::new();
        for &i in indices {
            let (Some(image), Some(label)) = (self.images.get(i), self.labels.get(i)) else {
                return Err(CoreError::Usage(format!("sample {i} outside a dataset of {}", self.len())));
            };
            let mut image = image.clone();
            let mut mask = match label {
                Label::Class(c) => {
                    classes.push(*c as usize);
                    None
                }
                Label::Mask(m) => Some(m.clone()),
            };
            if let Some(rng) = augment.as_deref_mut() {
                AugPlan::sample(rng, self.size).apply_arrays(&mut image, mask.as_mut(), self.size, self.size);
            }
            if let Some(m) = mask {
                masks.extend(m.into_iter().map(usize::from));
            }
            pixels.extend(image.iter().flat_map(|&v| standardize(v)));
        }
        let images = Tensor::from_vec(&[indices.len(), self.size, self.size, 3], pixels)?;
        let targets = if masks.is_empty() && !classes.is_empty() || indices.is_empty() {
            Targets::Classes(classes)
        } else if classes.is_empty() {
            Targets::Masks(masks)
        } else {
            return Err(CoreError::Usage("dataset mixes class and mask labels".into()));
        };
        Ok(Batch { images, targets })
    }
}
