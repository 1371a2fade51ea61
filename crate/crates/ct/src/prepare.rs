//! End-to-end dataset preparation: volumes and annotations in, split slice
//! records out, written as a content-addressed store plus manifest.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use swinct_core::train::derive_seed;
use swinct_tensor::io::write_atomic;

use crate::error::{CtError, Result};
use crate::phantom::make_case;
use crate::sampling::{expand_positives, subsample_negatives};
use crate::slicing::{crop, crop_nodule, slice_triaxial_at, Cube, SliceLabel, SliceRecord, CROP_SIZE};
use crate::splits::{
    build_splits_classification, build_splits_segmentation, RecordMeta, SplitPlan, CLASSIFICATION_RATIOS,
};
use crate::store::{
    Blobs, PrepareReport, RecordEntry, SliceStore, SplitCounts, SplitManifest, Task, MANIFEST_FILE, REPORT_FILE,
    SLICES_DIR,
};
use crate::volume::{load_volume, read_annotations, NoduleAnnotation, Volume};

const STREAM_NEGATIVES: u64 = 41;
const MAX_NEGATIVE_DRAWS: usize = 1000;

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "SWINCT_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepareOptions {
    pub task: Task,
    /// Side of the stored slices.
    pub image_size: usize,
    /// Slices taken per axis around the crop centre.
    pub slices_per_axis: usize,
    /// Non-nodule crops drawn per volume (classification).
    pub negatives_per_volume: usize,
    /// Each positive becomes this many records.
    pub expansion: usize,
    /// Share of negatives kept (classification).
    pub negative_fraction: f64,
    /// Keep each volume inside a single split.
    pub leakage_guard: bool,
    /// Split proportions; defaults depend on the task.
    pub fractions: Option<[f64; 3]>,
    pub max_sizes: Option<[usize; 3]>,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            task: Task::Classification,
            image_size: 224,
            slices_per_axis: 1,
            negatives_per_volume: 1,
            expansion: 40,
            negative_fraction: 0.2,
            leakage_guard: true,
            fractions: None,
            max_sizes: None,
        }
    }
}

impl PrepareOptions {
    pub fn plan(&self) -> SplitPlan {
        let mut plan = match self.task {
            Task::Classification => SplitPlan::classification(),
            Task::Segmentation => SplitPlan::segmentation(),
        };
        if let Some(f) = self.fractions {
            plan.fractions = f;
        }
        plan.leakage_guard = self.leakage_guard;
        plan.max_sizes = self.max_sizes;
        plan
    }

    fn validate(&self) -> Result<()> {
        if self.image_size < 4 {
            return Err(CtError::Usage(format!("image size {} is below 4", self.image_size)));
        }
        if self.slices_per_axis == 0 || self.slices_per_axis > CROP_SIZE {
            return Err(CtError::Usage(format!("slices per axis must be in 1..={CROP_SIZE}, got {}", self.slices_per_axis)));
        }
        if self.expansion == 0 {
            return Err(CtError::Usage("expansion factor must be at least 1".into()));
        }
        if !(self.negative_fraction > 0.0 && self.negative_fraction <= 1.0) {
            return Err(CtError::Usage(format!("negative fraction {} outside (0, 1]", self.negative_fraction)));
        }
        Ok(())
    }
}

/// Where volumes come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    /// `*.swv` files in `volumes`, optional `<id>.mask.swv` masks next to
    /// them, and a JSON-lines annotation file.
    Files { volumes: PathBuf, annotations: PathBuf },
    Phantom { count: usize, size: usize, nodule_prob: f64 },
}

/// One loaded volume with its nodules and optional voxel mask.
struct Loaded {
    volume: Volume,
    annotations: Vec<NoduleAnnotation>,
    mask: Option<Vec<u8>>,
}

enum Plan {
    Files { paths: Vec<PathBuf>, annotations: BTreeMap<String, Vec<NoduleAnnotation>> },
    Phantom { count: usize, size: usize, nodule_prob: f64 },
}

impl Plan {
    fn new(source: &Source) -> Result<Self> {
        match source {
            Source::Phantom { count, size, nodule_prob } => {
                if *size < 16 {
                    return Err(CtError::Usage(format!("phantom side {size} is below the minimum of 16")));
                }
                if !(0.0..=1.0).contains(nodule_prob) {
                    return Err(CtError::Usage(format!("nodule probability {nodule_prob} outside [0, 1]")));
                }
                Ok(Plan::Phantom { count: *count, size: *size, nodule_prob: *nodule_prob })
            }
            Source::Files { volumes, annotations } => {
                let anns = read_annotations(annotations)?;
                let paths = volume_paths(volumes)?;
                let ids: HashSet<String> = paths.iter().map(|p| volume_id(p)).collect();
                let mut by_volume: BTreeMap<String, Vec<NoduleAnnotation>> = BTreeMap::new();
                for a in anns {
                    if !ids.contains(&a.volume_id) {
                        return Err(CtError::data(format!(
                            "{}: annotation refers to unknown volume `{}`",
                            annotations.display(),
                            a.volume_id
                        )));
                    }
                    by_volume.entry(a.volume_id.clone()).or_default().push(a);
                }
                Ok(Plan::Files { paths, annotations: by_volume })
            }
        }
    }

    fn len(&self) -> usize {
        match self {
            Plan::Files { paths, .. } => paths.len(),
            Plan::Phantom { count, .. } => *count,
        }
    }

    fn load(&self, seed: u64, i: usize, want_mask: bool) -> Result<Loaded> {
        match self {
            Plan::Phantom { size, nodule_prob, .. } => {
                let case = make_case(seed, i, *size, *nodule_prob);
                Ok(Loaded { volume: case.volume, annotations: case.annotation.into_iter().collect(), mask: Some(case.mask) })
            }
            Plan::Files { paths, annotations } => {
                let volume = load_volume(&paths[i])?;
                let anns = annotations.get(&volume.id).cloned().unwrap_or_default();
                for a in &anns {
                    if !volume.contains(a.center_zyx) {
                        return Err(CtError::data(format!(
                            "{}: nodule center {:?} lies outside dims {:?}",
                            paths[i].display(),
                            a.center_zyx,
                            volume.dims
                        )));
                    }
                }
                let mask_path = paths[i].with_file_name(format!("{}.mask.swv", volume.id));
                let mask = if want_mask && mask_path.exists() {
                    let m = load_volume(&mask_path)?;
                    if m.dims != volume.dims {
                        return Err(CtError::data(format!(
                            "{}: mask dims {:?} differ from volume dims {:?}",
                            mask_path.display(),
                            m.dims,
                            volume.dims
                        )));
                    }
                    Some(m.voxels.iter().map(|&v| u8::from(v != 0)).collect())
                } else {
                    None
                };
                Ok(Loaded { volume, annotations: anns, mask })
            }
        }
    }
}

fn volume_id(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.strip_suffix(".swv").map(str::to_owned).unwrap_or(name)
}

/// Volume files in `dir`, sorted by name; masks are excluded.
fn volume_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CtError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CtError::io(dir, e))?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if name.ends_with(".swv") && !name.ends_with(".mask.swv") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(CtError::data(format!("{}: no .swv volumes found", dir.display())));
    }
    Ok(paths)
}

/// `k` consecutive indices centred on `size / 2`.
pub fn central_indices(size: usize, k: usize) -> Vec<usize> {
    let k = k.min(size);
    let start = (size / 2).saturating_sub((k - 1) / 2).min(size - k);
    (start..start + k).collect()
}

/// Crop centres at least one crop side away from every nodule centre.
fn negative_centers(loaded: &Loaded, count: usize, seed: u64, index: usize) -> Vec<[usize; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_NEGATIVES, index as u64));
    let min_d2 = (CROP_SIZE * CROP_SIZE) as f64;
    let far = |c: [usize; 3]| {
        loaded.annotations.iter().all(|a| {
            let d2: f64 = (0..3).map(|k| (c[k] as f64 - a.center_zyx[k] as f64).powi(2)).sum();
            d2 >= min_d2
        })
    };
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        for _ in 0..MAX_NEGATIVE_DRAWS {
            let c: [usize; 3] = std::array::from_fn(|k| rng.random_range(0..loaded.volume.dims[k]));
            if far(c) {
                out.push(c);
                break;
            }
        }
    }
    out
}

/// Voxels of the ellipsoid of the given diameter in a crop centred on the
/// nodule, used when no voxel mask is supplied.
fn ellipsoid_cube(spacing: [f32; 3], diameter_mm: f64) -> Cube<u8> {
    let half = (CROP_SIZE / 2) as f64;
    let r2 = (diameter_mm / 2.0).powi(2);
    let mut data = Vec::with_capacity(CROP_SIZE.pow(3));
    for z in 0..CROP_SIZE {
        for y in 0..CROP_SIZE {
            for x in 0..CROP_SIZE {
                let d2: f64 = [z, y, x]
                    .iter()
                    .zip(spacing)
                    .map(|(&i, s)| ((i as f64 - half) * s as f64).powi(2))
                    .sum();
                data.push(u8::from(d2 <= r2));
            }
        }
    }
    Cube { size: CROP_SIZE, data }
}

fn volume_records(loaded: &Loaded, opts: &PrepareOptions, seed: u64, index: usize) -> Result<Vec<SliceRecord>> {
    let indices = central_indices(CROP_SIZE, opts.slices_per_axis);
    let id = &loaded.volume.id;
    let mut out = Vec::new();
    match opts.task {
        Task::Classification => {
            for a in &loaded.annotations {
                let cube = crop_nodule(&loaded.volume, a.center_zyx);
                out.extend(slice_triaxial_at(&cube, SliceLabel::Class(1), id, a.center_zyx, &indices)?);
            }
            for c in negative_centers(loaded, opts.negatives_per_volume, seed, index) {
                let cube = crop_nodule(&loaded.volume, c);
                out.extend(slice_triaxial_at(&cube, SliceLabel::Class(0), id, c, &indices)?);
            }
        }
        Task::Segmentation => {
            for a in &loaded.annotations {
                let cube = crop_nodule(&loaded.volume, a.center_zyx);
                let mask = match (&loaded.mask, a.diameter_mm) {
                    (Some(m), _) => crop(m, loaded.volume.dims, a.center_zyx, CROP_SIZE, 0),
                    (None, Some(d)) => ellipsoid_cube(loaded.volume.spacing, d),
                    (None, None) => {
                        return Err(CtError::data(format!(
                            "volume `{id}` has neither a mask file nor a nodule diameter"
                        )))
                    }
                };
                out.extend(slice_triaxial_at(&cube, SliceLabel::Mask(&mask), id, a.center_zyx, &indices)?);
            }
        }
    }
    Ok(out)
}

/// Records of each split, ready to be written.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub manifest: SplitManifest,
    pub report: PrepareReport,
    /// Encoded tensors of every record, in manifest order.
    blobs: Vec<Blobs>,
}

/// Rayon pool sized by [`THREADS_ENV`] when set.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CtError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CtError::Usage(format!("cannot start worker pool: {e}")))
}

/// Runs the whole pipeline in memory. The result depends only on the
/// inputs, options and seed, not on the number of workers.
pub fn prepare(source: &Source, opts: &PrepareOptions, seed: u64) -> Result<Prepared> {
    opts.validate()?;
    let plan = Plan::new(source)?;
    let want_mask = opts.task == Task::Segmentation;
    let per_volume: Vec<Vec<SliceRecord>> = worker_pool()?.install(|| {
        (0..plan.len())
            .into_par_iter()
            .map(|i| {
                let loaded = plan.load(seed, i, want_mask)?;
                let recs = volume_records(&loaded, opts, seed, i)?;
                Ok(recs.into_iter().map(|r| r.resized(opts.image_size)).collect())
            })
            .collect::<Result<_>>()
    })?;
    let candidates: Vec<SliceRecord> = per_volume.into_iter().flatten().collect();
    let candidate_positives = candidates.iter().filter(|r| r.is_positive()).count();
    let candidate_negatives = candidates.len() - candidate_positives;

    let split_plan = opts.plan();
    let (records, ratios, indices) = match opts.task {
        Task::Classification => {
            let (pos, neg): (Vec<SliceRecord>, Vec<SliceRecord>) = candidates.into_iter().partition(|r| r.is_positive());
            let mut records = expand_positives(&pos, opts.expansion, seed)?;
            records.extend(if opts.negative_fraction < 1.0 { subsample_negatives(&neg, opts.negative_fraction, seed)? } else { neg });
            let indices = build_splits_classification(&metas(&records), seed, &split_plan)?;
            (records, CLASSIFICATION_RATIOS, indices)
        }
        Task::Segmentation => {
            let records = expand_positives(&candidates, opts.expansion, seed)?;
            let indices = build_splits_segmentation(&metas(&records), seed, &split_plan)?;
            (records, split_plan.fractions, indices)
        }
    };

    let mut manifest = SplitManifest::new(opts.task, seed, opts.image_size, ratios, split_plan);
    let parts = indices.parts();
    let chosen: [Vec<SliceRecord>; 3] = std::array::from_fn(|s| parts[s].iter().map(|&i| records[i].clone()).collect());
    let report = PrepareReport {
        task: opts.task,
        seed,
        candidate_positives,
        candidate_negatives,
        train: counts(&chosen[0]),
        val: counts(&chosen[1]),
        test: counts(&chosen[2]),
        shared_volumes: shared_volumes(&chosen),
    };
    let pool = worker_pool()?;
    let mut blobs = Vec::new();
    for (s, part) in chosen.iter().enumerate() {
        let encoded: Vec<(RecordEntry, Blobs)> = pool.install(|| part.par_iter().map(RecordEntry::encode).collect::<Result<_>>())?;
        let list = match s {
            0 => &mut manifest.train,
            1 => &mut manifest.val,
            _ => &mut manifest.test,
        };
        for (entry, b) in encoded {
            list.push(entry);
            blobs.push(b);
        }
    }
    Ok(Prepared { manifest, report, blobs })
}

fn metas(records: &[SliceRecord]) -> Vec<RecordMeta> {
    records
        .iter()
        .map(|r| RecordMeta { volume_id: r.provenance.volume_id.clone(), positive: r.is_positive() })
        .collect()
}

fn counts(records: &[SliceRecord]) -> SplitCounts {
    let positives = records.iter().filter(|r| r.is_positive()).count();
    let negatives = records.len() - positives;
    let volumes: HashSet<&str> = records.iter().map(|r| r.provenance.volume_id.as_str()).collect();
    SplitCounts {
        records: records.len(),
        positives,
        negatives,
        volumes: volumes.len(),
        ratio: (negatives > 0).then(|| positives as f64 / negatives as f64),
    }
}

fn shared_volumes(splits: &[Vec<SliceRecord>; 3]) -> usize {
    let sets: Vec<HashSet<&str>> =
        splits.iter().map(|s| s.iter().map(|r| r.provenance.volume_id.as_str()).collect()).collect();
    let all: HashSet<&str> = sets.iter().flatten().copied().collect();
    all.iter().filter(|v| sets.iter().filter(|s| s.contains(*v)).count() > 1).count()
}

fn staging_dir(out: &Path) -> PathBuf {
    let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into());
    out.with_file_name(format!(".{name}.partial{}", std::process::id()))
}

impl Prepared {
    /// Writes slices, manifest and report into `out`, which must not exist
    /// or be empty. Everything goes to a sibling staging directory that is
    /// renamed into place at the end, so failures leave no partial output.
    pub fn write(&self, out: &Path) -> Result<()> {
        if out.exists() {
            let mut entries = fs::read_dir(out).map_err(|e| CtError::io(out, e))?;
            if entries.next().is_some() {
                return Err(CtError::Usage(format!("{} already exists and is not empty", out.display())));
            }
        }
        let stage = staging_dir(out);
        let result = self.write_into(&stage).and_then(|()| {
            if out.exists() {
                fs::remove_dir(out).map_err(|e| CtError::io(out, e))?;
            }
            fs::rename(&stage, out).map_err(|e| CtError::io(out, e))
        });
        if result.is_err() {
            let _ = fs::remove_dir_all(&stage);
        }
        result
    }

    fn write_into(&self, stage: &Path) -> Result<()> {
        let _ = fs::remove_dir_all(stage);
        fs::create_dir_all(stage).map_err(|e| CtError::io(stage, e))?;
        let store = SliceStore::new(stage.join(SLICES_DIR));
        for blobs in &self.blobs {
            store.put_staged(blobs)?;
        }
        write_json(&stage.join(MANIFEST_FILE), &self.manifest)?;
        write_json(&stage.join(REPORT_FILE), &self.report)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CtError::data(format!("{}: {e}", path.display())))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes).map_err(|e| CtError::io(path, e))
}
