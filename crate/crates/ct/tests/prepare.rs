use std::collections::HashSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swinct_core::train::{Dataset, Targets};
use swinct_ct::dataset::{SliceDataset, CHANNEL_MEAN, CHANNEL_STD};
use swinct_tensor::io::TensorData;
use swinct_ct::prepare::{central_indices, prepare, PrepareOptions, Source};
use swinct_ct::slicing::{Axis, Label};
use swinct_ct::splits::CLASSIFICATION_RATIOS;
use swinct_ct::store::{RecordEntry, SliceStore, SplitManifest, Task, MANIFEST_FILE, REPORT_FILE, SLICES_DIR};
use swinct_ct::volume::{write_annotations, write_volume, NoduleAnnotation, Volume};
use swinct_ct::CtError;

fn phantom(count: usize) -> Source {
    Source::Phantom { count, size: 64, nodule_prob: 0.5 }
}

fn small_classification() -> PrepareOptions {
    PrepareOptions { image_size: 32, expansion: 4, negatives_per_volume: 2, negative_fraction: 1.0, ..Default::default() }
}

fn small_segmentation() -> PrepareOptions {
    PrepareOptions { task: Task::Segmentation, image_size: 32, expansion: 1, slices_per_axis: 3, ..Default::default() }
}

fn split_volumes(entries: &[RecordEntry]) -> HashSet<&str> {
    entries.iter().map(|e| e.provenance.volume_id.as_str()).collect()
}

#[test]
fn central_indices_are_centred() {
    assert_eq!(central_indices(48, 1), [24]);
    assert_eq!(central_indices(48, 3), [23, 24, 25]);
    assert_eq!(central_indices(48, 4), [23, 24, 25, 26]);
    assert_eq!(central_indices(4, 9), [0, 1, 2, 3]);
}

#[test]
fn phantom_classification_honours_ratios_and_guard() {
    let prepared = prepare(&phantom(40), &small_classification(), 7).unwrap();
    let m = &prepared.manifest;
    assert_eq!(m.ratios, CLASSIFICATION_RATIOS);
    for (entries, r) in [&m.train, &m.val, &m.test].into_iter().zip(CLASSIFICATION_RATIOS) {
        let pos = entries.iter().filter(|e| e.class == Some(1)).count() as f64;
        let neg = entries.iter().filter(|e| e.class == Some(0)).count() as f64;
        assert!(neg > 0.0 && (pos - r * neg).abs() <= 1.0, "{pos}:{neg} vs {r}:1");
    }
    let (a, b, c) = (split_volumes(&m.train), split_volumes(&m.val), split_volumes(&m.test));
    assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
    assert_eq!(prepared.report.shared_volumes, 0);
    assert_eq!(prepared.report.train.records, m.train.len());
    let provs: HashSet<_> = m.train.iter().chain(&m.val).chain(&m.test).map(|e| &e.provenance).collect();
    assert_eq!(provs.len(), m.train.len() + m.val.len() + m.test.len(), "provenance is unique");
}

#[test]
fn written_dataset_roundtrips_and_loads_for_training() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ds");
    let prepared = prepare(&phantom(30), &small_classification(), 3).unwrap();
    prepared.write(&out).unwrap();
    let manifest = SplitManifest::read(&out).unwrap();
    assert_eq!(manifest, prepared.manifest);
    assert!(out.join(REPORT_FILE).exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1, "no staging directory is left behind");

    let store = SliceStore::new(out.join(SLICES_DIR));
    let t = store.get(&manifest.train[0].image).unwrap();
    assert_eq!(t.shape, [32, 32, 3]);

    let ds = SliceDataset::open(&out, "train").unwrap();
    assert_eq!(ds.len(), manifest.train.len());
    let batch = ds.batch(&[0, 1, 2], None).unwrap();
    assert_eq!(batch.images.shape(), [3, 32, 32, 3]);
    let Targets::Classes(c) = &batch.targets else { panic!("classes expected") };
    let expected: Vec<usize> = manifest.train[..3].iter().map(|e| e.class.unwrap() as usize).collect();
    assert_eq!(c, &expected);
    let stored: Vec<f64> = match &t.data {
        TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
        _ => panic!("f32 slice expected"),
    };
    for (k, got) in batch.images.data()[..32 * 32 * 3].iter().enumerate() {
        let c = k % 3;
        let want = (stored[k - c] - CHANNEL_MEAN[c]) / CHANNEL_STD[c];
        assert!((got - want).abs() < 1e-12, "pixel {k}: {got} vs {want}");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let aug = ds.batch(&[0, 1, 2], Some(&mut rng)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert_eq!(aug.images.data(), ds.batch(&[0, 1, 2], Some(&mut rng)).unwrap().images.data());
    assert!(ds.batch(&[ds.len()], None).is_err());
    assert!(SliceDataset::open(&out, "holdout").is_err());

    // a second write into a non-empty directory is refused
    assert!(matches!(prepared.write(&out), Err(CtError::Usage(_))));
}

#[test]
fn preparation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for (i, seed) in [5, 5, 6].into_iter().enumerate() {
        prepare(&phantom(24), &small_segmentation(), seed).unwrap().write(&dir.path().join(format!("d{i}"))).unwrap();
    }
    let read = |name: &str| std::fs::read(dir.path().join(name).join(MANIFEST_FILE)).unwrap();
    assert_eq!(read("d0"), read("d1"));
    assert_ne!(read("d0"), read("d2"));
}

#[test]
fn phantom_segmentation_splits_eight_one_one() {
    let prepared = prepare(&phantom(40), &small_segmentation(), 2).unwrap();
    let m = &prepared.manifest;
    let sizes = [m.train.len(), m.val.len(), m.test.len()];
    let total: usize = sizes.iter().sum();
    for (n, f) in sizes.into_iter().zip([0.8, 0.1, 0.1]) {
        assert!((n as f64 - f * total as f64).abs() <= 1.0, "{sizes:?}");
    }
    assert!(m.train.iter().all(|e| e.class.is_none() && e.mask.is_some()));
    assert_eq!(prepared.report.candidate_negatives, 0);
}

fn write_inputs(dir: &Path) -> std::path::PathBuf {
    let vols = dir.join("vols");
    std::fs::create_dir_all(&vols).unwrap();
    let mut anns = Vec::new();
    for v in 0..3usize {
        let id = format!("case{v}");
        let dims = [40, 40, 40];
        let center = [20, 18 + v, 21];
        let mut voxels = vec![-800i16; 64000];
        let mut mask = vec![0i16; 64000];
        for z in 17..24 {
            for y in center[1] - 3..center[1] + 4 {
                for x in 18..25 {
                    voxels[(z * 40 + y) * 40 + x] = 60;
                    mask[(z * 40 + y) * 40 + x] = 1;
                }
            }
        }
        write_volume(&vols.join(format!("{id}.swv")), &Volume::new(id.clone(), dims, [1.0; 3], voxels).unwrap()).unwrap();
        if v != 2 {
            let m = Volume::new(format!("{id}.mask"), dims, [1.0; 3], mask).unwrap();
            write_volume(&vols.join(format!("{id}.mask.swv")), &m).unwrap();
        }
        anns.push(NoduleAnnotation { volume_id: id, center_zyx: center, diameter_mm: Some(7.0) });
    }
    write_annotations(&dir.join("ann.jsonl"), &anns).unwrap();
    vols
}

#[test]
fn files_source_uses_masks_and_diameters() {
    let dir = tempfile::tempdir().unwrap();
    let vols = write_inputs(dir.path());
    let source = Source::Files { volumes: vols, annotations: dir.path().join("ann.jsonl") };
    let prepared = prepare(&source, &small_segmentation(), 1).unwrap();
    let m = &prepared.manifest;
    assert_eq!([m.train.len(), m.val.len(), m.test.len()], [9, 1, 1]);
    let out = dir.path().join("out");
    prepared.write(&out).unwrap();
    let ds = SliceDataset::open(&out, "train").unwrap();
    for (label, e) in ds.labels().iter().zip(&m.train) {
        let Label::Mask(mask) = label else { panic!("mask expected") };
        let ones = mask.iter().filter(|&&p| p == 1).count();
        assert!(ones > 0, "{:?}", e.provenance);
    }
    assert!(m.train.iter().chain(&m.val).all(|e| matches!(e.provenance.axis, Axis::Z | Axis::Y | Axis::X)));
}

#[test]
fn input_errors_leave_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let vols = write_inputs(dir.path());
    let out = dir.path().join("out");

    let missing = Source::Files { volumes: vols.clone(), annotations: dir.path().join("absent.jsonl") };
    let err = prepare(&missing, &small_classification(), 1).unwrap_err();
    assert!(matches!(err, CtError::Io { .. }), "{err}");
    assert!(err.to_string().contains("absent.jsonl"));

    std::fs::write(dir.path().join("bad.jsonl"), "{\"volume_id\":\"nope\",\"center_zyx\":[1,1,1],\"diameter_mm\":null}\n").unwrap();
    let unknown = Source::Files { volumes: vols.clone(), annotations: dir.path().join("bad.jsonl") };
    assert!(matches!(prepare(&unknown, &small_classification(), 1), Err(CtError::Data(_))));

    std::fs::write(vols.join("case0.swv"), b"SWV1").unwrap();
    let broken = Source::Files { volumes: vols, annotations: dir.path().join("ann.jsonl") };
    let err = prepare(&broken, &small_classification(), 1).unwrap_err();
    assert!(matches!(err, CtError::Format { .. }) && err.to_string().contains("case0.swv"), "{err}");
    assert!(!out.exists());
}

#[test]
fn options_are_validated() {
    let bad = [
        PrepareOptions { expansion: 0, ..small_classification() },
        PrepareOptions { slices_per_axis: 0, ..small_classification() },
        PrepareOptions { negative_fraction: 0.0, ..small_classification() },
        PrepareOptions { image_size: 2, ..small_classification() },
    ];
    for opts in bad {
        assert!(matches!(prepare(&phantom(4), &opts, 1), Err(CtError::Usage(_))));
    }
    let json = serde_json::to_string(&small_classification()).unwrap();
    let back: PrepareOptions = serde_json::from_str(&json).unwrap();
    assert_eq!(back, small_classification());
    assert!(serde_json::from_str::<PrepareOptions>("{\"bogus\":1}").is_err());
}
