use std::path::PathBuf;

use anyhow::Result;
use swinct_core::heads::HeadConfig;
use swinct_core::metrics::argmax_rows;
use swinct_core::train::{checkpoint, evaluate, Dataset};
use swinct_core::SwinModel;
use swinct_ct::dataset::SliceDataset;
use swinct_tensor::io::{RawTensor, TensorData};

use crate::args::EvalArgs;
use crate::exit::UsageError;
use crate::train::write_json;
use crate::{plot, Globals, Output};

pub const METRICS_FILE: &str = "metrics.json";
pub const PREDICTIONS_FILE: &str = "predictions.swt";

/// Turns `last`, `best` or a path into a checkpoint directory.
fn resolve_checkpoint(a: &EvalArgs, g: &Globals) -> Result<PathBuf> {
    match a.checkpoint.as_str() {
        which @ ("last" | "best") => {
            let run = a
                .run
                .clone()
                .or_else(|| g.config.out.clone())
                .ok_or_else(|| UsageError::new(format!("--checkpoint {which} needs --run <dir>")))?;
            let dir = run.join("checkpoints").join(which);
            if !dir.join("manifest.json").is_file() {
                return Err(UsageError::new(format!("no `{which}` checkpoint under {}", run.display())).into());
            }
            Ok(dir)
        }
        path => Ok(PathBuf::from(path)),
    }
}

pub(crate) fn run(a: &EvalArgs, g: &Globals) -> Result<Output> {
    let data = a
        .data
        .clone()
        .or_else(|| g.config.train.as_ref().and_then(|t| t.data.clone()))
        .ok_or_else(|| UsageError::new("eval needs --data <dir>"))?;
    let dir = resolve_checkpoint(a, g)?;
    let (model, step) = checkpoint::load(&dir)?;
    let set = SliceDataset::open(&data, &a.split)?;
    if set.image_size() != model.config.backbone.img_size {
        return Err(UsageError::new(format!(
            "checkpoint expects {0}x{0} images but the dataset holds {1}x{1}",
            model.config.backbone.img_size,
            set.image_size()
        ))
        .into());
    }
    let report = evaluate(&model, &set, 16)?;
    let mut json = serde_json::json!({
        "checkpoint": dir,
        "step": step,
        "split": a.split,
        "records": set.len(),
        "metrics": report,
    });

    let mut files = Vec::new();
    if let Some(out) = &g.out {
        std::fs::create_dir_all(out)?;
        if a.predictions {
            let path = out.join(PREDICTIONS_FILE);
            predictions(&model, &set)?.write(&path)?;
            files.push(path);
        }
        if a.curves {
            if let Some(run) = &a.run {
                files.extend(plot::write_curves(run)?);
            }
        }
        let path = out.join(METRICS_FILE);
        files.push(path.clone());
        json["files"] = serde_json::to_value(&files)?;
        write_json(&path, &json)?;
    } else if a.predictions || a.curves {
        return Err(UsageError::new("--predictions and --curves need --out <dir>").into());
    }

    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    let text = match model.config.head {
        HeadConfig::Classifier { .. } => format!(
            "{} on {} records at step {step}: top1 {} top5 {}",
            a.split,
            set.len(),
            fmt(report.top1),
            fmt(report.top5)
        ),
        HeadConfig::Segmentation { .. } => format!(
            "{} on {} records at step {step}: mIoU {} mAcc {} aAcc {}",
            a.split,
            set.len(),
            fmt(report.miou),
            fmt(report.macc),
            fmt(report.aacc)
        ),
    };
    Ok(Output { json, text })
}

/// Class probabilities `[N, k]` as f32 for classifiers, predicted masks
/// `[N, H, W]` as u8 for segmentation.
fn predictions(model: &SwinModel, set: &SliceDataset) -> Result<RawTensor> {
    let k = model.config.head.num_classes();
    let n = set.len();
    let size = set.image_size();
    let indices: Vec<usize> = (0..n).collect();
    let mut probs = Vec::new();
    let mut masks = Vec::new();
    for chunk in indices.chunks(16) {
        let batch = set.batch(chunk, None)?;
        let p = model.predict(&batch.images)?;
        match model.config.head {
            HeadConfig::Classifier { .. } => probs.extend(p.data().iter().map(|&v| v as f32)),
            HeadConfig::Segmentation { .. } => masks.extend(argmax_rows(p.data(), k).into_iter().map(|c| c as u8)),
        }
    }
    let raw = match model.config.head {
        HeadConfig::Classifier { .. } => RawTensor::new(vec![n, k], TensorData::F32(probs)),
        HeadConfig::Segmentation { .. } => RawTensor::new(vec![n, size, size], TensorData::U8(masks)),
    };
    Ok(raw?)
}

