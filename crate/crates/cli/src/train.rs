use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use swinct_core::heads::HeadConfig;
use swinct_core::swin::SwinConfig;
use swinct_core::train::{checkpoint, run_recipe, Dataset, Recipe, RunSummary, Span, TrainOptions, CURVE_FILE, STEPS_FILE};
use swinct_core::{CoreError, ModelConfig, SwinModel};
use swinct_ct::dataset::SliceDataset;
use swinct_ct::store::{SplitManifest, Task};
use swinct_tensor::io::write_atomic;

use crate::args::TrainArgs;
use crate::config::{ModelSection, RunConfig, TrainSection};
use crate::exit::UsageError;
use crate::{plot, Globals, Output};

pub const RUN_CONFIG_FILE: &str = "run_config.json";
pub const SUMMARY_FILE: &str = "summary.json";

/// Classes of both tasks: nodule or not, per slice or per pixel.
const NUM_CLASSES: usize = 2;

fn default_decoder_dim(variant: &str) -> usize {
    if variant == "toy" {
        32
    } else {
        512
    }
}

pub(crate) fn default_recipe(task: Task) -> Recipe {
    match task {
        Task::Classification => Recipe::regular(),
        Task::Segmentation => Recipe::segmentation(),
    }
}

pub(crate) fn head_for(task: Task, decoder_dim: usize) -> HeadConfig {
    match task {
        Task::Classification => HeadConfig::Classifier { num_classes: NUM_CLASSES },
        Task::Segmentation => HeadConfig::Segmentation { num_classes: NUM_CLASSES, decoder_dim },
    }
}

fn apply_overrides(recipe: &mut Recipe, a: &TrainArgs) {
    if let Some(e) = a.epochs {
        recipe.length = Span::Epochs(e);
    }
    if let Some(s) = a.steps {
        recipe.length = Span::Steps(s);
    }
    if let Some(e) = a.warmup_epochs {
        recipe.warmup = Span::Epochs(e);
    }
    if let Some(s) = a.warmup_steps {
        recipe.warmup = Span::Steps(s);
    }
    if let Some(b) = a.batch_size {
        recipe.batch_size = b;
    }
    if let Some(lr) = a.lr {
        recipe.base_lr = lr;
    }
    if let Some(wd) = a.weight_decay {
        recipe.optimizer.weight_decay = wd;
    }
    if let Some(dp) = a.drop_path {
        recipe.drop_path = dp;
    }
    if a.no_augment {
        recipe.augment = false;
    }
    if a.ema.is_some() {
        recipe.ema = a.ema;
    }
    if a.grad_clip.is_some() {
        recipe.grad_clip = a.grad_clip;
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    task: Task,
    variant: &'a str,
    params: u64,
    steps: u64,
    best_step: Option<u64>,
    final_train_loss: Option<f64>,
    final_metrics: Option<&'a swinct_core::metrics::MetricsReport>,
    init: Option<InitSummary>,
    files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct InitSummary {
    from: PathBuf,
    loaded: usize,
    missing: Vec<String>,
    unexpected: Vec<String>,
}

pub(crate) fn run(a: &TrainArgs, g: &Globals) -> Result<Output> {
    let section = g.config.train.clone().unwrap_or_default();
    let data = a
        .data
        .clone()
        .or(section.data.clone())
        .ok_or_else(|| UsageError::new("train needs --data <dir>"))?;
    let out = g.require_out("train")?;
    let manifest = SplitManifest::read(&data)?;
    let task = manifest.task;

    let mut recipe = match (a.recipe, &g.config.recipe) {
        (Some(r), _) => Recipe::named(r.name())?,
        (None, Some(r)) => r.clone(),
        (None, None) => default_recipe(task),
    };
    apply_overrides(&mut recipe, a);
    recipe.validate()?;
    let train = SliceDataset::open(&data, "train")?;
    let val = SliceDataset::open(&data, "val")?;
    recipe.schedule(train.len())?;

    let model_section = g.config.model.clone().unwrap_or_default();
    let backbone = match (&a.variant, &model_section.backbone) {
        (None, Some(b)) => SwinConfig { img_size: manifest.image_size, ..b.clone() },
        (v, _) => {
            let name = v.clone().or(model_section.variant.clone()).unwrap_or_else(|| "swin-t".into());
            SwinConfig::variant(&name, manifest.image_size)?
        }
    };
    backbone.validate()?;
    let decoder_dim = a
        .decoder_dim
        .or(model_section.decoder_dim)
        .unwrap_or_else(|| default_decoder_dim(&backbone.variant));
    let config = ModelConfig { backbone, head: head_for(task, decoder_dim) };
    let mut model = SwinModel::new(config.clone(), g.seed)?;

    let init_dir = a.init.clone().or(section.init.clone());
    let init = match &init_dir {
        Some(dir) => {
            let report = checkpoint::init_from(dir, &mut model.params)
                .with_context(|| format!("cannot initialize from {}", dir.display()))?;
            Some(InitSummary { from: dir.clone(), loaded: report.loaded.len(), missing: report.missing, unexpected: report.unexpected })
        }
        None => None,
    };

    let mut opts = TrainOptions::new(&out, g.seed);
    opts.eval_every = a.eval_every.or(section.eval_every);
    opts.max_steps = a.max_steps.or(section.max_steps);
    opts.eval_with_ema = a.eval_with_ema || section.eval_with_ema;
    if let Some(b) = section.eval_batch_size {
        opts.eval_batch_size = b;
    }

    // The resolved configuration lets the run be repeated exactly.
    let resolved = RunConfig {
        seed: Some(g.seed),
        out: Some(out.clone()),
        prepare: None,
        model: Some(ModelSection { variant: None, backbone: Some(config.backbone.clone()), decoder_dim: Some(decoder_dim) }),
        recipe: Some(recipe.clone()),
        train: Some(TrainSection {
            data: Some(data.clone()),
            init: init_dir,
            eval_every: opts.eval_every,
            max_steps: opts.max_steps,
            eval_with_ema: opts.eval_with_ema,
            eval_batch_size: Some(opts.eval_batch_size),
            curves: a.curves || section.curves,
        }),
    };
    std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    write_json(&out.join(RUN_CONFIG_FILE), &resolved)?;

    let summary = run_recipe(&mut model, &train, Some(&val), &recipe, &opts).map_err(|e| match &e {
        CoreError::NonFinite { diagnostic: Some(p), .. } => {
            let msg = format!("training halted, diagnostic written to {}", p.display());
            anyhow::Error::from(e).context(msg)
        }
        _ => e.into(),
    })?;

    let mut files = vec![out.join(RUN_CONFIG_FILE), out.join(CURVE_FILE), out.join(STEPS_FILE)];
    if a.curves || section.curves {
        files.extend(plot::write_curves(&out)?);
    }
    files.push(out.join(SUMMARY_FILE));
    let json = summary_json(task, &model, &summary, init, files)?;
    write_json(&out.join(SUMMARY_FILE), &json)?;

    let last = summary.curve.last();
    let metric = last.and_then(|p| p.report.as_ref()).map_or(String::new(), |r| match task {
        Task::Classification => format!(", val top1 {:.4}", r.top1.unwrap_or(f64::NAN)),
        Task::Segmentation => format!(", val mIoU {:.4}", r.miou.unwrap_or(f64::NAN)),
    });
    let text = format!(
        "trained {} steps into {}; last train loss {:.4}{metric}",
        summary.steps,
        out.display(),
        last.map_or(f64::NAN, |p| p.train_loss)
    );
    Ok(Output { json, text })
}

fn summary_json(
    task: Task,
    model: &SwinModel,
    s: &RunSummary,
    init: Option<InitSummary>,
    files: Vec<PathBuf>,
) -> Result<serde_json::Value> {
    let last = s.curve.last();
    let summary = Summary {
        task,
        variant: &model.config.backbone.variant,
        params: model.num_params() as u64,
        steps: s.steps,
        best_step: s.best_step,
        final_train_loss: last.map(|p| p.train_loss),
        final_metrics: last.and_then(|p| p.report.as_ref()),
        init,
        files,
    };
    Ok(serde_json::to_value(summary)?)
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(value)?;
    write_atomic(path, &bytes).with_context(|| format!("cannot write {}", path.display()))
}
