//! The training loop shared by all recipes.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use swinct_tensor::io::write_atomic;
use swinct_tensor::{Tensor, TensorError};

use super::checkpoint;
use super::optim::{clip_grad_norm, collect_grads, AdamW, Ema};
use super::recipe::{Recipe, Span};
use crate::complexity::count_model;
use crate::error::{CoreError, Result};
use crate::heads::{cross_entropy, pixel_cross_entropy, HeadConfig};
use crate::metrics::{argmax_rows, top_k_accuracy, ConfusionMatrix, MetricsReport};
use crate::model::SwinModel;

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// One class id per image.
    Classes(Vec<usize>),
    /// Row-major `[B, H, W]` class ids; 255 marks ignored pixels.
    Masks(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct Batch {
    /// `[B, H, W, 3]`.
    pub images: Tensor,
    pub targets: Targets,
}

/// Indexed access to samples. `batch` must be a pure function of its
/// arguments so runs are reproducible.
pub trait Dataset {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Assembles the samples at `indices`, in order. When `augment` is given
    /// the loader may apply random augmentation drawn from it.
    fn batch(&self, indices: &[usize], augment: Option<&mut ChaCha8Rng>) -> Result<Batch>;
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Steps between evaluations; defaults to one epoch for epoch-based
    /// recipes and a twentieth of the run otherwise.
    pub eval_every: Option<u64>,
    /// Stops after this many steps without changing the schedule.
    pub max_steps: Option<u64>,
    pub eval_with_ema: bool,
    pub eval_batch_size: usize,
    pub save_checkpoints: bool,
}

impl TrainOptions {
    pub fn new(out_dir: impl Into<PathBuf>, seed: u64) -> Self {
        Self {
            seed,
            out_dir: out_dir.into(),
            eval_every: None,
            max_steps: None,
            eval_with_ema: false,
            eval_batch_size: 32,
            save_checkpoints: true,
        }
    }
}

/// Validation results at one evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalPoint {
    pub step: u64,
    pub epoch: u64,
    pub lr: f64,
    /// Mean training loss over the steps since the previous evaluation.
    pub train_loss: f64,
    pub report: Option<MetricsReport>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub steps: u64,
    pub step_losses: Vec<f64>,
    pub curve: Vec<EvalPoint>,
    pub best_step: Option<u64>,
}

pub const CURVE_FILE: &str = "curve.csv";
pub const STEPS_FILE: &str = "train_steps.csv";
pub const DIAGNOSTIC_FILE: &str = "nan_diagnostic.json";

/// Seed of an independent random stream derived from a run seed.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_SHUFFLE: u64 = 1;
const STREAM_DROP_PATH: u64 = 2;
const STREAM_AUGMENT: u64 = 3;

fn is_classifier(model: &SwinModel) -> bool {
    matches!(model.config.head, HeadConfig::Classifier { .. })
}

fn loss_of(model: &SwinModel, logits: &Tensor, targets: &Targets) -> Result<Tensor> {
    match (is_classifier(model), targets) {
        (true, Targets::Classes(labels)) => cross_entropy(logits, labels),
        (false, Targets::Masks(mask)) => pixel_cross_entropy(logits, mask),
        _ => Err(CoreError::data("batch targets do not match the model's head")),
    }
}

/// Runs `model` over `data` without gradients and summarizes the metrics.
pub fn evaluate(model: &SwinModel, data: &dyn Dataset, batch_size: usize) -> Result<MetricsReport> {
    if data.is_empty() {
        return Err(CoreError::Usage("cannot evaluate an empty dataset".into()));
    }
    let k = model.config.head.num_classes();
    let mut cm = ConfusionMatrix::new(k);
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(batch_size.max(1)) {
        let batch = data.batch(chunk, None)?;
        let probs = model.predict(&batch.images)?;
        let preds = argmax_rows(probs.data(), k);
        match &batch.targets {
            Targets::Classes(y) => {
                cm.accumulate(&preds, y)?;
                scores.extend_from_slice(probs.data());
                labels.extend_from_slice(y);
            }
            Targets::Masks(y) => cm.accumulate(&preds, y)?,
        }
    }
    let cfg = &model.config;
    let flops = count_model(&cfg.backbone, &cfg.head, cfg.backbone.img_size)?.flops;
    let mut report = MetricsReport::from_confusion(&cm, model.num_params() as u64, flops);
    if !labels.is_empty() {
        report.top1 = Some(top_k_accuracy(&scores, k, &labels, 1)?);
        report.top5 = Some(top_k_accuracy(&scores, k, &labels, 5)?);
    }
    Ok(report)
}

fn headline(model: &SwinModel, report: &MetricsReport) -> Option<f64> {
    if is_classifier(model) {
        report.top1
    } else {
        report.miou
    }
}

/// Trains `model` with `recipe`, logging curves to `opts.out_dir`.
///
/// Every eval point appends a row to `curve.csv`; every step appends to
/// `train_steps.csv`. Both files are rewritten atomically. Any non-finite
/// value met in training or validation stops the run and writes
/// `nan_diagnostic.json`.
pub fn run_recipe(
    model: &mut SwinModel,
    train: &dyn Dataset,
    val: Option<&dyn Dataset>,
    recipe: &Recipe,
    opts: &TrainOptions,
) -> Result<RunSummary> {
    recipe.validate()?;
    if train.is_empty() {
        return Err(CoreError::Usage("training set is empty".into()));
    }
    fs::create_dir_all(&opts.out_dir).map_err(|e| CoreError::io(&opts.out_dir, e))?;
    model.set_drop_path(recipe.drop_path)?;

    let n = train.len();
    let batch = recipe.batch_size.min(n);
    let spe = recipe.steps_per_epoch(n);
    let schedule = recipe.schedule(n)?;
    let total = schedule.total_steps;
    let stop = opts.max_steps.map_or(total, |m| m.min(total));
    let eval_every = opts.eval_every.unwrap_or(match recipe.length {
        Span::Epochs(_) => spe,
        Span::Steps(s) => (s / 20).max(1),
    });

    let mut opt = AdamW::new(&model.params, recipe.optimizer);
    let mut ema = recipe.ema.map(|d| Ema::new(&model.params, d));
    let mut drop_rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, STREAM_DROP_PATH, 0));
    let mut log = CurveLog::new(&opts.out_dir, is_classifier(model));
    let mut summary = RunSummary { steps: 0, step_losses: Vec::new(), curve: Vec::new(), best_step: None };
    let mut best = f64::NEG_INFINITY;
    let mut order: Vec<usize> = Vec::new();
    let mut interval_loss = 0.0;
    let mut interval_steps = 0u64;

    for step in 0..stop {
        let epoch = step / spe;
        let pos = (step % spe) as usize;
        if pos == 0 {
            order = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, STREAM_SHUFFLE, epoch)));
        }
        let indices = &order[pos * batch..(pos + 1) * batch];
        let mut aug_rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, STREAM_AUGMENT, step));
        let b = train.batch(indices, recipe.augment.then_some(&mut aug_rng))?;
        let lr = schedule.lr_at(step)?;

        model.params.zero_grads();
        let loss = match model.forward(&b.images, Some(&mut drop_rng)).and_then(|l| loss_of(model, &l, &b.targets)) {
            Ok(loss) => loss,
            Err(CoreError::Tensor(TensorError::NonFinite { .. })) => {
                let diag = write_diagnostic(&opts.out_dir, model, step + 1, epoch, lr, f64::NAN, None, &[])?;
                return Err(CoreError::NonFinite { what: "loss", step: step + 1, param: None, diagnostic: Some(diag) });
            }
            Err(e) => return Err(e),
        };
        let loss_value = loss.item();
        if !loss_value.is_finite() {
            let diag = write_diagnostic(&opts.out_dir, model, step + 1, epoch, lr, loss_value, None, &[])?;
            return Err(CoreError::NonFinite { what: "loss", step: step + 1, param: None, diagnostic: Some(diag) });
        }
        loss.backward()?;
        let mut grads = collect_grads(&model.params);
        if let Some(max_norm) = recipe.grad_clip {
            clip_grad_norm(&mut grads, max_norm);
        }
        if let Err(err) = opt.step(&mut model.params, &grads, lr) {
            if let CoreError::NonFinite { what, step, param, .. } = err {
                let diag = write_diagnostic(&opts.out_dir, model, step, epoch, lr, loss_value, param.as_deref(), &grads)?;
                return Err(CoreError::NonFinite { what, step, param, diagnostic: Some(diag) });
            }
            return Err(err);
        }
        if let Some(ema) = ema.as_mut() {
            ema.update(&model.params)?;
        }

        let done = step + 1;
        summary.steps = done;
        summary.step_losses.push(loss_value);
        log.step_row(done, epoch, lr, loss_value);
        interval_loss += loss_value;
        interval_steps += 1;

        if done % eval_every == 0 || done == stop {
            let report = match val {
                Some(v) if !v.is_empty() => {
                    let eval_model = match (&ema, opts.eval_with_ema) {
                        (Some(ema), true) => {
                            let mut m = model.clone();
                            m.params = ema.to_store(&model.params)?;
                            Some(m)
                        }
                        _ => None,
                    };
                    match evaluate(eval_model.as_ref().unwrap_or(model), v, opts.eval_batch_size) {
                        Ok(r) => Some(r),
                        Err(CoreError::Tensor(TensorError::NonFinite { .. })) => {
                            let diag = write_diagnostic(&opts.out_dir, model, done, epoch, lr, loss_value, None, &grads)?;
                            return Err(CoreError::NonFinite { what: "validation output", step: done, param: None, diagnostic: Some(diag) });
                        }
                        Err(e) => return Err(e),
                    }
                }
                _ => None,
            };
            let point = EvalPoint {
                step: done,
                epoch: done.div_ceil(spe),
                lr,
                train_loss: interval_loss / interval_steps as f64,
                report,
            };
            interval_loss = 0.0;
            interval_steps = 0;
            log.eval_row(&point);
            log.flush()?;
            if opts.save_checkpoints {
                let ckpt = opts.out_dir.join("checkpoints");
                checkpoint::save(&ckpt.join("last"), &model.config, &model.params, done)?;
                let score = point.report.as_ref().and_then(|r| headline(model, r));
                if let Some(score) = score.filter(|&s| s > best) {
                    best = score;
                    summary.best_step = Some(done);
                    checkpoint::save(&ckpt.join("best"), &model.config, &model.params, done)?;
                }
            } else if let Some(score) = point.report.as_ref().and_then(|r| headline(model, r)) {
                if score > best {
                    best = score;
                    summary.best_step = Some(done);
                }
            }
            summary.curve.push(point);
        }
    }
    log.flush()?;
    Ok(summary)
}

#[derive(Serialize)]
struct GradStat<'a> {
    name: &'a str,
    norm: f64,
    finite: bool,
}

#[derive(Serialize)]
struct Diagnostic<'a> {
    step: u64,
    epoch: u64,
    lr: f64,
    loss: Option<f64>,
    parameter: Option<&'a str>,
    gradients: Vec<GradStat<'a>>,
}

#[allow(clippy::too_many_arguments)]
fn write_diagnostic(
    dir: &Path,
    model: &SwinModel,
    step: u64,
    epoch: u64,
    lr: f64,
    loss: f64,
    parameter: Option<&str>,
    grads: &[Option<Vec<f64>>],
) -> Result<PathBuf> {
    let gradients = model
        .params
        .entries()
        .iter()
        .zip(grads)
        .filter_map(|(e, g)| {
            let g = g.as_ref()?;
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            Some(GradStat { name: &e.name, norm: if norm.is_finite() { norm } else { f64::MAX }, finite: norm.is_finite() })
        })
        .collect();
    let diag = Diagnostic { step, epoch, lr, loss: loss.is_finite().then_some(loss), parameter, gradients };
    let path = dir.join(DIAGNOSTIC_FILE);
    let json = serde_json::to_vec_pretty(&diag).expect("diagnostic serializes");
    write_atomic(&path, &json).map_err(|e| CoreError::io(&path, e))?;
    Ok(path)
}

/// Accumulates CSV rows in memory and rewrites both files atomically.
struct CurveLog {
    dir: PathBuf,
    classification: bool,
    steps: csv::Writer<Vec<u8>>,
    curve: csv::Writer<Vec<u8>>,
}

fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl CurveLog {
    fn new(dir: &Path, classification: bool) -> Self {
        let mut steps = csv::Writer::from_writer(Vec::new());
        let mut curve = csv::Writer::from_writer(Vec::new());
        steps.write_record(["step", "epoch", "lr", "train_loss"]).expect("in-memory write");
        let header: &[&str] = if classification {
            &["step", "epoch", "lr", "train_loss", "val_top1", "val_top5"]
        } else {
            &["step", "epoch", "lr", "train_loss", "val_miou", "val_macc", "val_aacc"]
        };
        curve.write_record(header).expect("in-memory write");
        Self { dir: dir.to_path_buf(), classification, steps, curve }
    }

    fn step_row(&mut self, step: u64, epoch: u64, lr: f64, loss: f64) {
        self.steps
            .write_record([step.to_string(), epoch.to_string(), lr.to_string(), loss.to_string()])
            .expect("in-memory write");
    }

    fn eval_row(&mut self, p: &EvalPoint) {
        let mut row = vec![p.step.to_string(), p.epoch.to_string(), p.lr.to_string(), p.train_loss.to_string()];
        let r = p.report.as_ref();
        if self.classification {
            row.push(num(r.and_then(|r| r.top1)));
            row.push(num(r.and_then(|r| r.top5)));
        } else {
            row.push(num(r.and_then(|r| r.miou)));
            row.push(num(r.and_then(|r| r.macc)));
            row.push(num(r.and_then(|r| r.aacc)));
        }
        self.curve.write_record(&row).expect("in-memory write");
    }

    fn flush(&mut self) -> Result<()> {
        for (writer, name) in [(&mut self.steps, STEPS_FILE), (&mut self.curve, CURVE_FILE)] {
            writer.flush().map_err(|e| CoreError::io(name, e))?;
            let path = self.dir.join(name);
            write_atomic(&path, writer.get_ref()).map_err(|e| CoreError::io(&path, e))?;
        }
        Ok(())
    }
}
