mod common;

use common::{random, rng, toy_config, toy_model};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use swinct_core::heads::HeadConfig;
use swinct_core::params::ParamStore;
use swinct_core::train::*;
use swinct_core::{CoreError, ModelConfig, SwinModel};
use swinct_tensor::Tensor;

#[test]
fn adamw_single_step_example() {
    let cfg = AdamWConfig::with_decay(0.05);
    let (mut theta, mut m, mut v) = (vec![1.0], vec![0.0], vec![0.0]);
    adamw_update(&mut theta, &[1.0], &mut m, &mut v, 1, 1e-3, 0.05, &cfg);
    let expected = 1.0 - 1e-3 * 0.05 - 1e-3 / (1.0 + 1e-8);
    assert!((theta[0] - expected).abs() < 1e-15);
    assert!((theta[0] - 0.99895).abs() < 1e-7);
}

#[test]
fn adamw_zero_grad_cases() {
    let cfg = AdamWConfig::with_decay(0.0);
    let (mut theta, mut m, mut v) = (vec![0.7, -2.0], vec![0.0; 2], vec![0.0; 2]);
    adamw_update(&mut theta, &[0.0, 0.0], &mut m, &mut v, 1, 1e-2, 0.0, &cfg);
    assert_eq!(theta, vec![0.7, -2.0]);
    // with decay and no gradient the update is pure shrinkage
    adamw_update(&mut theta, &[0.0, 0.0], &mut m, &mut v, 2, 1e-2, 0.1, &cfg);
    assert_eq!(theta, vec![0.7 * (1.0 - 1e-3), -2.0 * (1.0 - 1e-3)]);
}

/// Textbook Adam written independently of the library.
fn adam_oracle(theta: &mut [f64], grads: &[Vec<f64>], lr: f64) {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    for (t, g) in grads.iter().enumerate() {
        let t = t as i32 + 1;
        for i in 0..theta.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = m[i] / (1.0 - b1.powi(t));
            let vh = v[i] / (1.0 - b2.powi(t));
            theta[i] = theta[i] * 1.0 - lr * mh / (vh.sqrt() + eps);
        }
    }
}

proptest! {
    #[test]
    fn adamw_without_decay_is_adam(init in prop::collection::vec(-3.0f64..3.0, 4), gs in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 1..6)) {
        let mut expected = init.clone();
        adam_oracle(&mut expected, &gs, 1e-2);
        let mut theta = init.clone();
        let (mut m, mut v) = (vec![0.0; 4], vec![0.0; 4]);
        for (t, g) in gs.iter().enumerate() {
            adamw_update(&mut theta, g, &mut m, &mut v, t as u64 + 1, 1e-2, 0.0, &AdamWConfig::with_decay(0.0));
        }
        prop_assert_eq!(theta, expected);
    }

    #[test]
    fn schedules_are_continuous_and_monotone(warm in 0u64..50, extra in 1u64..200, base in 1e-6f64..1e-2, cosine in any::<bool>()) {
        let kind = if cosine { ScheduleKind::Cosine } else { ScheduleKind::Linear };
        let s = Schedule::new(kind, base, warm, warm + extra, 0.0).unwrap();
        let mut prev = f64::INFINITY;
        for step in warm..=warm + extra {
            let lr = s.lr_at(step).unwrap();
            prop_assert!(lr >= 0.0 && lr <= prev + 1e-18);
            prev = lr;
        }
        for step in 0..warm {
            prop_assert!(s.lr_at(step).unwrap() <= s.lr_at(step + 1).unwrap());
        }
        if warm > 0 {
            let jump = s.lr_at(warm).unwrap() - s.lr_at(warm - 1).unwrap();
            prop_assert!(jump <= base / warm as f64 + 1e-15);
        }
        prop_assert!(s.lr_at(warm + extra + 1).is_err());
    }

    #[test]
    fn ema_contracts_toward_fixed_params(decay in 0.0f64..1.0, k in 1usize..30, start in -5.0f64..5.0, target in -5.0f64..5.0) {
        let mut ps = ParamStore::new();
        let id = ps.add("p", Tensor::scalar(start), true);
        let mut ema = Ema::new(&ps, decay);
        ps.set(id, Tensor::scalar(target)).unwrap();
        for _ in 0..k {
            ema.update(&ps).unwrap();
        }
        let bound = decay.powi(k as i32) * (start - target).abs();
        prop_assert!((ema.shadow[0][0] - target).abs() <= bound + 1e-12);
    }
}

#[test]
fn schedule_examples() {
    let s = Schedule::new(ScheduleKind::Cosine, 1e-3, 10, 110, 1e-5).unwrap();
    assert_eq!(s.lr_at(10).unwrap(), 1e-3);
    assert_eq!(s.lr_at(0).unwrap(), 0.0);
    assert!((s.lr_at(110).unwrap() - 1e-5).abs() < 1e-18);
    assert!((s.lr_at(60).unwrap() - (1e-3 + 1e-5) / 2.0).abs() < 1e-15);
    let lin = Schedule::new(ScheduleKind::Linear, 1e-4, 0, 100, 0.0).unwrap();
    assert!((lin.lr_at(25).unwrap() - 7.5e-5).abs() < 1e-18);
    let c = Schedule::new(ScheduleKind::Constant, 1e-5, 5, 30, 0.0).unwrap();
    assert_eq!(c.lr_at(29).unwrap(), 1e-5);
    assert!(Schedule::new(ScheduleKind::Linear, 1e-4, 10, 5, 0.0).is_err());
    assert!(Schedule::new(ScheduleKind::Linear, -1.0, 0, 5, 0.0).is_err());
}

#[test]
fn ema_examples() {
    let mut ps = ParamStore::new();
    let id = ps.add("p", Tensor::scalar(0.0), true);
    let mut half = Ema::new(&ps, 0.5);
    let mut zero = Ema::new(&ps, 0.0);
    let mut one = Ema::new(&ps, 1.0);
    ps.set(id, Tensor::scalar(1.0)).unwrap();
    for _ in 0..2 {
        half.update(&ps).unwrap();
        zero.update(&ps).unwrap();
        one.update(&ps).unwrap();
    }
    assert_eq!(half.shadow[0][0], 0.75);
    assert_eq!(zero.shadow[0][0], 1.0);
    assert_eq!(one.shadow[0][0], 0.0);
    assert_eq!(half.to_store(&ps).unwrap().get(id).item(), 0.75);
}

#[test]
fn recipe_presets() {
    let a = Recipe::regular();
    assert_eq!((a.base_lr, a.optimizer.weight_decay, a.batch_size), (1e-3, 0.05, 28));
    assert_eq!((a.warmup, a.length), (Span::Epochs(20), Span::Epochs(300)));
    let b = Recipe::finetune();
    assert_eq!((b.base_lr, b.optimizer.weight_decay, b.warmup, b.length), (1e-5, 1e-8, Span::Epochs(5), Span::Epochs(30)));
    let c = Recipe::segmentation();
    assert_eq!((c.base_lr, c.optimizer.weight_decay, c.drop_path), (1e-4, 0.01, 0.2));
    assert_eq!((c.warmup, c.length), (Span::Steps(1500), Span::Steps(40_000)));
    assert!(Recipe::named("other").is_err());
    for r in [a, b, c] {
        assert_eq!(r.ema, None);
        assert_eq!(r.grad_clip, None);
        r.validate().unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<Recipe>(&json).unwrap(), r);
    }
    assert!(serde_json::from_str::<Recipe>(r#"{"name":"x","bogus":1}"#).is_err());
}

#[test]
fn regular_recipe_trace() {
    let r = Recipe::regular();
    let n = 280;
    let spe = r.steps_per_epoch(n);
    assert_eq!(spe, 10);
    let s = r.schedule(n).unwrap();
    assert_eq!(s.lr_at(0).unwrap(), 0.0);
    assert_eq!(s.lr_at(20 * spe).unwrap(), 1e-3);
    assert_eq!(s.lr_at(300 * spe).unwrap(), r.min_lr);
    assert_eq!(r.steps_per_epoch(290), 10);
    assert_eq!(r.steps_per_epoch(5), 1);
}

#[test]
fn optimizer_rejects_non_finite_gradients() {
    let model = toy_model(HeadConfig::Classifier { num_classes: 2 }, 0);
    let mut ps = model.params.clone();
    let before: Vec<Vec<f64>> = ps.entries().iter().map(|e| e.value.to_vec()).collect();
    let mut grads: Vec<Option<Vec<f64>>> = ps.entries().iter().map(|e| Some(vec![0.1; e.value.numel()])).collect();
    let target = ps.find("stages.1.blocks.0.attn.qkv.weight").unwrap();
    let k = ps.ids().position(|id| id == target).unwrap();
    grads[k].as_mut().unwrap()[3] = f64::INFINITY;
    let mut opt = AdamW::new(&ps, AdamWConfig::with_decay(0.05));
    match opt.step(&mut ps, &grads, 1e-3) {
        Err(CoreError::NonFinite { param: Some(name), step: 1, .. }) => {
            assert_eq!(name, "stages.1.blocks.0.attn.qkv.weight")
        }
        other => panic!("expected a non-finite error, got {other:?}"),
    }
    assert_eq!(opt.step, 0);
    let after: Vec<Vec<f64>> = ps.entries().iter().map(|e| e.value.to_vec()).collect();
    assert_eq!(before, after);
}

#[test]
fn decay_exemptions_and_missing_grads() {
    let model = toy_model(HeadConfig::Classifier { num_classes: 2 }, 0);
    let mut ps = model.params.clone();
    let exempt: Vec<&str> = ps.entries().iter().filter(|e| !e.decay).map(|e| e.name.as_str()).collect();
    assert!(exempt.iter().all(|n| n.ends_with(".bias") || n.contains("norm") || n.ends_with("bias_table")));
    assert!(ps.entries().iter().filter(|e| e.decay).all(|e| e.name.ends_with(".weight") && !e.name.contains("norm")));
    let grads: Vec<Option<Vec<f64>>> = ps.entries().iter().map(|_| None).collect();
    let before: Vec<Vec<f64>> = ps.entries().iter().map(|e| e.value.to_vec()).collect();
    AdamW::new(&ps, AdamWConfig::with_decay(0.5)).step(&mut ps, &grads, 1.0).unwrap();
    let after: Vec<Vec<f64>> = ps.entries().iter().map(|e| e.value.to_vec()).collect();
    assert_eq!(before, after);
}

#[test]
fn clipping_bounds_the_global_norm() {
    let mut grads = vec![Some(vec![3.0, 4.0]), None, Some(vec![12.0])];
    assert_eq!(clip_grad_norm(&mut grads, 1.0), 13.0);
    assert!((global_grad_norm(&grads) - 1.0).abs() < 1e-15);
    let mut small = vec![Some(vec![0.1])];
    clip_grad_norm(&mut small, 1.0);
    assert_eq!(small[0], Some(vec![0.1]));
}

/// Bright images are class 1, dark images class 0, with pixel noise.
struct Blobs {
    n: usize,
    size: usize,
    poison: bool,
}

impl Dataset for Blobs {
    fn len(&self) -> usize {
        self.n
    }

    fn batch(&self, indices: &[usize], augment: Option<&mut ChaCha8Rng>) -> swinct_core::Result<Batch> {
        let px = self.size * self.size * 3;
        let mut data = Vec::with_capacity(indices.len() * px);
        let mut labels = Vec::new();
        let jitter = augment.map(|r| r.random_range(-0.05..0.05)).unwrap_or(0.0);
        for &i in indices {
            let class = i % 2;
            let mut r = rng(i as u64);
            let level = if class == 1 { 0.5 } else { -0.5 };
            data.extend((0..px).map(|_| level + jitter + r.random_range(-0.8..0.8)));
            labels.push(class);
        }
        if self.poison {
            data[0] = f64::NAN;
        }
        let images = Tensor::from_vec(&[indices.len(), self.size, self.size, 3], data)?;
        Ok(Batch { images, targets: Targets::Classes(labels) })
    }
}

fn quick_recipe(epochs: u64) -> Recipe {
    Recipe {
        name: "quick".into(),
        optimizer: AdamWConfig::with_decay(0.01),
        schedule: ScheduleKind::Constant,
        base_lr: 2e-3,
        min_lr: 0.0,
        warmup: Span::Steps(0),
        length: Span::Epochs(epochs),
        batch_size: 8,
        drop_path: 0.0,
        ema: Some(0.9),
        grad_clip: None,
        augment: true,
    }
}

fn small_model(seed: u64) -> SwinModel {
    let backbone = toy_config(32, 8, [2, 2, 2, 2], 4);
    SwinModel::new(ModelConfig { backbone, head: HeadConfig::Classifier { num_classes: 2 } }, seed).unwrap()
}

#[test]
fn separable_blobs_train_with_decreasing_loss() {
    let dir = tempfile::tempdir().unwrap();
    let train = Blobs { n: 32, size: 32, poison: false };
    let val = Blobs { n: 16, size: 32, poison: false };
    let mut model = small_model(1);
    let opts = TrainOptions::new(dir.path(), 7);
    let summary = run_recipe(&mut model, &train, Some(&val), &quick_recipe(10), &opts).unwrap();
    assert_eq!(summary.steps, 40);
    assert_eq!(summary.curve.len(), 10);
    let losses: Vec<f64> = summary.curve.iter().map(|p| p.train_loss).collect();
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "epoch losses {losses:?}");
    let last = summary.curve.last().unwrap().report.as_ref().unwrap();
    assert_eq!(last.top1, Some(1.0));
    assert_eq!(last.top5, Some(1.0));

    let curve = std::fs::read_to_string(dir.path().join(CURVE_FILE)).unwrap();
    assert!(curve.starts_with("step,epoch,lr,train_loss,val_top1,val_top5\n"));
    assert_eq!(curve.lines().count(), 11);
    let steps = std::fs::read_to_string(dir.path().join(STEPS_FILE)).unwrap();
    assert!(steps.starts_with("step,epoch,lr,train_loss\n"));
    assert_eq!(steps.lines().count(), 41);

    let (last_model, step) = checkpoint::load(&dir.path().join("checkpoints/last")).unwrap();
    assert_eq!(step, 40);
    for (a, b) in last_model.params.entries().iter().zip(model.params.entries()) {
        assert_eq!(a.value.data(), b.value.data(), "{}", a.name);
    }
    let (_, best_step) = checkpoint::load(&dir.path().join("checkpoints/best")).unwrap();
    assert_eq!(Some(best_step), summary.best_step);
}

#[test]
fn identical_seeds_give_identical_logs() {
    let run = |seed: u64| {
        let dir = tempfile::tempdir().unwrap();
        let train = Blobs { n: 24, size: 32, poison: false };
        let mut model = small_model(3);
        let mut opts = TrainOptions::new(dir.path(), seed);
        opts.save_checkpoints = false;
        let mut recipe = quick_recipe(2);
        recipe.drop_path = 0.2;
        run_recipe(&mut model, &train, Some(&train), &recipe, &opts).unwrap();
        let read = |f| std::fs::read(dir.path().join(f)).unwrap();
        (read(STEPS_FILE), read(CURVE_FILE))
    };
    let a = run(11);
    assert_eq!(a, run(11));
    assert_ne!(a.0, run(12).0);
}

#[test]
fn non_finite_loss_halts_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let train = Blobs { n: 16, size: 32, poison: true };
    let mut model = small_model(0);
    let err = run_recipe(&mut model, &train, None, &quick_recipe(1), &TrainOptions::new(dir.path(), 0)).unwrap_err();
    match err {
        CoreError::NonFinite { step: 1, diagnostic: Some(path), .. } => {
            let diag: serde_json::Value = serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
            assert_eq!(diag["step"], 1);
        }
        other => panic!("expected a non-finite halt, got {other:?}"),
    }
}

#[test]
fn empty_dataset_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let train = Blobs { n: 0, size: 32, poison: false };
    let err = run_recipe(&mut small_model(0), &train, None, &quick_recipe(1), &TrainOptions::new(dir.path(), 0));
    assert!(matches!(err, Err(CoreError::Usage(_))));
}

#[test]
fn max_steps_truncates_without_changing_the_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let train = Blobs { n: 16, size: 32, poison: false };
    let mut recipe = quick_recipe(10);
    recipe.schedule = ScheduleKind::Linear;
    let mut opts = TrainOptions::new(dir.path(), 0);
    opts.max_steps = Some(3);
    opts.save_checkpoints = false;
    let summary = run_recipe(&mut small_model(0), &train, None, &recipe, &opts).unwrap();
    assert_eq!(summary.steps, 3);
    let lr = summary.curve.last().unwrap().lr;
    assert_eq!(lr, recipe.schedule(16).unwrap().lr_at(2).unwrap());
}

#[test]
fn checkpoint_roundtrip_and_shape_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let mut model = small_model(5);
    common::randomize(&mut model.params, &mut rng(2), 0.5);
    checkpoint::save(dir.path(), &model.config, &model.params, 17).unwrap();
    let (loaded, step) = checkpoint::load(dir.path()).unwrap();
    assert_eq!(step, 17);
    assert_eq!(loaded.config, model.config);
    let x = random(&mut rng(3), &[1, 32, 32, 3], 1.0);
    assert_eq!(loaded.forward(&x, None).unwrap().data(), model.forward(&x, None).unwrap().data());

    // a different head keeps the backbone loadable
    let mut other = toy_model(HeadConfig::Segmentation { num_classes: 2, decoder_dim: 4 }, 0);
    let report = checkpoint::init_from(dir.path(), &mut other.params).unwrap();
    assert!(report.unexpected.iter().any(|n| n.starts_with("head.")));
    assert!(report.missing.iter().all(|n| n.starts_with("decoder.")));
    let id = other.params.find("stages.0.blocks.0.attn.qkv.weight").unwrap();
    assert_eq!(other.params.get(id).data(), model.params.get(model.params.find("stages.0.blocks.0.attn.qkv.weight").unwrap()).data());

    // a wider model cannot take the weights
    let wide_cfg = ModelConfig { backbone: toy_config(32, 16, [2, 2, 2, 2], 4), head: model.config.head.clone() };
    let mut wide = SwinModel::new(wide_cfg, 0).unwrap();
    match checkpoint::init_from(dir.path(), &mut wide.params) {
        Err(CoreError::Checkpoint { msg, .. }) => {
            assert!(msg.contains("patch_embed.proj.weight: checkpoint [48, 8], model [48, 16]"), "{msg}");
        }
        other => panic!("expected a shape mismatch, got {other:?}"),
    }
    let manifest = checkpoint::read_manifest(dir.path()).unwrap();
    assert_eq!(manifest.format, checkpoint::CHECKPOINT_FORMAT);
    assert_eq!(manifest.params.len(), model.params.len());
}
