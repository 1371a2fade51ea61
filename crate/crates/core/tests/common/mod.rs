#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swinct_core::heads::HeadConfig;
use swinct_core::params::ParamStore;
use swinct_core::swin::SwinConfig;
use swinct_core::{ModelConfig, SwinModel};
use swinct_tensor::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Replaces every parameter with uniform noise so zero-initialized tables and
/// biases take part in the computation.
pub fn randomize(ps: &mut ParamStore, rng: &mut ChaCha8Rng, scale: f64) {
    let ids: Vec<_> = ps.ids().collect();
    for id in ids {
        let shape = ps.get(id).shape().to_vec();
        let name = ps.entry(id).name.clone();
        let mut t = random(rng, &shape, scale);
        if name.ends_with("norm1.weight") || name.ends_with("norm2.weight") || name.ends_with("norm.weight") {
            t = t.add_scalar(1.0);
        }
        ps.set(id, t).unwrap();
    }
}

pub fn toy_config(img: usize, dim: usize, heads: [usize; 4], window: usize) -> SwinConfig {
    SwinConfig {
        variant: "toy".into(),
        img_size: img,
        patch_size: 4,
        in_channels: 3,
        embed_dim: dim,
        depths: [2, 2, 2, 2],
        num_heads: heads,
        window_size: window,
        mlp_ratio: 4,
        drop_path_rate: 0.0,
    }
}

pub fn toy_model(head: HeadConfig, seed: u64) -> SwinModel {
    SwinModel::new(ModelConfig { backbone: toy_config(32, 8, [2, 2, 2, 2], 4), head }, seed).unwrap()
}

pub fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len(), "length");
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "index {i}: {x} vs {y}");
    }
}
pub mod oracle;
