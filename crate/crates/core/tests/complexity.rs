mod common;

use common::toy_config;
use num_bigint::BigUint;
use proptest::prelude::*;
use swinct_core::complexity::*;
use swinct_core::heads::HeadConfig;
use swinct_core::swin::SwinConfig;
use swinct_core::{ModelConfig, SwinModel};

const IMAGENET: HeadConfig = HeadConfig::Classifier { num_classes: 1000 };

fn big(v: u64) -> BigUint {
    BigUint::from(v)
}

fn msa_oracle(h: u64, w: u64, c: u64) -> BigUint {
    let hw = big(h) * big(w);
    big(4) * &hw * big(c) * big(c) + big(2) * &hw * &hw * big(c)
}

fn wmsa_oracle(h: u64, w: u64, c: u64, m: u64) -> BigUint {
    let hw = big(h) * big(w);
    big(4) * &hw * big(c) * big(c) + big(2) * big(m) * big(m) * &hw * big(c)
}

#[test]
fn attention_formula_examples() {
    assert_eq!(flops_msa(56, 56, 96).unwrap(), 2_003_828_736);
    assert_eq!(flops_wmsa(56, 56, 96, 7).unwrap(), 145_108_992);
    assert_eq!(big(flops_msa(56, 56, 96).unwrap()), msa_oracle(56, 56, 96));
    assert_eq!(big(flops_wmsa(56, 56, 96, 7).unwrap()), wmsa_oracle(56, 56, 96, 7));
    assert_eq!(flops_wmsa(14, 14, 32, 14).unwrap(), flops_msa(14, 14, 32).unwrap());
    assert!(flops_wmsa(56, 56, 96, 5).is_err());
    assert!(flops_msa(0, 56, 96).is_err());
}

#[test]
fn overflow_is_reported() {
    assert!(flops_msa(1 << 20, 1 << 20, 1 << 10).is_err());
    assert!(flops_wmsa(1 << 22, 1 << 22, 1 << 12, 1).is_err());
}

proptest! {
    #[test]
    fn formulas_match_big_integer_oracle(h in 1u64..5000, w in 1u64..5000, c in 1u64..5000) {
        let oracle = msa_oracle(h, w, c);
        match flops_msa(h, w, c) {
            Ok(v) => prop_assert_eq!(big(v), oracle),
            Err(_) => prop_assert!(oracle > big(u64::MAX)),
        }
    }

    #[test]
    fn windowed_never_exceeds_global(gh in 1u64..20, gw in 1u64..20, m in 1u64..12, c in 1u64..512) {
        let (h, w) = (gh * m, gw * m);
        let wmsa = flops_wmsa(h, w, c, m).unwrap();
        prop_assert_eq!(big(wmsa), wmsa_oracle(h, w, c, m));
        let msa = flops_msa(h, w, c).unwrap();
        prop_assert!(wmsa <= msa);
        prop_assert_eq!(wmsa == msa, m == h && m == w);
    }
}

#[test]
fn doubling_resolution_scales_linear_and_quadratic_terms() {
    let (c, m) = (96u64, 7u64);
    let ratio = |f: &dyn Fn(u64) -> u64, h: u64| f(2 * h) as f64 / f(h) as f64;
    let w = |h| flops_wmsa(h, h, c, m).unwrap();
    let g = |h| flops_msa(h, h, c).unwrap();
    for h in [56, 112, 224] {
        assert!((ratio(&w, h) - 4.0).abs() < 1e-12);
    }
    let quad = |h: u64| g(h) - 4 * h * h * c * c;
    assert!((ratio(&quad, 56) - 16.0).abs() < 1e-12);
    let mut prev = 0.0;
    for h in [14, 56, 224, 896] {
        let r = ratio(&g, h);
        assert!(r > prev && r < 16.0);
        prev = r;
    }
    assert!(prev > 15.0);
}

fn within(value: u64, target: f64, tol: f64) -> bool {
    (value as f64 - target).abs() <= tol * target
}

#[test]
fn classification_goldens() {
    let cases = [
        (SwinConfig::swin_t(), 224, 28e6, 4.5e9),
        (SwinConfig::swin_s(), 224, 50e6, 8.7e9),
        (SwinConfig::swin_b(), 224, 88e6, 15.4e9),
        (SwinConfig::swin_b_384(), 384, 88e6, 47.1e9),
    ];
    for (cfg, res, params, flops) in cases {
        let r = count_model(&cfg, &IMAGENET, res).unwrap();
        assert!(within(r.params, params, 0.03), "{} params {}", cfg.variant, r.params);
        assert!(within(r.flops, flops, 0.05), "{} flops {}", cfg.variant, r.flops);
    }
    let t = count_model(&SwinConfig::swin_t(), &IMAGENET, 224).unwrap();
    assert_eq!((t.params, t.flops), (28_288_354, 4_490_566_656));
}

#[test]
fn totals_are_sums_of_parts() {
    let r = count_model(&SwinConfig::swin_s(), &IMAGENET, 224).unwrap();
    assert_eq!(r.params, r.parts.iter().map(|p| p.params).sum::<u64>());
    assert_eq!(r.flops, r.parts.iter().map(|p| p.flops).sum::<u64>());
    assert_eq!(r.parts.len(), 1 + 3 + 24 + 1);
}

#[test]
fn params_are_resolution_invariant_and_flops_scale_linearly() {
    let cfg = SwinConfig::swin_t();
    let a = count_model(&cfg, &IMAGENET, 224).unwrap();
    let b = count_model(&cfg, &IMAGENET, 448).unwrap();
    assert_eq!(a.params, b.params);
    // every stage keeps a full 7×7 window, so all token-wise costs scale by 4
    let head = |r: &ComplexityReport| r.parts.last().unwrap().flops;
    assert_eq!(b.flops - head(&b), 4 * (a.flops - head(&a)));
    assert_eq!(b.attention_flops, 4 * a.attention_flops);
}

#[test]
fn parameter_count_matches_built_model() {
    let heads = [IMAGENET, HeadConfig::Segmentation { num_classes: 5, decoder_dim: 12 }];
    for head in heads {
        for (backbone, res) in [(toy_config(64, 8, [2, 2, 2, 2], 4), 64), (toy_config(32, 12, [1, 2, 3, 4], 3), 32)] {
            let model = SwinModel::new(ModelConfig { backbone: backbone.clone(), head: head.clone() }, 0).unwrap();
            let report = count_model(&backbone, &head, res).unwrap();
            assert_eq!(report.params as usize, model.params.num_scalars());
        }
    }
    let model = SwinModel::new(ModelConfig { backbone: SwinConfig::swin_t(), head: IMAGENET }, 0).unwrap();
    assert_eq!(model.params.num_scalars(), 28_288_354);
}

#[test]
fn zero_depth_closed_form() {
    let mut cfg = toy_config(32, 8, [1, 1, 1, 1], 4);
    cfg.depths = [0, 0, 0, 0];
    let k = 10;
    let r = count_model(&cfg, &HeadConfig::Classifier { num_classes: k }, 32).unwrap();
    // patch embed: 48·8 weights, 8 biases, norm 2·8
    let embed = 48 * 8 + 8 + 16;
    // merge from dim d: norm over 4d plus a 4d → 2d reduction without bias
    let merges: usize = [8, 16, 32].iter().map(|d| 8 * d + 8 * d * d).sum();
    let head = 2 * 64 + 64 * k + k;
    assert_eq!(r.params as usize, embed + merges + head);
    let flops = 8 * 8 * 48 * 8 + 4 * 4 * 32 * 16 + 2 * 2 * 64 * 32 + 128 * 64 + 64 * k;
    assert_eq!(r.flops as usize, flops);
    assert_eq!(r.attention_flops, 0);
    let model = SwinModel::new(ModelConfig { backbone: cfg, head: HeadConfig::Classifier { num_classes: k } }, 0).unwrap();
    assert_eq!(model.params.num_scalars(), embed + merges + head);
}

#[test]
fn segmentation_counts_include_decoder() {
    let head = HeadConfig::Segmentation { num_classes: 150, decoder_dim: 512 };
    let cls = count_model(&SwinConfig::swin_t(), &IMAGENET, 512).unwrap();
    let seg = count_model(&SwinConfig::swin_t(), &head, 512).unwrap();
    assert!(seg.parts.iter().any(|p| p.name == "decoder.fuse"));
    assert!(seg.flops > cls.flops);
    assert_eq!(seg.attention_flops, cls.attention_flops);
}
