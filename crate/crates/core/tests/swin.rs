mod common;

use common::oracle::{brute_force_mask, region_attention};
use common::{assert_close, random, randomize, rng, toy_config};
use proptest::prelude::*;
use swinct_core::params::ParamStore;
use swinct_core::swin::*;
use swinct_tensor::{no_grad, Tensor};

#[test]
fn shift_size_examples() {
    assert_eq!(shift_size(7).unwrap(), 3);
    assert_eq!(shift_size(1).unwrap(), 0);
    assert_eq!(shift_size(2).unwrap(), 1);
    assert!(shift_size(0).is_err());
}

#[test]
fn variant_validation() {
    for cfg in [SwinConfig::swin_t(), SwinConfig::swin_s(), SwinConfig::swin_b(), SwinConfig::swin_b_384()] {
        cfg.validate().unwrap();
    }
    let mut odd = SwinConfig::swin_t();
    odd.depths[2] = 3;
    assert!(odd.validate().is_err());
    let mut heads = SwinConfig::swin_t();
    heads.num_heads[0] = 5;
    assert!(heads.validate().is_err());
    let mut img = SwinConfig::swin_t();
    img.img_size = 226;
    assert!(img.validate().is_err());
    assert!(SwinConfig::variant("swin-x", 224).is_err());
    assert_eq!(SwinConfig::variant("swin-b", 384).unwrap().window_size, 12);
}

#[test]
fn stage_geometry_follows_window_rules() {
    let t = SwinConfig::swin_t();
    let res: Vec<usize> = (0..4).map(|i| t.stage_resolution(i)).collect();
    assert_eq!(res, vec![56, 28, 14, 7]);
    assert_eq!((0..4).map(|i| t.stage_dim(i)).collect::<Vec<_>>(), vec![96, 192, 384, 768]);
    let last = t.stage_geometry(3);
    assert_eq!((last.window, last.shift, last.is_padded()), (7, 0, false));
    let first = t.stage_geometry(0);
    assert_eq!((first.window, first.shift, first.num_windows()), (7, 3, 64));

    let b = SwinConfig::swin_b_384();
    assert_eq!((0..4).map(|i| b.stage_resolution(i)).collect::<Vec<_>>(), vec![96, 48, 24, 12]);
    assert!((0..4).all(|i| !b.stage_geometry(i).is_padded()));

    let small = StageGeometry::new(3, 3, 7);
    assert_eq!((small.window, small.shift, small.is_padded()), (3, 0, false));
    let padded = StageGeometry::new(10, 10, 4);
    assert_eq!((padded.padded_h, padded.shift), (12, 2));
}

#[test]
fn drop_path_rates_are_linear() {
    let mut cfg = SwinConfig::swin_t();
    cfg.drop_path_rate = 0.2;
    let r = cfg.drop_path_rates();
    assert_eq!(r.len(), 12);
    assert_eq!(r[0], 0.0);
    assert!((r[11] - 0.2).abs() < 1e-15);
    assert!(r.windows(2).all(|p| p[1] > p[0]));
}

fn patch_embed(dim: usize) -> (ParamStore, PatchEmbed) {
    let mut ps = ParamStore::new();
    let mut cfg = toy_config(32, dim, [1, 1, 1, 1], 4);
    cfg.embed_dim = dim;
    let pe = PatchEmbed::new(&mut ps, &mut rng(0), "patch_embed", &cfg);
    (ps, pe)
}

#[test]
fn patch_embed_shapes() {
    let (ps, pe) = patch_embed(96);
    let y = no_grad(|| pe.forward(&ps, &Tensor::zeros(&[1, 224, 224, 3]))).unwrap();
    assert_eq!(y.shape(), &[1, 56, 56, 96]);
    let y = pe.forward(&ps, &Tensor::zeros(&[2, 8, 8, 3])).unwrap();
    assert_eq!(y.shape(), &[2, 2, 2, 96]);
    assert!(pe.forward(&ps, &Tensor::zeros(&[1, 10, 8, 3])).is_err());
}

#[test]
fn patch_embed_projection_is_a_linear_map_of_flattened_patches() {
    let c = 8;
    let (mut ps, pe) = patch_embed(c);
    let mut w = vec![0.0; 48 * c];
    for i in 0..c {
        w[i * c + i] = 1.0;
    }
    ps.set(pe.proj.weight, Tensor::from_vec(&[48, c], w).unwrap()).unwrap();
    let img = random(&mut rng(3), &[1, 8, 8, 3], 1.0);
    let y = pe.project(&ps, &img).unwrap();
    let x = img.data();
    for (pr, pc) in [(0usize, 0usize), (0, 1), (1, 0), (1, 1)] {
        // first 8 values of the patch: rows py=0 then px=0..3, channels 0..2
        let mut expected = Vec::new();
        'outer: for py in 0..4 {
            for px in 0..4 {
                for ch in 0..3 {
                    if expected.len() == c {
                        break 'outer;
                    }
                    expected.push(x[((pr * 4 + py) * 8 + pc * 4 + px) * 3 + ch]);
                }
            }
        }
        let t = pr * 2 + pc;
        assert_eq!(&y.data()[t * c..(t + 1) * c], expected.as_slice());
    }
}

#[test]
fn patch_merge_shapes_and_identity_reduction() {
    let mut ps = ParamStore::new();
    let pm = PatchMerge::new(&mut ps, &mut rng(0), "m", 96);
    let y = no_grad(|| pm.forward(&ps, &Tensor::zeros(&[1, 56, 56, 96]))).unwrap();
    assert_eq!(y.shape(), &[1, 28, 28, 192]);
    assert!(pm.forward(&ps, &Tensor::zeros(&[1, 5, 4, 96])).is_err());

    let gathered = PatchMerge::gather(&Tensor::from_vec(&[1, 2, 2, 4], (0..16).map(f64::from).collect()).unwrap())
        .unwrap();
    let mut w = vec![0.0; 16 * 8];
    for i in 0..8 {
        w[i * 8 + i] = 1.0;
    }
    let reduced = gathered.linear(&Tensor::from_vec(&[16, 8], w).unwrap(), None).unwrap();
    assert_eq!(reduced.data(), &gathered.data()[..8]);
}

#[test]
fn patch_merge_concat_order_is_tl_bl_tr_br() {
    // token (r, c) carries the value 10r + c in every channel
    let (h, w, d) = (4, 4, 2);
    let data: Vec<f64> = (0..h * w * d).map(|i| ((i / d) / w * 10 + (i / d) % w) as f64).collect();
    let g = PatchMerge::gather(&Tensor::from_vec(&[1, h, w, d], data).unwrap()).unwrap();
    assert_eq!(g.shape(), &[1, 2, 2, 8]);
    for (orow, ocol) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        let t = orow * 2 + ocol;
        let block = &g.data()[t * 8..(t + 1) * 8];
        let (r, c) = (2 * orow, 2 * ocol);
        let expect = [(r, c), (r + 1, c), (r, c + 1), (r + 1, c + 1)];
        for (slot, (er, ec)) in expect.iter().enumerate() {
            assert_eq!(block[slot * d], (er * 10 + ec) as f64);
        }
    }
}

#[test]
fn window_partition_examples() {
    let x = Tensor::from_vec(&[1, 4, 4, 1], (0..16).map(f64::from).collect()).unwrap();
    let p = window_partition(&x, 2).unwrap();
    assert_eq!(p.shape(), &[4, 4, 1]);
    assert_eq!(p.data(), &[0., 1., 4., 5., 2., 3., 6., 7., 8., 9., 12., 13., 10., 11., 14., 15.]);
    assert_eq!(window_partition(&Tensor::zeros(&[1, 56, 56, 3]), 7).unwrap().shape(), &[64, 49, 3]);
    assert!(window_partition(&Tensor::zeros(&[1, 6, 4, 1]), 4).is_err());
    assert!(window_reverse(&Tensor::zeros(&[3, 4, 1]), 4, 4, 2).is_err());
}

proptest! {
    #[test]
    fn window_roundtrip(b in 1usize..3, gh in 1usize..4, gw in 1usize..4, m in 1usize..4, d in 1usize..4, seed in 0u64..1000) {
        let x = random(&mut rng(seed), &[b, gh * m, gw * m, d], 1.0);
        let back = window_reverse(&window_partition(&x, m).unwrap(), gh * m, gw * m, m).unwrap();
        prop_assert_eq!(back.shape(), x.shape());
        prop_assert_eq!(back.data(), x.data());
    }

    #[test]
    fn mask_matches_brute_force(gh in 1usize..5, gw in 1usize..5, m in 1usize..7, s_raw in 0usize..7) {
        let s = s_raw % m;
        let (h, w) = (gh * m, gw * m);
        let mask = build_shift_mask(h, w, m, s).unwrap();
        let oracle = brute_force_mask(h, w, m, s);
        prop_assert_eq!(mask.mask.data(), oracle.as_slice());
        let n = m * m;
        for win in 0..gh * gw {
            let labels = mask.window_labels(win);
            for i in 0..n {
                for j in 0..n {
                    let v = mask.mask.data()[(win * n + i) * n + j];
                    prop_assert_eq!(v == 0.0, labels[i] == labels[j]);
                    prop_assert_eq!(v, mask.mask.data()[(win * n + j) * n + i]);
                }
            }
        }
        for (win, &count) in mask.regions_per_window().iter().enumerate() {
            let expected = if s == 0 { 1 } else {
                (if win / gw == gh - 1 { 2 } else { 1 }) * (if win % gw == gw - 1 { 2 } else { 1 })
            };
            prop_assert_eq!(count, expected);
        }
    }

    #[test]
    fn relative_index_depends_only_on_offset(m in 1usize..8) {
        let idx = relative_position_index(m);
        let n = m * m;
        let rows = (2 * m - 1).pow(2);
        prop_assert!(idx.iter().all(|&v| v < rows));
        for i in 0..n {
            prop_assert_eq!(idx[i * n + i], idx[0]);
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let same = (i / m) as isize - (j / m) as isize == (k / m) as isize - (l / m) as isize
                            && (i % m) as isize - (j % m) as isize == (k % m) as isize - (l % m) as isize;
                        prop_assert_eq!(same, idx[i * n + j] == idx[k * n + l]);
                    }
                }
            }
        }
    }
}

#[test]
fn shift_mask_examples() {
    let zero = build_shift_mask(8, 8, 4, 0).unwrap();
    assert!(zero.mask.data().iter().all(|&v| v == 0.0));
    let m = build_shift_mask(8, 8, 4, 2).unwrap();
    assert_eq!(m.regions_per_window(), vec![1, 2, 2, 4]);
    for w in 0..4 {
        for i in 0..16 {
            assert_eq!(m.mask.data()[(w * 16 + i) * 16 + i], 0.0);
        }
    }
    assert!(build_shift_mask(8, 8, 4, 4).is_err());
    assert!(build_shift_mask(9, 8, 4, 1).is_err());
}

#[test]
fn padded_mask_isolates_padding() {
    let m = build_padded_mask(8, 8, 6, 7, 4, 2).unwrap();
    let pad_tokens = m.region_labels.iter().filter(|&&l| l == PAD_REGION).count();
    assert_eq!(pad_tokens, 64 - 6 * 7);
}

fn attention(dim: usize, heads: usize, window: usize, seed: u64) -> (ParamStore, WindowAttention) {
    let mut ps = ParamStore::new();
    let a = WindowAttention::new(&mut ps, &mut rng(seed), "attn", dim, heads, window).unwrap();
    randomize(&mut ps, &mut rng(seed + 1), 0.5);
    (ps, a)
}

#[test]
fn constant_values_give_projected_constant() {
    let (d, m) = (6, 3);
    let (mut ps, a) = attention(d, 2, m, 1);
    // zero the value slice of the qkv map so V equals its bias everywhere
    let mut w = ps.get(a.qkv.weight).to_vec();
    for i in 0..d {
        for j in 2 * d..3 * d {
            w[i * 3 * d + j] = 0.0;
        }
    }
    ps.set(a.qkv.weight, Tensor::from_vec(&[d, 3 * d], w).unwrap()).unwrap();
    let x = random(&mut rng(9), &[2, m * m, d], 1.0);
    let y = a.forward(&ps, &x, None).unwrap();
    let v = &ps.get(a.qkv.bias.unwrap()).data()[2 * d..];
    let expected = Tensor::from_vec(&[1, d], v.to_vec())
        .unwrap()
        .linear(ps.get(a.proj.weight), Some(ps.get(a.proj.bias.unwrap())))
        .unwrap();
    for row in y.data().chunks(d) {
        assert_close(row, expected.data(), 1e-12);
    }
}

#[test]
fn single_token_window_is_projected_value() {
    let d = 4;
    let (ps, a) = attention(d, 2, 1, 5);
    let x = random(&mut rng(2), &[3, 1, d], 1.0);
    let y = a.forward(&ps, &x, None).unwrap();
    let qkv = a.qkv.forward(&ps, &x).unwrap();
    let v = qkv.narrow(2, 2 * d, d).unwrap();
    let expected = a.proj.forward(&ps, &v).unwrap();
    assert_eq!(y.data(), expected.data());
}

#[test]
fn masked_pairs_get_negligible_weight() {
    // Logit gaps of O(1) plus the −100 fill leave at most e^-90 of the mass.
    let logits = Tensor::from_vec(&[3], vec![1.5, -2.0 + NEG, 0.3 + NEG]).unwrap();
    let p = logits.softmax(0).unwrap();
    assert!(p.data()[1] < 1e-6 && p.data()[2] < 1e-6);
}

#[test]
fn attention_output_is_convex_combination_of_values() {
    let (d, m) = (4, 2);
    let (mut ps, a) = attention(d, 1, m, 7);
    // identity output projection so outputs are raw attention averages
    let mut eye = vec![0.0; d * d];
    for i in 0..d {
        eye[i * d + i] = 1.0;
    }
    ps.set(a.proj.weight, Tensor::from_vec(&[d, d], eye).unwrap()).unwrap();
    ps.set(a.proj.bias.unwrap(), Tensor::zeros(&[d])).unwrap();
    let x = random(&mut rng(1), &[3, m * m, d], 2.0);
    let y = a.forward(&ps, &x, None).unwrap();
    let v = a.qkv.forward(&ps, &x).unwrap().narrow(2, 2 * d, d).unwrap();
    for w in 0..3 {
        for c in 0..d {
            let col: Vec<f64> = (0..m * m).map(|t| v.data()[(w * m * m + t) * d + c]).collect();
            let (lo, hi) = col.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
            for t in 0..m * m {
                let o = y.data()[(w * m * m + t) * d + c];
                assert!(o >= lo - 1e-12 && o <= hi + 1e-12);
            }
        }
    }
}

#[test]
fn window_attention_rejects_bad_shapes() {
    assert!(WindowAttention::new(&mut ParamStore::new(), &mut rng(0), "a", 6, 4, 2).is_err());
    let (ps, a) = attention(4, 2, 2, 0);
    assert!(a.forward(&ps, &Tensor::zeros(&[1, 9, 4]), None).is_err());
    let wrong = Tensor::zeros(&[3, 2, 4, 4]);
    assert!(a.forward(&ps, &Tensor::zeros(&[4, 4, 4]), Some(&wrong)).is_err());
}

fn block(h: usize, w: usize, d: usize, heads: usize, window: usize, shifted: bool, seed: u64) -> (ParamStore, SwinBlock) {
    let mut ps = ParamStore::new();
    let g = StageGeometry::new(h, w, window);
    let b = SwinBlock::new(&mut ps, &mut rng(seed), "b", d, heads, 2, g, shifted, 0.0).unwrap();
    randomize(&mut ps, &mut rng(seed + 100), 0.5);
    (ps, b)
}

#[test]
fn shifted_attention_matches_region_oracle() {
    for (seed, (h, w, m)) in [(8, 8, 4), (12, 8, 4), (6, 9, 3), (10, 10, 4), (7, 12, 3)].into_iter().enumerate() {
        let (ps, b) = block(h, w, 6, 2, m, true, seed as u64);
        let xn = random(&mut rng(seed as u64 + 50), &[1, h, w, 6], 1.0);
        let got = b.attention_branch(&ps, &xn).unwrap();
        assert_close(got.data(), &region_attention(&ps, &b, &xn), 1e-10);
    }
}

#[test]
fn zeroed_branch_outputs_make_blocks_identities() {
    let (mut ps, b) = block(8, 8, 8, 2, 4, true, 3);
    for id in [b.attn.proj.weight, b.attn.proj.bias.unwrap(), b.mlp.fc2.weight, b.mlp.fc2.bias.unwrap()] {
        let shape = ps.get(id).shape().to_vec();
        ps.set(id, Tensor::zeros(&shape)).unwrap();
    }
    let x = random(&mut rng(4), &[2, 8, 8, 8], 1.0);
    assert_eq!(b.forward(&ps, &x, None).unwrap().data(), x.data());
}

#[test]
fn window_aligned_translation_commutes_with_unshifted_block() {
    let (ps, b) = block(8, 8, 8, 2, 4, false, 11);
    let x = random(&mut rng(12), &[1, 8, 8, 8], 1.0);
    let y = b.forward(&ps, &x, None).unwrap();
    let rolled = b.forward(&ps, &x.roll(1, 4).unwrap().roll(2, -4).unwrap(), None).unwrap();
    assert_eq!(rolled.data(), y.roll(1, 4).unwrap().roll(2, -4).unwrap().data());
}

#[test]
fn toy_backbone_stage_shapes() {
    let mut ps = ParamStore::new();
    let cfg = toy_config(64, 16, [1, 2, 4, 8], 4);
    let bb = Backbone::new(&mut ps, &cfg, 0).unwrap();
    let feats = bb.forward(&ps, &Tensor::zeros(&[2, 64, 64, 3]), None).unwrap();
    let shapes: Vec<Vec<usize>> = feats.iter().map(|f| f.shape().to_vec()).collect();
    assert_eq!(shapes, vec![vec![2, 16, 16, 16], vec![2, 8, 8, 32], vec![2, 4, 4, 64], vec![2, 2, 2, 128]]);
    assert!(bb.forward(&ps, &Tensor::zeros(&[1, 32, 32, 3]), None).is_err());
    assert!(ps.find("stages.0.blocks.1.attn.qkv.weight").is_some());
    assert!(ps.find("stages.2.downsample.reduction.weight").is_some());
    assert!(ps.find("stages.0.downsample.norm.weight").is_none());
}

#[test]
fn swin_t_final_grid() {
    let mut ps = ParamStore::new();
    let bb = Backbone::new(&mut ps, &SwinConfig::swin_t(), 0).unwrap();
    let feats = no_grad(|| bb.forward(&ps, &Tensor::zeros(&[1, 224, 224, 3]), None)).unwrap();
    assert_eq!(feats[3].shape(), &[1, 7, 7, 768]);
}

#[test]
fn swin_b_384_final_grid() {
    // depth does not affect shapes; two blocks per stage keep the test quick
    let mut cfg = SwinConfig::swin_b_384();
    cfg.depths = [2, 2, 2, 2];
    let mut ps = ParamStore::new();
    let bb = Backbone::new(&mut ps, &cfg, 0).unwrap();
    let feats = no_grad(|| bb.forward(&ps, &Tensor::zeros(&[1, 384, 384, 3]), None)).unwrap();
    assert_eq!(feats[3].shape(), &[1, 12, 12, 1024]);
}

#[test]
fn zeroed_branches_reduce_backbone_to_embed_and_merges() {
    let mut ps = ParamStore::new();
    let cfg = toy_config(32, 8, [2, 2, 2, 2], 4);
    let bb = Backbone::new(&mut ps, &cfg, 1).unwrap();
    randomize(&mut ps, &mut rng(2), 0.3);
    for stage in &bb.stages {
        for b in &stage.blocks {
            for id in [b.attn.proj.weight, b.attn.proj.bias.unwrap(), b.mlp.fc2.weight, b.mlp.fc2.bias.unwrap()] {
                let shape = ps.get(id).shape().to_vec();
                ps.set(id, Tensor::zeros(&shape)).unwrap();
            }
        }
    }
    let img = random(&mut rng(3), &[2, 32, 32, 3], 1.0);
    let feats = bb.forward(&ps, &img, None).unwrap();
    let mut x = bb.patch_embed.forward(&ps, &img).unwrap();
    assert_eq!(feats[0].data(), x.data());
    for i in 1..4 {
        x = bb.stages[i].downsample.as_ref().unwrap().forward(&ps, &x).unwrap();
        assert_eq!(feats[i].data(), x.data());
    }
}

#[test]
fn drop_path_is_identity_in_eval_and_stochastic_in_training() {
    let mut ps = ParamStore::new();
    let mut cfg = toy_config(32, 8, [2, 2, 2, 2], 4);
    cfg.drop_path_rate = 0.5;
    let bb = Backbone::new(&mut ps, &cfg, 1).unwrap();
    let img = random(&mut rng(3), &[4, 32, 32, 3], 1.0);
    let a = bb.forward(&ps, &img, None).unwrap();
    let b = bb.forward(&ps, &img, None).unwrap();
    assert_eq!(a[3].data(), b[3].data());
    let t1 = bb.forward(&ps, &img, Some(&mut rng(5))).unwrap();
    let t2 = bb.forward(&ps, &img, Some(&mut rng(5))).unwrap();
    assert_eq!(t1[3].data(), t2[3].data());
    assert_ne!(t1[3].data(), a[3].data());
}
