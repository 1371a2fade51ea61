//! Independent reference computations shared by the test suites.

use swinct_core::params::ParamStore;
use swinct_core::swin::{SwinBlock, NEG};
use swinct_tensor::Tensor;

/// Mask built from first principles: a token of the shifted grid came from
/// across the wrap-around seam exactly when `index + s` reaches the edge,
/// and two tokens of one window may attend iff they agree on both seams.
pub fn brute_force_mask(h: usize, w: usize, m: usize, s: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for wr in 0..h / m {
        for wc in 0..w / m {
            let tokens: Vec<(usize, usize)> =
                (0..m * m).map(|i| (wr * m + i / m, wc * m + i % m)).collect();
            for &(ri, ci) in &tokens {
                for &(rj, cj) in &tokens {
                    let same = (ri + s >= h) == (rj + s >= h) && (ci + s >= w) == (cj + s >= w);
                    out.push(if same { 0.0 } else { NEG });
                }
            }
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `x · W + b` for a `[in, out]` weight.
fn affine(x: &[f64], w: &[f64], b: &[f64], out_dim: usize) -> Vec<f64> {
    let mut y = b.to_vec();
    for (i, &xi) in x.iter().enumerate() {
        for j in 0..out_dim {
            y[j] += xi * w[i * out_dim + j];
        }
    }
    y
}

/// Attention branch of `block` on a normalized `[1, h, w, D]` grid, computed
/// without rolls or masks: for every shifted window, the tokens are grouped
/// by the contiguous region of the original grid they came from, and plain
/// softmax attention runs inside each group. Padding tokens are dropped.
pub fn region_attention(ps: &ParamStore, block: &SwinBlock, xn: &Tensor) -> Vec<f64> {
    let g = block.geometry;
    let (h, w, d) = (g.h, g.w, xn.shape()[3]);
    let (hp, wp, m, s) = (g.padded_h, g.padded_w, g.window, block.shift);
    let heads = block.attn.heads;
    let hd = d / heads;
    let x = xn.data();
    let qkv_w = ps.get(block.attn.qkv.weight).data();
    let qkv_b = ps.get(block.attn.qkv.bias.unwrap()).data();
    let proj_w = ps.get(block.attn.proj.weight).data();
    let proj_b = ps.get(block.attn.proj.bias.unwrap()).data();
    let table = ps.get(block.attn.bias.table).data();
    let span = 2 * m - 1;

    let mut out = vec![0.0; h * w * d];
    for wr in 0..hp / m {
        for wc in 0..wp / m {
            // (window-local row, col, original row, col)
            let mut members: Vec<(usize, usize, usize, usize)> = Vec::new();
            for i in 0..m {
                for j in 0..m {
                    let (r, c) = (wr * m + i, wc * m + j);
                    let (or, oc) = ((r + s) % hp, (c + s) % wp);
                    if or < h && oc < w {
                        members.push((i, j, or, oc));
                    }
                }
            }
            let key = |&(i, j, _, _): &(usize, usize, usize, usize)| {
                ((wr * m + i) + s >= hp, (wc * m + j) + s >= wp)
            };
            let qkv: Vec<Vec<f64>> = members
                .iter()
                .map(|&(_, _, or, oc)| {
                    let t = or * w + oc;
                    affine(&x[t * d..(t + 1) * d], qkv_w, qkv_b, 3 * d)
                })
                .collect();
            for (a, ma) in members.iter().enumerate() {
                let group: Vec<usize> = (0..members.len()).filter(|&b| key(&members[b]) == key(ma)).collect();
                let mut concat = vec![0.0; d];
                for head in 0..heads {
                    let q = &qkv[a][head * hd..(head + 1) * hd];
                    let logits: Vec<f64> = group
                        .iter()
                        .map(|&b| {
                            let k = &qkv[b][d + head * hd..d + (head + 1) * hd];
                            let mb = &members[b];
                            let idx = (ma.0 + m - 1 - mb.0) * span + (ma.1 + m - 1 - mb.1);
                            dot(q, k) / (hd as f64).sqrt() + table[idx * heads + head]
                        })
                        .collect();
                    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                    let z: f64 = exps.iter().sum();
                    for (e, &b) in exps.iter().zip(&group) {
                        let v = &qkv[b][2 * d + head * hd..2 * d + (head + 1) * hd];
                        for t in 0..hd {
                            concat[head * hd + t] += e / z * v[t];
                        }
                    }
                }
                let y = affine(&concat, proj_w, proj_b, d);
                let t = ma.2 * w + ma.3;
                out[t * d..(t + 1) * d].copy_from_slice(&y);
            }
        }
    }
    out
}
