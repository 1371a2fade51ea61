//! Wall-clock scaling of global versus windowed attention.
//!
//! Kernels run directly on `f32` buffers with no autodiff, so timings
//! reflect arithmetic rather than graph bookkeeping.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::complexity::{flops_msa, flops_wmsa};
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchPoint {
    pub h: usize,
    pub w: usize,
    pub tokens: usize,
    /// Seconds for the global attention-matrix term: `QKᵀ`, softmax, `·V`.
    pub global_secs: f64,
    /// Seconds for the full windowed block: projections plus per-window
    /// attention.
    pub window_secs: f64,
    pub flops_msa: u64,
    pub flops_wmsa: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub dim: usize,
    pub window: usize,
    pub points: Vec<BenchPoint>,
    /// Log-log slope of windowed time against token count.
    pub window_slope: f64,
    /// Log-log slope of the global attention-matrix time against token count.
    pub global_slope: f64,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

/// `c[m×n] = a[m×k] · b` where `b` is `[k×n]`, or `[n×k]` when `b_t`.
fn sgemm(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], b_t: bool, c: &mut [f32]) {
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths cover every index implied by the dims and strides.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn softmax_rows(x: &mut [f32], width: usize) {
    for row in x.chunks_mut(width) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
}

/// Attention of `q` over `k`, `v` (all `[t, d]`), processing query rows in
/// blocks so the score matrix never exceeds `block × t`.
pub fn global_attention(q: &[f32], k: &[f32], v: &[f32], t: usize, d: usize, out: &mut [f32]) {
    let block = 256.min(t);
    let scale = 1.0 / (d as f32).sqrt();
    let mut scores = vec![0.0f32; block * t];
    for start in (0..t).step_by(block) {
        let rows = block.min(t - start);
        let s = &mut scores[..rows * t];
        sgemm(rows, d, t, &q[start * d..(start + rows) * d], k, true, s);
        s.iter_mut().for_each(|x| *x *= scale);
        softmax_rows(s, t);
        sgemm(rows, t, d, s, v, false, &mut out[start * d..(start + rows) * d]);
    }
}

/// Full windowed block on an `h × w × d` grid: QKV projection, attention
/// inside each `m × m` window, output projection.
pub fn windowed_attention(x: &[f32], h: usize, w: usize, d: usize, m: usize, wqkv: &[f32], wo: &[f32]) -> Vec<f32> {
    let t = h * w;
    let n = m * m;
    let mut qkv = vec![0.0f32; t * 3 * d];
    sgemm(t, d, 3 * d, x, wqkv, false, &mut qkv);
    let mut attended = vec![0.0f32; t * d];
    let (mut q, mut k, mut v) = (vec![0.0f32; n * d], vec![0.0f32; n * d], vec![0.0f32; n * d]);
    let mut o = vec![0.0f32; n * d];
    for wr in 0..h / m {
        for wc in 0..w / m {
            let tokens = || (0..n).map(|i| (wr * m + i / m) * w + wc * m + i % m);
            for (i, tok) in tokens().enumerate() {
                let row = &qkv[tok * 3 * d..(tok + 1) * 3 * d];
                q[i * d..(i + 1) * d].copy_from_slice(&row[..d]);
                k[i * d..(i + 1) * d].copy_from_slice(&row[d..2 * d]);
                v[i * d..(i + 1) * d].copy_from_slice(&row[2 * d..]);
            }
            global_attention(&q, &k, &v, n, d, &mut o);
            for (i, tok) in tokens().enumerate() {
                attended[tok * d..(tok + 1) * d].copy_from_slice(&o[i * d..(i + 1) * d]);
            }
        }
    }
    let mut out = vec![0.0f32; t * d];
    sgemm(t, d, d, &attended, wo, false, &mut out);
    out
}

/// Best of several timed runs, each repeated until it lasts `min_secs`.
fn time_it(mut f: impl FnMut(), min_secs: f64, trials: usize) -> f64 {
    let mut best = f64::INFINITY;
    for _ in 0..trials {
        let start = Instant::now();
        let mut reps = 0u32;
        loop {
            f();
            reps += 1;
            let el = start.elapsed().as_secs_f64();
            if el >= min_secs {
                best = best.min(el / reps as f64);
                break;
            }
        }
    }
    best
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

/// Times both attention forms over `sizes` and fits log-log slopes.
/// Needs at least four grid sizes, each divisible by `window`.
pub fn bench_attention(sizes: &[(usize, usize)], dim: usize, window: usize, seed: u64) -> Result<BenchReport> {
    if sizes.len() < 4 {
        return Err(CoreError::Usage(format!("a slope fit needs at least 4 sizes, got {}", sizes.len())));
    }
    if dim == 0 || window == 0 {
        return Err(CoreError::Usage("dim and window must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wqkv = random_vec(&mut rng, dim * 3 * dim);
    let wo = random_vec(&mut rng, dim * dim);
    let mut points = Vec::with_capacity(sizes.len());
    for &(h, w) in sizes {
        if h % window != 0 || w % window != 0 {
            return Err(CoreError::Usage(format!("window {window} does not divide {h}x{w}")));
        }
        let t = h * w;
        let x = random_vec(&mut rng, t * dim);
        let (q, k, v) = (random_vec(&mut rng, t * dim), random_vec(&mut rng, t * dim), random_vec(&mut rng, t * dim));
        let mut out = vec![0.0f32; t * dim];
        let global_secs = time_it(|| global_attention(&q, &k, &v, t, dim, &mut out), 0.05, 3);
        let window_secs = time_it(
            || {
                std::hint::black_box(windowed_attention(&x, h, w, dim, window, &wqkv, &wo));
            },
            0.05,
            3,
        );
        points.push(BenchPoint {
            h,
            w,
            tokens: t,
            global_secs,
            window_secs,
            flops_msa: flops_msa(h as u64, w as u64, dim as u64)?,
            flops_wmsa: flops_wmsa(h as u64, w as u64, dim as u64, window as u64)?,
        });
    }
    let tokens: Vec<f64> = points.iter().map(|p| p.tokens as f64).collect();
    let window_slope = loglog_slope(&tokens, &points.iter().map(|p| p.window_secs).collect::<Vec<_>>());
    let global_slope = loglog_slope(&tokens, &points.iter().map(|p| p.global_secs).collect::<Vec<_>>());
    Ok(BenchReport { dim, window, points, window_slope, global_slope })
}
