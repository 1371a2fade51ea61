use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swinct_core::bench::*;

fn vec32(seed: u64, n: usize) -> Vec<f32> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| r.random_range(-1.0f32..1.0)).collect()
}

fn naive_attention(q: &[f32], k: &[f32], v: &[f32], t: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; t * d];
    for i in 0..t {
        let s: Vec<f64> = (0..t)
            .map(|j| (0..d).map(|c| q[i * d + c] as f64 * k[j * d + c] as f64).sum::<f64>() / (d as f64).sqrt())
            .collect();
        let max = s.iter().cloned().fold(f64::MIN, f64::max);
        let e: Vec<f64> = s.iter().map(|x| (x - max).exp()).collect();
        let z: f64 = e.iter().sum();
        for c in 0..d {
            out[i * d + c] = (0..t).map(|j| e[j] / z * v[j * d + c] as f64).sum();
        }
    }
    out
}

#[test]
fn slope_of_exact_power_laws() {
    let xs = [196.0, 784.0, 3136.0, 12544.0];
    let lin: Vec<f64> = xs.iter().map(|x| 3.0 * x).collect();
    let quad: Vec<f64> = xs.iter().map(|x| 0.5 * x * x).collect();
    assert!((loglog_slope(&xs, &lin) - 1.0).abs() < 1e-12);
    assert!((loglog_slope(&xs, &quad) - 2.0).abs() < 1e-12);
}

#[test]
fn blocked_global_attention_matches_naive() {
    // 300 tokens spans two row blocks
    let (t, d) = (300, 8);
    let (q, k, v) = (vec32(1, t * d), vec32(2, t * d), vec32(3, t * d));
    let mut out = vec![0.0f32; t * d];
    global_attention(&q, &k, &v, t, d, &mut out);
    let expected = naive_attention(&q, &k, &v, t, d);
    for (a, b) in out.iter().zip(&expected) {
        assert!((*a as f64 - b).abs() < 1e-4);
    }
}

#[test]
fn single_window_equals_global_attention() {
    let (h, d) = (6, 4);
    let t = h * h;
    let x = vec32(4, t * d);
    let wqkv = vec32(5, d * 3 * d);
    let mut eye = vec![0.0f32; d * d];
    for i in 0..d {
        eye[i * d + i] = 1.0;
    }
    let got = windowed_attention(&x, h, h, d, h, &wqkv, &eye);
    let split = |off: usize| -> Vec<f32> {
        (0..t)
            .flat_map(|tok| (0..d).map(move |c| (tok, c)))
            .map(|(tok, c)| (0..d).map(|i| x[tok * d + i] * wqkv[i * 3 * d + off + c]).sum())
            .collect()
    };
    let expected = naive_attention(&split(0), &split(d), &split(2 * d), t, d);
    for (a, b) in got.iter().zip(&expected) {
        assert!((*a as f64 - b).abs() < 1e-4);
    }
}

#[test]
fn bench_reports_every_size_and_validates_input() {
    let sizes = [(4, 4), (8, 8), (8, 16), (16, 16)];
    let r = bench_attention(&sizes, 8, 4, 0).unwrap();
    assert_eq!(r.points.len(), 4);
    assert_eq!(r.points[3].tokens, 256);
    assert!(r.points.iter().all(|p| p.flops_wmsa <= p.flops_msa && p.global_secs > 0.0));
    assert!(r.window_slope.is_finite() && r.global_slope.is_finite());
    assert!(bench_attention(&sizes[..3], 8, 4, 0).is_err());
    assert!(bench_attention(&[(4, 4), (8, 8), (12, 12), (10, 10)], 8, 4, 0).is_err());
}
