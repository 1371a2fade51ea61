use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

impl Tensor {
    /// Layer normalization over the last axis with affine `gamma`, `beta`.
    pub fn layer_norm(&self, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
        let c = *self.shape().last().ok_or_else(|| TensorError::invalid("layer_norm", "scalar input"))?;
        if gamma.shape() != [c] || beta.shape() != [c] {
            return Err(TensorError::shape("layer_norm", self.shape(), gamma.shape()));
        }
        let rows = self.numel() / c.max(1);
        let mut xhat = vec![0.0; self.numel()];
        let mut rstd = vec![0.0; rows];
        for r in 0..rows {
            let x = &self.data()[r * c..][..c];
            let mean = x.iter().sum::<f64>() / c as f64;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let s = 1.0 / (var + eps).sqrt();
            rstd[r] = s;
            for (h, v) in xhat[r * c..][..c].iter_mut().zip(x) {
                *h = (v - mean) * s;
            }
        }
        let (g, b) = (gamma.data(), beta.data());
        let out = xhat
            .chunks_exact(c)
            .flat_map(|row| row.iter().zip(g).zip(b).map(|((x, g), b)| x * g + b))
            .collect();
        let gamma_t = gamma.clone();
        Ok(Tensor::from_op("layer_norm", self.shape().to_vec(), out, &[self, gamma, beta], move |dy| {
            let g = gamma_t.data();
            let mut dx = vec![0.0; dy.len()];
            let mut dgamma = vec![0.0; c];
            let mut dbeta = vec![0.0; c];
            for r in 0..rows {
                let dyr = &dy[r * c..][..c];
                let xh = &xhat[r * c..][..c];
                let mut sum_d = 0.0;
                let mut sum_dx = 0.0;
                for j in 0..c {
                    dbeta[j] += dyr[j];
                    dgamma[j] += dyr[j] * xh[j];
                    let d = dyr[j] * g[j];
                    sum_d += d;
                    sum_dx += d * xh[j];
                }
                let k = rstd[r] / c as f64;
                for j in 0..c {
                    let d = dyr[j] * g[j];
                    dx[r * c + j] = k * (c as f64 * d - sum_d - xh[j] * sum_dx);
                }
            }
            vec![Some(dx), Some(dgamma), Some(dbeta)]
        }))
    }

    /// Mean softmax cross-entropy of `[N, M]` logits against class labels,
    /// skipping samples labelled `ignore`. Gradient is `(p − y) / n_valid`.
    pub fn softmax_cross_entropy(&self, labels: &[usize], ignore: Option<usize>) -> Result<Tensor> {
        const OP: &str = "softmax_cross_entropy";
        if self.rank() != 2 || self.shape()[0] != labels.len() {
            return Err(TensorError::shape(OP, self.shape(), &[labels.len()]));
        }
        let m = self.shape()[1];
        if self.data().iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: OP });
        }
        let mut probs = vec![0.0; self.numel()];
        let mut total = 0.0;
        let mut valid = 0usize;
        for (i, &label) in labels.iter().enumerate() {
            if Some(label) == ignore {
                continue;
            }
            if label >= m {
                return Err(TensorError::invalid(OP, format!("label {label} out of range for {m} classes")));
            }
            let row = &self.data()[i * m..][..m];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let log_z = z.ln() + max;
            for (p, v) in probs[i * m..][..m].iter_mut().zip(row) {
                *p = (v - log_z).exp();
            }
            total += log_z - row[label];
            valid += 1;
        }
        if valid == 0 {
            return Err(TensorError::invalid(OP, "no labelled samples"));
        }
        let n = valid as f64;
        let labels = labels.to_vec();
        Ok(Tensor::from_op(OP, Vec::new(), vec![total / n], &[self], move |g| {
            let scale = g[0] / n;
            let mut gx = probs.clone();
            for (i, &label) in labels.iter().enumerate() {
                let row = &mut gx[i * m..][..m];
                if Some(label) == ignore {
                    row.iter_mut().for_each(|v| *v = 0.0);
                    continue;
                }
                row[label] -= 1.0;
                row.iter_mut().for_each(|v| *v *= scale);
            }
            vec![Some(gx)]
        }))
    }

    /// Rows of a `[R, ..]` table picked by `index`; gradient scatters back with `+=`.
    pub fn index_select(&self, index: &[usize]) -> Result<Tensor> {
        if self.rank() == 0 {
            return Err(TensorError::invalid("index_select", "scalar input"));
        }
        let rows = self.shape()[0];
        let width = self.numel() / rows.max(1);
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(TensorError::invalid("index_select", format!("index {bad} out of range for {rows} rows")));
        }
        let mut out = Vec::with_capacity(index.len() * width);
        for &i in index {
            out.extend_from_slice(&self.data()[i * width..][..width]);
        }
        let mut shape = self.shape().to_vec();
        shape[0] = index.len();
        let index = index.to_vec();
        Ok(Tensor::from_op("index_select", shape, out, &[self], move |g| {
            let mut gx = vec![0.0; rows * width];
            for (k, &i) in index.iter().enumerate() {
                gx[i * width..][..width].iter_mut().zip(&g[k * width..][..width]).for_each(|(a, b)| *a += b);
            }
            vec![Some(gx)]
        }))
    }

    /// 3×3 neighbourhoods with zero padding: `[B, H, W, C] → [B, H, W, 9·C]`,
    /// ordered by (row offset, column offset, channel).
    pub fn im2col3x3(&self) -> Result<Tensor> {
        let [b, h, w, c] = dims4(self, "im2col3x3")?;
        let mut out = vec![0.0; b * h * w * 9 * c];
        let x = self.data();
        for_each_tap(b, h, w, c, |dst, src| out[dst..dst + c].copy_from_slice(&x[src..src + c]));
        Ok(Tensor::from_op("im2col3x3", vec![b, h, w, 9 * c], out, &[self], move |g| {
            let mut gx = vec![0.0; b * h * w * c];
            for_each_tap(b, h, w, c, |dst, src| {
                gx[src..src + c].iter_mut().zip(&g[dst..dst + c]).for_each(|(a, v)| *a += v)
            });
            vec![Some(gx)]
        }))
    }

    /// Nearest-neighbour upsampling of `[B, h, w, C]` by an integer factor.
    pub fn upsample_nearest(&self, factor: usize) -> Result<Tensor> {
        let [b, h, w, c] = dims4(self, "upsample_nearest")?;
        if factor == 0 {
            return Err(TensorError::invalid("upsample_nearest", "factor 0"));
        }
        let (oh, ow) = (h * factor, w * factor);
        let src_of = move |bi: usize, y: usize, x: usize| ((bi * h + y / factor) * w + x / factor) * c;
        let mut out = Vec::with_capacity(b * oh * ow * c);
        for bi in 0..b {
            for y in 0..oh {
                for x in 0..ow {
                    let s = src_of(bi, y, x);
                    out.extend_from_slice(&self.data()[s..s + c]);
                }
            }
        }
        Ok(Tensor::from_op("upsample_nearest", vec![b, oh, ow, c], out, &[self], move |g| {
            let mut gx = vec![0.0; b * h * w * c];
            for bi in 0..b {
                for y in 0..oh {
                    for x in 0..ow {
                        let s = src_of(bi, y, x);
                        let d = ((bi * oh + y) * ow + x) * c;
                        gx[s..s + c].iter_mut().zip(&g[d..d + c]).for_each(|(a, v)| *a += v);
                    }
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Bilinear resize of `[B, h, w, C]` to `[B, oh, ow, C]` using half-pixel
    /// centres (no corner alignment), clamping at the borders.
    pub fn resize_bilinear(&self, oh: usize, ow: usize) -> Result<Tensor> {
        let [b, h, w, c] = dims4(self, "resize_bilinear")?;
        if oh == 0 || ow == 0 {
            return Err(TensorError::invalid("resize_bilinear", "empty output size"));
        }
        let ys = bilinear_taps(h, oh);
        let xs = bilinear_taps(w, ow);
        let mut out = vec![0.0; b * oh * ow * c];
        let x = self.data();
        for bi in 0..b {
            for (oy, &(y0, y1, ly)) in ys.iter().enumerate() {
                for (ox, &(x0, x1, lx)) in xs.iter().enumerate() {
                    let d = ((bi * oh + oy) * ow + ox) * c;
                    let taps = [
                        (y0, x0, (1.0 - ly) * (1.0 - lx)),
                        (y0, x1, (1.0 - ly) * lx),
                        (y1, x0, ly * (1.0 - lx)),
                        (y1, x1, ly * lx),
                    ];
                    for (yy, xx, wgt) in taps {
                        let s = ((bi * h + yy) * w + xx) * c;
                        for k in 0..c {
                            out[d + k] += wgt * x[s + k];
                        }
                    }
                }
            }
        }
        Ok(Tensor::from_op("resize_bilinear", vec![b, oh, ow, c], out, &[self], move |g| {
            let mut gx = vec![0.0; b * h * w * c];
            for bi in 0..b {
                for (oy, &(y0, y1, ly)) in ys.iter().enumerate() {
                    for (ox, &(x0, x1, lx)) in xs.iter().enumerate() {
                        let d = ((bi * oh + oy) * ow + ox) * c;
                        let taps = [
                            (y0, x0, (1.0 - ly) * (1.0 - lx)),
                            (y0, x1, (1.0 - ly) * lx),
                            (y1, x0, ly * (1.0 - lx)),
                            (y1, x1, ly * lx),
                        ];
                        for (yy, xx, wgt) in taps {
                            let s = ((bi * h + yy) * w + xx) * c;
                            for k in 0..c {
                                gx[s + k] += wgt * g[d + k];
                            }
                        }
                    }
                }
            }
            vec![Some(gx)]
        }))
    }
}

fn dims4(t: &Tensor, op: &'static str) -> Result<[usize; 4]> {
    match *t.shape() {
        [b, h, w, c] => Ok([b, h, w, c]),
        _ => Err(TensorError::invalid(op, format!("expected [B, H, W, C], got {:?}", t.shape()))),
    }
}

/// Calls `f(dst_offset, src_offset)` for every in-bounds 3×3 tap.
fn for_each_tap(b: usize, h: usize, w: usize, c: usize, mut f: impl FnMut(usize, usize)) {
    for bi in 0..b {
        for y in 0..h {
            for x in 0..w {
                let base = ((bi * h + y) * w + x) * 9 * c;
                for dy in 0..3 {
                    let Some(sy) = (y + dy).checked_sub(1).filter(|&v| v < h) else { continue };
                    for dx in 0..3 {
                        let Some(sx) = (x + dx).checked_sub(1).filter(|&v| v < w) else { continue };
                        f(base + (dy * 3 + dx) * c, ((bi * h + sy) * w + sx) * c);
                    }
                }
            }
        }
    }
}

/// For each output coordinate: the two source indices and the weight of the second.
fn bilinear_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let pos = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (pos.floor() as usize).min(src - 1);
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}
