use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Strided view of a row-major matrix, optionally transposed.
#[derive(Clone, Copy)]
struct Mat<'a> {
    data: &'a [f64],
    rs: isize,
    cs: isize,
}

impl<'a> Mat<'a> {
    fn plain(data: &'a [f64], cols: usize) -> Self {
        Mat { data, rs: cols as isize, cs: 1 }
    }

    fn transposed(data: &'a [f64], cols: usize) -> Self {
        Mat { data, rs: 1, cs: cols as isize }
    }
}

/// c = a·b + beta·c with `a` m×k and `b` k×n, c row-major m×n.
fn gemm(m: usize, k: usize, n: usize, a: Mat, b: Mat, beta: f64, c: &mut [f64]) {
    debug_assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the strides describe matrices that lie inside the given slices,
    // and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs,
            a.cs,
            b.data.as_ptr(),
            b.rs,
            b.cs,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Tensor {
    /// Matrix product over the last two axes.
    ///
    /// Both operands must have the same rank (≥ 2) and identical leading
    /// (batch) dimensions; `[.., m, k] × [.., k, n] → [.., m, n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() < 2 || sa.len() != sb.len() || sa[..sa.len() - 2] != sb[..sb.len() - 2] {
            return Err(TensorError::shape("matmul", sa, sb));
        }
        let r = sa.len();
        let (m, k, n) = (sa[r - 2], sa[r - 1], sb[r - 1]);
        if sb[r - 2] != k {
            return Err(TensorError::shape("matmul", sa, sb));
        }
        let batch: usize = sa[..r - 2].iter().product();
        let mut out = vec![0.0; batch * m * n];
        for bi in 0..batch {
            gemm(
                m,
                k,
                n,
                Mat::plain(&self.data()[bi * m * k..], k),
                Mat::plain(&other.data()[bi * k * n..], n),
                0.0,
                &mut out[bi * m * n..(bi + 1) * m * n],
            );
        }
        let mut shape = sa[..r - 2].to_vec();
        shape.extend([m, n]);
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op("matmul", shape, out, &[self, other], move |g| {
            let mut ga = a.requires_grad().then(|| vec![0.0; batch * m * k]);
            let mut gb = b.requires_grad().then(|| vec![0.0; batch * k * n]);
            for bi in 0..batch {
                let gout = &g[bi * m * n..];
                if let Some(ga) = ga.as_mut() {
                    // dA = dC · Bᵀ
                    gemm(
                        m,
                        n,
                        k,
                        Mat::plain(gout, n),
                        Mat::transposed(&b.data()[bi * k * n..], n),
                        0.0,
                        &mut ga[bi * m * k..(bi + 1) * m * k],
                    );
                }
                if let Some(gb) = gb.as_mut() {
                    // dB = Aᵀ · dC
                    gemm(
                        k,
                        m,
                        n,
                        Mat::transposed(&a.data()[bi * m * k..], k),
                        Mat::plain(gout, n),
                        0.0,
                        &mut gb[bi * k * n..(bi + 1) * k * n],
                    );
                }
            }
            vec![ga, gb]
        }))
    }

    /// Affine map over the last axis: `x[.., in] · weight[in, out] + bias[out]`.
    pub fn linear(&self, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
        let sx = self.shape();
        let sw = weight.shape();
        if sx.is_empty() || sw.len() != 2 || sx[sx.len() - 1] != sw[0] {
            return Err(TensorError::shape("linear", sx, sw));
        }
        let (fin, fout) = (sw[0], sw[1]);
        if let Some(b) = bias {
            if b.shape() != [fout] {
                return Err(TensorError::shape("linear", sw, b.shape()));
            }
        }
        let rows = self.numel() / fin;
        let mut out = match bias {
            Some(b) => b.data().repeat(rows),
            None => vec![0.0; rows * fout],
        };
        gemm(
            rows,
            fin,
            fout,
            Mat::plain(self.data(), fin),
            Mat::plain(weight.data(), fout),
            if bias.is_some() { 1.0 } else { 0.0 },
            &mut out,
        );
        let mut shape = sx.to_vec();
        *shape.last_mut().unwrap() = fout;
        let (x, w) = (self.clone(), weight.clone());
        let has_bias = bias.is_some();
        let mut parents = vec![self, weight];
        if let Some(b) = bias {
            parents.push(b);
        }
        Ok(Tensor::from_op("linear", shape, out, &parents, move |g| {
            let gx = x.requires_grad().then(|| {
                let mut gx = vec![0.0; rows * fin];
                gemm(
                    rows,
                    fout,
                    fin,
                    Mat::plain(g, fout),
                    Mat::transposed(w.data(), fout),
                    0.0,
                    &mut gx,
                );
                gx
            });
            let gw = w.requires_grad().then(|| {
                let mut gw = vec![0.0; fin * fout];
                gemm(
                    fin,
                    rows,
                    fout,
                    Mat::transposed(x.data(), fin),
                    Mat::plain(g, fout),
                    0.0,
                    &mut gw,
                );
                gw
            });
            let mut grads = vec![gx, gw];
            if has_bias {
                let mut gb = vec![0.0; fout];
                for row in g.chunks_exact(fout) {
                    gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
                grads.push(Some(gb));
            }
            grads
        }))
    }
}
