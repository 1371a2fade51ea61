use super::split_axis;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

impl Tensor {
    /// Sum of all elements as a scalar tensor.
    pub fn sum(&self) -> Tensor {
        let total = self.data().iter().sum();
        let n = self.numel();
        Tensor::from_op("sum", Vec::new(), vec![total], &[self], move |g| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel().max(1) as f64;
        self.sum().mul_scalar(1.0 / n)
    }

    /// Mean along `axis`, which is removed from the shape.
    pub fn mean_axis(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(TensorError::invalid("mean_axis", format!("axis {axis} out of range for {:?}", self.shape())));
        }
        let (outer, len, inner) = split_axis(self.shape(), axis);
        let scale = 1.0 / len.max(1) as f64;
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let src = &self.data()[(o * len + l) * inner..][..inner];
                out[o * inner..][..inner].iter_mut().zip(src).for_each(|(a, b)| *a += b);
            }
        }
        out.iter_mut().for_each(|v| *v *= scale);
        let mut shape = self.shape().to_vec();
        shape.remove(axis);
        Ok(Tensor::from_op("mean_axis", shape, out, &[self], move |g| {
            let mut gx = vec![0.0; outer * len * inner];
            for o in 0..outer {
                for l in 0..len {
                    gx[(o * len + l) * inner..][..inner]
                        .iter_mut()
                        .zip(&g[o * inner..][..inner])
                        .for_each(|(a, b)| *a = b * scale);
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Numerically stable softmax along `axis` (max-subtracted).
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.rank() || self.shape()[axis] == 0 {
            return Err(TensorError::invalid("softmax", format!("bad axis {axis} for {:?}", self.shape())));
        }
        if self.data().iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: "softmax" });
        }
        let (outer, len, inner) = split_axis(self.shape(), axis);
        let mut out = vec![0.0; self.numel()];
        let x = self.data();
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let at = |l: usize| base + l * inner;
                let max = (0..len).map(|l| x[at(l)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for l in 0..len {
                    let e = (x[at(l)] - max).exp();
                    out[at(l)] = e;
                    z += e;
                }
                for l in 0..len {
                    out[at(l)] /= z;
                }
            }
        }
        let y = out.clone();
        Ok(Tensor::from_op("softmax", self.shape().to_vec(), out, &[self], move |g| {
            let mut gx = vec![0.0; y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * len * inner + i;
                    let dot: f64 = (0..len).map(|l| g[base + l * inner] * y[base + l * inner]).sum();
                    for l in 0..len {
                        let idx = base + l * inner;
                        gx[idx] = y[idx] * (g[idx] - dot);
                    }
                }
            }
            vec![Some(gx)]
        }))
    }
}
