use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Cubic coefficient of the tanh approximation of GELU:
/// `gelu(x) = 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`.
pub const GELU_COEFF: f64 = 0.044715;
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

impl Tensor {
    fn zip_same(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(TensorError::shape(op, self.shape(), other.shape()));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_same(other, "add")?;
        let out = self.data().iter().zip(other.data()).map(|(a, b)| a + b).collect();
        Ok(Tensor::from_op("add", self.shape().to_vec(), out, &[self, other], |g| {
            vec![Some(g.to_vec()), Some(g.to_vec())]
        }))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_same(other, "sub")?;
        let out = self.data().iter().zip(other.data()).map(|(a, b)| a - b).collect();
        Ok(Tensor::from_op("sub", self.shape().to_vec(), out, &[self, other], |g| {
            vec![Some(g.to_vec()), Some(g.iter().map(|v| -v).collect())]
        }))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_same(other, "mul")?;
        let out = self.data().iter().zip(other.data()).map(|(a, b)| a * b).collect();
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op("mul", self.shape().to_vec(), out, &[self, other], move |g| {
            let ga = g.iter().zip(b.data()).map(|(g, b)| g * b).collect();
            let gb = g.iter().zip(a.data()).map(|(g, a)| g * a).collect();
            vec![Some(ga), Some(gb)]
        }))
    }

    /// Adds `other`, whose shape must equal the trailing dimensions of `self`,
    /// to every leading block. This is the only broadcasting supported.
    pub fn add_trailing(&self, other: &Tensor) -> Result<Tensor> {
        let (s, t) = (self.shape(), other.shape());
        if t.len() > s.len() || s[s.len() - t.len()..] != *t {
            return Err(TensorError::shape("add_trailing", s, t));
        }
        let block = other.numel();
        let mut out = self.to_vec();
        if block > 0 {
            for chunk in out.chunks_exact_mut(block) {
                chunk.iter_mut().zip(other.data()).for_each(|(a, b)| *a += b);
            }
        }
        Ok(Tensor::from_op("add_trailing", s.to_vec(), out, &[self, other], move |g| {
            let mut gb = vec![0.0; block];
            if block > 0 {
                for chunk in g.chunks_exact(block) {
                    gb.iter_mut().zip(chunk).for_each(|(a, b)| *a += b);
                }
            }
            vec![Some(g.to_vec()), Some(gb)]
        }))
    }

    pub fn mul_scalar(&self, c: f64) -> Tensor {
        let out = self.data().iter().map(|v| v * c).collect();
        Tensor::from_op("mul_scalar", self.shape().to_vec(), out, &[self], move |g| {
            vec![Some(g.iter().map(|v| v * c).collect())]
        })
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        let out = self.data().iter().map(|v| v + c).collect();
        Tensor::from_op("add_scalar", self.shape().to_vec(), out, &[self], |g| {
            vec![Some(g.to_vec())]
        })
    }

    pub fn neg(&self) -> Tensor {
        self.mul_scalar(-1.0)
    }

    pub fn exp(&self) -> Tensor {
        let out: Vec<f64> = self.data().iter().map(|v| v.exp()).collect();
        let y = out.clone();
        Tensor::from_op("exp", self.shape().to_vec(), out, &[self], move |g| {
            vec![Some(g.iter().zip(&y).map(|(g, y)| g * y).collect())]
        })
    }

    pub fn ln(&self) -> Tensor {
        let out = self.data().iter().map(|v| v.ln()).collect();
        let x = self.clone();
        Tensor::from_op("ln", self.shape().to_vec(), out, &[self], move |g| {
            vec![Some(g.iter().zip(x.data()).map(|(g, x)| g / x).collect())]
        })
    }

    pub fn tanh(&self) -> Tensor {
        let out: Vec<f64> = self.data().iter().map(|v| v.tanh()).collect();
        let y = out.clone();
        Tensor::from_op("tanh", self.shape().to_vec(), out, &[self], move |g| {
            vec![Some(g.iter().zip(&y).map(|(g, y)| g * (1.0 - y * y)).collect())]
        })
    }

    /// GELU, tanh approximation (see [`GELU_COEFF`]).
    pub fn gelu(&self) -> Tensor {
        let out = self.data().iter().map(|&x| gelu(x)).collect();
        let x = self.clone();
        Tensor::from_op("gelu", self.shape().to_vec(), out, &[self], move |g| {
            vec![Some(g.iter().zip(x.data()).map(|(g, &x)| g * gelu_grad(x)).collect())]
        })
    }

    /// Multiplies every element of sample `i` (first axis) by `factors[i]`.
    /// Used for per-sample residual dropping.
    pub fn scale_samples(&self, factors: &[f64]) -> Result<Tensor> {
        if self.rank() == 0 || self.shape()[0] != factors.len() {
            return Err(TensorError::shape("scale_samples", self.shape(), &[factors.len()]));
        }
        let per = self.numel() / factors.len().max(1);
        let scale = move |v: &[f64], factors: &[f64]| -> Vec<f64> {
            v.chunks(per.max(1))
                .zip(factors)
                .flat_map(|(c, f)| c.iter().map(move |v| v * f))
                .collect()
        };
        let out = scale(self.data(), factors);
        let factors = factors.to_vec();
        Ok(Tensor::from_op("scale_samples", self.shape().to_vec(), out, &[self], move |g| {
            vec![Some(scale(g, &factors))]
        }))
    }
}

fn gelu(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_COEFF * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_COEFF * x * x * x);
    let t = u.tanh();
    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEFF * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}
