use rand_chacha::ChaCha8Rng;
use swinct_tensor::Tensor;

use super::window::{relative_position_index, AttentionMask};
use crate::error::{CoreError, Result};
use crate::params::{Linear, ParamId, ParamStore};

/// Learned per-head bias indexed by the relative offset of a token pair.
#[derive(Debug, Clone)]
pub struct RelativePositionBias {
    /// `[(2M−1)², heads]`.
    pub table: ParamId,
    /// Table row of every token pair, flattened `[M², M²]`.
    pub index: Vec<usize>,
    pub window: usize,
    pub heads: usize,
}

impl RelativePositionBias {
    pub fn new(ps: &mut ParamStore, prefix: &str, window: usize, heads: usize) -> Self {
        let rows = (2 * window - 1).pow(2);
        let table = ps.add(
            format!("{prefix}.relative_position_bias_table"),
            Tensor::zeros(&[rows, heads]),
            false,
        );
        Self { table, index: relative_position_index(window), window, heads }
    }

    /// Bias as `[heads, M², M²]`.
    pub fn bias(&self, ps: &ParamStore) -> Result<Tensor> {
        let n = self.window * self.window;
        let gathered = ps.get(self.table).index_select(&self.index)?;
        Ok(gathered.reshape(&[n, n, self.heads])?.permute(&[2, 0, 1])?)
    }
}

/// Multi-head self-attention inside each window, with relative position bias
/// and an optional additive mask.
#[derive(Debug, Clone)]
pub struct WindowAttention {
    pub qkv: Linear,
    pub proj: Linear,
    pub bias: RelativePositionBias,
    pub dim: usize,
    pub heads: usize,
}

impl WindowAttention {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        dim: usize,
        heads: usize,
        window: usize,
    ) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(CoreError::config(format!("dimension {dim} is not divisible by {heads} heads")));
        }
        Ok(Self {
            qkv: Linear::new(ps, rng, &format!("{prefix}.qkv"), dim, 3 * dim, true),
            bias: RelativePositionBias::new(ps, prefix, window, heads),
            proj: Linear::new(ps, rng, &format!("{prefix}.proj"), dim, dim, true),
            dim,
            heads,
        })
    }

    /// `x` is `[B·nW, M², D]`; `mask`, when given, is the per-head expansion
    /// `[nW, heads, M², M²]` produced by [`expand_mask`].
    pub fn forward(&self, ps: &ParamStore, x: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
        let (bw, n, d) = match *x.shape() {
            [a, b, c] => (a, b, c),
            ref s => return Err(CoreError::config(format!("window attention expects [B·nW, N, D], got {s:?}"))),
        };
        let window = self.bias.window;
        if d != self.dim || n != window * window {
            return Err(CoreError::config(format!(
                "window attention built for {} tokens of dim {}, got {n} of dim {d}",
                window * window,
                self.dim
            )));
        }
        let (h, hd) = (self.heads, d / self.heads);
        let qkv = self
            .qkv
            .forward(ps, x)?
            .reshape(&[bw, n, 3, h, hd])?
            .permute(&[2, 0, 3, 1, 4])?;
        let part = |i: usize| -> Result<Tensor> { Ok(qkv.narrow(0, i, 1)?.reshape(&[bw, h, n, hd])?) };
        let q = part(0)?.mul_scalar(1.0 / (hd as f64).sqrt());
        let (k, v) = (part(1)?, part(2)?);

        let mut attn = q.matmul(&k.transpose_last()?)?.add_trailing(&self.bias.bias(ps)?)?;
        if let Some(mask) = mask {
            let nw = mask.shape()[0];
            if mask.shape() != [nw, h, n, n] || bw % nw != 0 {
                return Err(CoreError::config(format!(
                    "mask of shape {:?} does not fit {bw} windows with {h} heads of {n} tokens",
                    mask.shape()
                )));
            }
            attn = attn.reshape(&[bw / nw, nw, h, n, n])?.add_trailing(mask)?.reshape(&[bw, h, n, n])?;
        }
        let out = attn.softmax(3)?.matmul(&v)?.permute(&[0, 2, 1, 3])?.reshape(&[bw, n, d])?;
        self.proj.forward(ps, &out)
    }
}

/// Repeats a `[nW, N, N]` mask across heads.
pub fn expand_mask(mask: &AttentionMask, heads: usize) -> Result<Tensor> {
    let shape = mask.mask.shape();
    let (nw, nn) = (shape[0], shape[1] * shape[2]);
    let src = mask.mask.data();
    let mut data = Vec::with_capacity(nw * heads * nn);
    for w in 0..nw {
        for _ in 0..heads {
            data.extend_from_slice(&src[w * nn..(w + 1) * nn]);
        }
    }
    Ok(Tensor::from_vec(&[nw, heads, shape[1], shape[2]], data)?)
}
