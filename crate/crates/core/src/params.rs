//! Named parameter storage and the small layers built on it.
//!
//! Modules hold [`ParamId`]s into a [`ParamStore`], so an optimizer can swap
//! in updated tensors without touching the module tree.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use swinct_tensor::Tensor;

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    /// Whether weight decay applies. Biases, norms and bias tables are exempt.
    pub decay: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor, decay: bool) -> ParamId {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.entries.push(ParamEntry { name, value: value.to_param(), decay });
        ParamId(self.entries.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    /// Replaces a parameter value. A gradient-tracking leaf is stored as
    /// given, anything else is copied into a new leaf.
    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let entry = &mut self.entries[id.0];
        if value.shape() != entry.value.shape() {
            return Err(CoreError::config(format!(
                "parameter `{}` has shape {:?}, got {:?}",
                entry.name,
                entry.value.shape(),
                value.shape()
            )));
        }
        entry.value = if value.requires_grad() && value.is_leaf() { value } else { value.to_param() };
        Ok(())
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of learnable scalars.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.numel()).sum()
    }

    pub fn zero_grads(&self) {
        self.entries.iter().for_each(|e| e.value.zero_grad());
    }
}

/// Samples from N(0, std²) truncated to two standard deviations.
pub fn trunc_normal(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let z: f64 = StandardNormal.sample(rng);
            if z.abs() <= 2.0 {
                break z * std;
            }
        })
        .collect();
    Tensor::from_vec(shape, data).expect("shape matches sample count")
}

pub(crate) const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
    ) -> Self {
        let weight = ps.add(format!("{prefix}.weight"), trunc_normal(rng, &[in_dim, out_dim], INIT_STD), true);
        let bias = bias.then(|| ps.add(format!("{prefix}.bias"), Tensor::zeros(&[out_dim]), false));
        Self { weight, bias, in_dim, out_dim }
    }

    pub fn forward(&self, ps: &ParamStore, x: &Tensor) -> Result<Tensor> {
        Ok(x.linear(ps.get(self.weight), self.bias.map(|b| ps.get(b)))?)
    }

    pub fn num_params(in_dim: usize, out_dim: usize, bias: bool) -> usize {
        in_dim * out_dim + if bias { out_dim } else { 0 }
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new(ps: &mut ParamStore, prefix: &str, dim: usize) -> Self {
        let gamma = ps.add(format!("{prefix}.weight"), Tensor::ones(&[dim]), false);
        let beta = ps.add(format!("{prefix}.bias"), Tensor::zeros(&[dim]), false);
        Self { gamma, beta, eps: Self::EPS }
    }

    pub fn forward(&self, ps: &ParamStore, x: &Tensor) -> Result<Tensor> {
        Ok(x.layer_norm(ps.get(self.gamma), ps.get(self.beta), self.eps)?)
    }
}

/// Per-sample residual scaling for stochastic depth: each sample keeps its
/// branch with probability `1 − rate`, scaled by `1 / (1 − rate)`.
pub fn drop_path(x: &Tensor, rate: f64, rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
    let Some(rng) = rng else { return Ok(x.clone()) };
    if rate <= 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 - rate;
    let factors: Vec<f64> = (0..x.shape()[0])
        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    Ok(x.scale_samples(&factors)?)
}
