use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::params::{ParamId, ParamStore};
use swinct_tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamWConfig {
    pub weight_decay: f64,
    #[serde(default = "default_betas")]
    pub betas: (f64, f64),
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_betas() -> (f64, f64) {
    (0.9, 0.999)
}
fn default_eps() -> f64 {
    1e-8
}

impl AdamWConfig {
    pub fn with_decay(weight_decay: f64) -> Self {
        Self { weight_decay, betas: default_betas(), eps: default_eps() }
    }
}

/// One AdamW update of a single parameter, in place.
///
/// Decoupled decay shrinks `theta` by `lr·wd·theta` first, then the
/// bias-corrected Adam step is applied. `step` is the 1-based update count.
#[allow(clippy::too_many_arguments)]
pub fn adamw_update(
    theta: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    lr: f64,
    weight_decay: f64,
    cfg: &AdamWConfig,
) {
    let (b1, b2) = cfg.betas;
    let c1 = 1.0 - b1.powi(step as i32);
    let c2 = 1.0 - b2.powi(step as i32);
    let shrink = 1.0 - lr * weight_decay;
    for i in 0..theta.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        theta[i] = theta[i] * shrink - lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// Optimizer state for every parameter of a store.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(ps: &ParamStore, config: AdamWConfig) -> Self {
        let zeros = || ps.entries().iter().map(|e| vec![0.0; e.value.numel()]).collect();
        Self { config, step: 0, m: zeros(), v: zeros() }
    }

    /// Applies one update. Parameters without a gradient are left alone;
    /// weight decay skips parameters flagged as exempt.
    pub fn step(&mut self, ps: &mut ParamStore, grads: &[Option<Vec<f64>>], lr: f64) -> Result<()> {
        if grads.len() != ps.len() {
            return Err(CoreError::Usage(format!("{} gradients for {} parameters", grads.len(), ps.len())));
        }
        let next = self.step + 1;
        if let Some(bad) = first_non_finite(ps, grads) {
            return Err(CoreError::NonFinite {
                what: "gradient",
                step: next,
                param: Some(ps.entry(bad).name.clone()),
                diagnostic: None,
            });
        }
        self.step = next;
        let ids: Vec<ParamId> = ps.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let Some(g) = &grads[k] else { continue };
            let entry = ps.entry(id);
            let wd = if entry.decay { self.config.weight_decay } else { 0.0 };
            let mut theta = entry.value.to_vec();
            adamw_update(&mut theta, g, &mut self.m[k], &mut self.v[k], next, lr, wd, &self.config);
            if theta.iter().any(|x| !x.is_finite()) {
                return Err(CoreError::NonFinite {
                    what: "parameter",
                    step: next,
                    param: Some(entry.name.clone()),
                    diagnostic: None,
                });
            }
            let shape = entry.value.shape().to_vec();
            ps.set(id, Tensor::from_vec(&shape, theta)?)?;
        }
        Ok(())
    }
}

/// Gradients of every parameter in store order.
pub fn collect_grads(ps: &ParamStore) -> Vec<Option<Vec<f64>>> {
    ps.entries().iter().map(|e| e.value.grad()).collect()
}

pub fn first_non_finite(ps: &ParamStore, grads: &[Option<Vec<f64>>]) -> Option<ParamId> {
    ps.ids()
        .zip(grads)
        .find(|(_, g)| g.as_ref().is_some_and(|g| g.iter().any(|x| !x.is_finite())))
        .map(|(id, _)| id)
}

pub fn global_grad_norm(grads: &[Option<Vec<f64>>]) -> f64 {
    grads.iter().flatten().flat_map(|g| g.iter()).map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Option<Vec<f64>>], max_norm: f64) -> f64 {
    let norm = global_grad_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| g.iter_mut().for_each(|x| *x *= scale));
    }
    norm
}

/// Exponential moving average of the parameters.
#[derive(Debug, Clone)]
pub struct Ema {
    pub decay: f64,
    pub shadow: Vec<Vec<f64>>,
}

impl Ema {
    pub fn new(ps: &ParamStore, decay: f64) -> Self {
        Self { decay, shadow: ps.entries().iter().map(|e| e.value.to_vec()).collect() }
    }

    /// `shadow ← decay·shadow + (1 − decay)·params`.
    pub fn update(&mut self, ps: &ParamStore) -> Result<()> {
        if ps.len() != self.shadow.len() {
            return Err(CoreError::Usage("EMA shadow does not match the parameter store".into()));
        }
        let d = self.decay;
        for (s, e) in self.shadow.iter_mut().zip(ps.entries()) {
            if s.len() != e.value.numel() {
                return Err(CoreError::Usage(format!("EMA shadow of `{}` has the wrong size", e.name)));
            }
            s.iter_mut().zip(e.value.data()).for_each(|(a, &p)| *a = d * *a + (1.0 - d) * p);
        }
        Ok(())
    }

    /// A copy of `ps` holding the shadow values.
    pub fn to_store(&self, ps: &ParamStore) -> Result<ParamStore> {
        let mut out = ps.clone();
        let ids: Vec<ParamId> = ps.ids().collect();
        for (id, s) in ids.into_iter().zip(&self.shadow) {
            let shape = ps.get(id).shape().to_vec();
            out.set(id, Tensor::from_vec(&shape, s.clone())?)?;
        }
        Ok(out)
    }
}
