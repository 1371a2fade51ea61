//! Central finite-difference gradient checking.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::no_grad;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Perturbation used in `(f(x+eps) − f(x−eps)) / (2·eps)`.
    pub eps: f64,
    /// Largest acceptable relative error.
    pub tol: f64,
    /// Lower bound on the denominator of the relative error, so entries whose
    /// true gradient is ~0 are compared on an absolute scale.
    pub abs_floor: f64,
    /// Check a random subset of this many entries per input instead of all.
    pub max_entries_per_input: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            tol: 1e-4,
            abs_floor: 1e-6,
            max_entries_per_input: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradMismatch {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Entries whose relative error exceeded the tolerance.
    pub failures: Vec<GradMismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Compares the reverse-mode gradient of the scalar `f(inputs)` with respect
/// to every input against central differences.
///
/// `f` receives fresh leaf tensors built from `inputs` on every call, so it
/// must construct its graph from its arguments only.
pub fn grad_check<F>(f: F, inputs: &[Tensor], cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let leaves: Vec<Tensor> = inputs.iter().map(Tensor::to_param).collect();
    let loss = f(&leaves)?;
    if loss.numel() != 1 {
        return Err(TensorError::NonScalarLoss(loss.shape().to_vec()));
    }
    loss.backward()?;
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .map(|l| l.grad().unwrap_or_else(|| vec![0.0; l.numel()]))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport::default();
    let base: Vec<Tensor> = inputs.iter().map(Tensor::detach).collect();
    for (which, input) in inputs.iter().enumerate() {
        let n = input.numel();
        let entries: Vec<usize> = match cfg.max_entries_per_input {
            Some(k) if k < n => {
                let mut v = sample(&mut rng, n, k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..n).collect(),
        };
        for index in entries {
            let eval = |delta: f64| -> Result<f64> {
                let mut data = input.to_vec();
                data[index] += delta;
                let mut args = base.clone();
                args[which] = Tensor::from_vec(input.shape(), data)?;
                no_grad(|| f(&args)).map(|t| t.item())
            };
            let numeric = (eval(cfg.eps)? - eval(-cfg.eps)?) / (2.0 * cfg.eps);
            let a = analytic[which][index];
            let rel_error = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.abs_floor);
            report.checked += 1;
            report.max_rel_error = report.max_rel_error.max(rel_error);
            // written negated so a NaN error counts as a failure
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            let failed = !(rel_error <= cfg.tol);
            if failed {
                report.failures.push(GradMismatch {
                    input: which,
                    index,
                    analytic: a,
                    numeric,
                    rel_error,
                });
            }
        }
    }
    Ok(report)
}
