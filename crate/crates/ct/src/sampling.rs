//! Positive expansion and negative subsampling.

use std::collections::HashSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use swinct_core::train::derive_seed;

use crate::augment::{augment, AugPlan};
use crate::error::{CtError, Result};
use crate::slicing::SliceRecord;

const STREAM_EXPAND: u64 = 11;
const STREAM_SUBSAMPLE: u64 = 12;
const MAX_REDRAWS: usize = 1000;

/// Replaces every positive record by itself plus `factor − 1` augmented
/// copies with distinct plans. Negatives pass through unchanged; order is
/// preserved.
pub fn expand_positives(records: &[SliceRecord], factor: usize, seed: u64) -> Result<Vec<SliceRecord>> {
    if factor == 0 {
        return Err(CtError::Usage("expansion factor must be at least 1".into()));
    }
    let groups: Vec<Vec<SliceRecord>> = records
        .par_iter()
        .enumerate()
        .map(|(i, rec)| {
            if !rec.is_positive() || factor == 1 {
                return vec![rec.clone()];
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_EXPAND, i as u64));
            let mut seen = HashSet::from([String::new()]);
            let mut out = vec![rec.clone()];
            let mut draws = 0;
            while out.len() < factor {
                let plan = AugPlan::sample(&mut rng, rec.height.max(rec.width));
                draws += 1;
                if seen.insert(plan.tag()) || draws > MAX_REDRAWS {
                    out.push(augment(rec, &plan));
                }
            }
            out
        })
        .collect();
    Ok(groups.into_iter().flatten().collect())
}

/// Number of items kept when sampling `fraction` of `n`.
pub fn subsample_count(n: usize, fraction: f64) -> usize {
    (fraction * n as f64).round() as usize
}

/// Uniform sample without replacement of `round(fraction·N)` items, in
/// their original order.
pub fn subsample_negatives<T: Clone>(items: &[T], fraction: f64, seed: u64) -> Result<Vec<T>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CtError::Usage(format!("sampling fraction {fraction} outside (0, 1]")));
    }
    let k = subsample_count(items.len(), fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_SUBSAMPLE, 0));
    let mut picked = index::sample(&mut rng, items.len(), k).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| items[i].clone()).collect())
}
