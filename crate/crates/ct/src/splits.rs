//! Train/validation/test split assembly with fixed class ratios and a
//! volume-level leakage guard.

use std::collections::HashMap;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use swinct_core::train::derive_seed;

use crate::error::{CtError, Result};

const STREAM_UNITS: u64 = 21;
const STREAM_PICK: u64 = 22;

pub const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];

/// Positive-to-negative ratios of the classification splits.
pub const CLASSIFICATION_RATIOS: [f64; 3] = [6.0, 1.2, 1.0];

/// Reference split sizes of the classification set, used as default split
/// proportions.
pub const CLASSIFICATION_REFERENCE_SIZES: [usize; 3] = [20565, 2571, 7076];

pub const SEGMENTATION_FRACTIONS: [f64; 3] = [0.8, 0.1, 0.1];

/// What the split builders need to know about a record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordMeta {
    pub volume_id: String,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    /// Share of records aimed at train, val and test.
    pub fractions: [f64; 3],
    /// Keep every volume inside a single split.
    pub leakage_guard: bool,
    /// Optional cap on each split's size.
    pub max_sizes: Option<[usize; 3]>,
}

impl SplitPlan {
    pub fn classification() -> Self {
        let total: usize = CLASSIFICATION_REFERENCE_SIZES.iter().sum();
        Self {
            fractions: CLASSIFICATION_REFERENCE_SIZES.map(|s| s as f64 / total as f64),
            leakage_guard: true,
            max_sizes: None,
        }
    }

    pub fn segmentation() -> Self {
        Self { fractions: SEGMENTATION_FRACTIONS, leakage_guard: true, max_sizes: None }
    }

    fn validate(&self) -> Result<()> {
        if self.fractions.iter().any(|&f| !(f >= 0.0 && f.is_finite())) || self.fractions.iter().sum::<f64>() <= 0.0 {
            return Err(CtError::Usage(format!("split fractions {:?} must be non-negative and not all zero", self.fractions)));
        }
        Ok(())
    }
}

/// Record indices of each split, ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    pub fn parts(&self) -> [&Vec<usize>; 3] {
        [&self.train, &self.val, &self.test]
    }

    fn from_parts(mut parts: [Vec<usize>; 3]) -> Self {
        parts.iter_mut().for_each(|p| p.sort_unstable());
        let [train, val, test] = parts;
        Self { train, val, test }
    }
}

/// Groups of record indices that must stay together, in seeded random order.
fn units(metas: &[RecordMeta], guard: bool, seed: u64) -> Vec<Vec<usize>> {
    let mut units: Vec<Vec<usize>> = if guard {
        let mut by_volume: HashMap<&str, usize> = HashMap::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (i, m) in metas.iter().enumerate() {
            let g = *by_volume.entry(&m.volume_id).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(i);
        }
        groups
    } else {
        (0..metas.len()).map(|i| vec![i]).collect()
    };
    units.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_UNITS, 0)));
    units
}

/// Assigns each unit to the split that is least filled relative to its
/// targets. Units holding positives are placed by positive fill, since
/// negatives are the abundant class; negative-only units by negative fill.
/// `targets[s][c]` is the target share of class `c` in split `s`.
fn assign(metas: &[RecordMeta], units: &[Vec<usize>], targets: &[[f64; 2]; 3]) -> [[Vec<usize>; 2]; 3] {
    let mut out: [[Vec<usize>; 2]; 3] = Default::default();
    let fill = |count: usize, target: f64| if target > 0.0 { count as f64 / target } else { f64::INFINITY };
    for unit in units {
        let pos = unit.iter().filter(|&&i| metas[i].positive).count();
        let class = usize::from(pos == 0);
        let score = |s: usize| fill(out[s][class].len(), targets[s][class]);
        let best = (0..3)
            .filter(|&s| targets[s][0] + targets[s][1] > 0.0)
            .min_by(|&a, &b| score(a).total_cmp(&score(b)))
            .expect("at least one split has a target");
        for &i in unit {
            out[best][usize::from(!metas[i].positive)].push(i);
        }
    }
    out
}

/// Seeded choice of `k` items of `pool`.
fn pick(pool: &[usize], k: usize, seed: u64, stream_index: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_PICK, stream_index));
    index::sample(&mut rng, pool.len(), k).into_iter().map(|j| pool[j]).collect()
}

/// Classification splits with positive:negative ratios 6:1 (train),
/// 1.2:1 (val) and 1:1 (test), each within one record.
///
/// Splits with a zero fraction stay empty. Surplus records are left out.
pub fn build_splits_classification(metas: &[RecordMeta], seed: u64, plan: &SplitPlan) -> Result<SplitIndices> {
    plan.validate()?;
    let r = CLASSIFICATION_RATIOS;
    let targets: [[f64; 2]; 3] = std::array::from_fn(|s| {
        let f = plan.fractions[s];
        [f * r[s] / (r[s] + 1.0), f / (r[s] + 1.0)]
    });
    let units = units(metas, plan.leakage_guard, seed);
    let assigned = assign(metas, &units, &targets);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for s in 0..3 {
        if plan.fractions[s] == 0.0 {
            continue;
        }
        let [pos, neg] = &assigned[s];
        let mut n_neg = neg.len().min((pos.len() as f64 / r[s]).floor() as usize);
        if let Some(max) = plan.max_sizes {
            n_neg = n_neg.min((max[s] as f64 / (r[s] + 1.0)).round() as usize);
        }
        let n_pos = (r[s] * n_neg as f64).round() as usize;
        if n_neg == 0 || n_pos == 0 {
            return Err(CtError::data(format!(
                "{} split cannot reach a {}:1 ratio: it holds {} positives and {} negatives",
                SPLIT_NAMES[s],
                r[s],
                pos.len(),
                neg.len()
            )));
        }
        parts[s] = pick(pos, n_pos, seed, 2 * s as u64);
        parts[s].extend(pick(neg, n_neg, seed, 2 * s as u64 + 1));
    }
    Ok(SplitIndices::from_parts(parts))
}

/// Largest-remainder apportionment of `total` by `fractions`.
pub fn apportion(total: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let sum: f64 = fractions.iter().sum();
    let exact: Vec<f64> = fractions.iter().map(|f| f / sum * total as f64).collect();
    let mut counts: [usize; 3] = std::array::from_fn(|s| exact[s].floor() as usize);
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let short = total - counts.iter().sum::<usize>();
    for &s in order.iter().take(short) {
        counts[s] += 1;
    }
    counts
}

/// Segmentation splits in proportion 8:1:1, each within one record.
pub fn build_splits_segmentation(metas: &[RecordMeta], seed: u64, plan: &SplitPlan) -> Result<SplitIndices> {
    plan.validate()?;
    if metas.len() < 10 {
        return Err(CtError::data(format!("segmentation splits need at least 10 records, got {}", metas.len())));
    }
    // every record is one class here; only the first target column is used
    let as_one: Vec<RecordMeta> = metas.iter().map(|m| RecordMeta { volume_id: m.volume_id.clone(), positive: true }).collect();
    let targets: [[f64; 2]; 3] = std::array::from_fn(|s| [plan.fractions[s], 0.0]);
    let units = units(&as_one, plan.leakage_guard, seed);
    let assigned = assign(&as_one, &units, &targets);
    let available: [usize; 3] = std::array::from_fn(|s| assigned[s][0].len());
    let mut total = available.iter().sum::<usize>();
    if let Some(max) = plan.max_sizes {
        total = total.min(max.iter().sum());
    }
    let counts = loop {
        let c = apportion(total, &plan.fractions);
        let capped = plan.max_sizes.is_none_or(|m| (0..3).all(|s| c[s] <= m[s]));
        if (0..3).all(|s| c[s] <= available[s]) && capped {
            break c;
        }
        total -= 1;
    };
    for s in 0..3 {
        if plan.fractions[s] > 0.0 && counts[s] == 0 {
            return Err(CtError::data(format!(
                "{} split would be empty; available per split: {available:?}",
                SPLIT_NAMES[s]
            )));
        }
    }
    let parts = std::array::from_fn(|s| pick(&assigned[s][0], counts[s], seed, s as u64));
    Ok(SplitIndices::from_parts(parts))
}
