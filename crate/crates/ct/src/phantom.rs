//! Procedural chest-CT stand-ins: noisy lung-density volumes, some holding
//! one bright spherical nodule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use swinct_core::train::derive_seed;

use crate::error::{CtError, Result};
use crate::volume::{NoduleAnnotation, Volume};

const STREAM_PHANTOM: u64 = 31;
pub const LUNG_HU: f64 = -700.0;
pub const NODULE_HU: f64 = 50.0;
pub const NOISE_HU: f64 = 60.0;
pub const RADIUS_RANGE: (f64, f64) = (3.0, 8.0);

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomCase {
    pub volume: Volume,
    pub annotation: Option<NoduleAnnotation>,
    /// Sphere radius in voxels, when a nodule is present.
    pub radius: Option<f64>,
    /// 0/1 nodule mask, same layout as the voxels.
    pub mask: Vec<u8>,
}

/// Voxels whose centre lies within `radius` of `center`.
pub fn sphere_voxels(dims: [usize; 3], center: [usize; 3], radius: f64) -> Vec<u8> {
    let mut mask = vec![0u8; dims.iter().product()];
    let r2 = radius * radius;
    for z in 0..dims[0] {
        for y in 0..dims[1] {
            for x in 0..dims[2] {
                let d2 = [z, y, x]
                    .iter()
                    .zip(&center)
                    .map(|(&a, &c)| (a as f64 - c as f64).powi(2))
                    .sum::<f64>();
                if d2 <= r2 {
                    mask[(z * dims[1] + y) * dims[2] + x] = 1;
                }
            }
        }
    }
    mask
}

/// One phantom volume. Each case draws from its own stream, so the set does
/// not depend on how many cases are generated around it.
pub fn make_case(seed: u64, index: usize, size: usize, nodule_prob: f64) -> PhantomCase {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_PHANTOM, index as u64));
    let noise = Normal::new(0.0, NOISE_HU).expect("valid sigma");
    let dims = [size; 3];
    let id = format!("phantom-{index:05}");
    let has_nodule = rng.random_bool(nodule_prob);
    let (radius, center) = if has_nodule {
        let r = rng.random_range(RADIUS_RANGE.0..=RADIUS_RANGE.1);
        let margin = r.ceil() as usize + 1;
        let c: [usize; 3] = std::array::from_fn(|_| rng.random_range(margin..size - margin));
        (Some(r), Some(c))
    } else {
        (None, None)
    };
    let mask = match (radius, center) {
        (Some(r), Some(c)) => sphere_voxels(dims, c, r),
        _ => vec![0; size * size * size],
    };
    let voxels = mask
        .iter()
        .map(|&m| {
            let base = if m == 1 { NODULE_HU } else { LUNG_HU };
            (base + noise.sample(&mut rng)).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
        })
        .collect();
    let volume = Volume::new(id.clone(), dims, [1.0; 3], voxels).expect("phantom dims are valid");
    let annotation = center.map(|c| NoduleAnnotation {
        volume_id: id,
        center_zyx: c,
        diameter_mm: radius.map(|r| 2.0 * r),
    });
    PhantomCase { volume, annotation, radius, mask }
}

/// `n` phantom volumes of side `size`, each holding a nodule with
/// probability `nodule_prob`.
pub fn make_phantom(seed: u64, n: usize, size: usize, nodule_prob: f64) -> Result<Vec<PhantomCase>> {
    if size < 16 {
        return Err(CtError::Usage(format!("phantom side {size} is below the minimum of 16")));
    }
    if !(0.0..=1.0).contains(&nodule_prob) {
        return Err(CtError::Usage(format!("nodule probability {nodule_prob} outside [0, 1]")));
    }
    Ok((0..n).into_par_iter().map(|i| make_case(seed, i, size, nodule_prob)).collect())
}
