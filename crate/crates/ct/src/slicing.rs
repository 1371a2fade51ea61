//! Nodule-centred cropping, tri-axial slicing, HU windowing and resizing.

use image::imageops::{self, FilterType};
use image::{ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{CtError, Result};
use crate::volume::Volume;

/// Value given to voxels outside the scan: air.
pub const AIR_HU: i16 = -1000;
/// Display window mapped linearly onto `[0, 1]`.
pub const HU_WINDOW: (f32, f32) = (-1000.0, 400.0);
pub const CROP_SIZE: usize = 48;

/// Clamps `hu` into the display window and maps it onto `[0, 1]`.
pub fn hu_window(hu: f32) -> f32 {
    let (lo, hi) = HU_WINDOW;
    ((hu - lo) / (hi - lo)).clamp(0.0, 1.0)
}

/// A cube of `size³` values in `(z, y, x)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Cube<T> {
    pub size: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Cube<T> {
    pub fn get(&self, z: usize, y: usize, x: usize) -> T {
        self.data[(z * self.size + y) * self.size + x]
    }

    /// The 2D slice at `index` along `axis`, row-major.
    pub fn slice(&self, axis: Axis, index: usize) -> Vec<T> {
        let n = self.size;
        let mut out = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                out.push(match axis {
                    Axis::Z => self.get(index, r, c),
                    Axis::Y => self.get(r, index, c),
                    Axis::X => self.get(r, c, index),
                });
            }
        }
        out
    }
}

/// Cube of side `size` whose centre voxel (index `size / 2` on each axis) is
/// `center`; voxels outside the source are `fill`.
pub fn crop<T: Copy>(src: &[T], dims: [usize; 3], center: [usize; 3], size: usize, fill: T) -> Cube<T> {
    let half = (size / 2) as isize;
    let mut data = Vec::with_capacity(size * size * size);
    let inside = |v: isize, d: usize| (v >= 0 && (v as usize) < d).then_some(v as usize);
    for dz in 0..size as isize {
        let z = inside(center[0] as isize - half + dz, dims[0]);
        for dy in 0..size as isize {
            let y = inside(center[1] as isize - half + dy, dims[1]);
            for dx in 0..size as isize {
                let x = inside(center[2] as isize - half + dx, dims[2]);
                data.push(match (z, y, x) {
                    (Some(z), Some(y), Some(x)) => src[(z * dims[1] + y) * dims[2] + x],
                    _ => fill,
                });
            }
        }
    }
    Cube { size, data }
}

/// The 48³ region around `center`, padded with air.
pub fn crop_nodule(volume: &Volume, center: [usize; 3]) -> Cube<i16> {
    crop(&volume.voxels, volume.dims, center, CROP_SIZE, AIR_HU)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Z,
    Y,
    X,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Z, Axis::Y, Axis::X];
}

/// Where a slice came from. Unique per record.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub volume_id: String,
    /// Centre of the crop the slice was cut from.
    pub center_zyx: [usize; 3],
    pub axis: Axis,
    pub index: usize,
    /// Empty for an unaugmented slice.
    pub augmentation: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Label {
    /// 0 = non-nodule, 1 = nodule.
    Class(u8),
    /// Per-pixel 0/1 nodule mask.
    Mask(Vec<u8>),
}

/// A windowed 2D slice. The three colour channels are identical, so only
/// one is held; [`SliceRecord::rgb`] expands it.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceRecord {
    pub height: usize,
    pub width: usize,
    /// Row-major grey values in `[0, 1]`.
    pub image: Vec<f32>,
    pub label: Label,
    pub provenance: Provenance,
}

impl SliceRecord {
    /// `[H, W, 3]` row-major.
    pub fn rgb(&self) -> Vec<f32> {
        self.image.iter().flat_map(|&v| [v, v, v]).collect()
    }

    pub fn is_positive(&self) -> bool {
        match &self.label {
            Label::Class(c) => *c == 1,
            Label::Mask(m) => m.iter().any(|&v| v > 0),
        }
    }

    /// Bicubic resize of the image; masks use nearest neighbour.
    pub fn resized(&self, size: usize) -> SliceRecord {
        if self.height == size && self.width == size {
            return self.clone();
        }
        let label = match &self.label {
            Label::Class(c) => Label::Class(*c),
            Label::Mask(m) => Label::Mask(resize_mask(m, self.height, self.width, size, size)),
        };
        SliceRecord {
            height: size,
            width: size,
            image: resize_image(&self.image, self.height, self.width, size, size),
            label,
            provenance: self.provenance.clone(),
        }
    }
}

/// How slices of a crop are labelled.
#[derive(Debug, Clone, Copy)]
pub enum SliceLabel<'a> {
    Class(u8),
    /// Segmentation: slices whose mask is empty are dropped.
    Mask(&'a Cube<u8>),
}

/// Every slice along each axis (`3·size` in total, fewer for masks with
/// empty slices), ordered z, y, x and by index.
pub fn slice_triaxial(cube: &Cube<i16>, label: SliceLabel<'_>, volume_id: &str, center: [usize; 3]) -> Result<Vec<SliceRecord>> {
    let all: Vec<usize> = (0..cube.size).collect();
    slice_triaxial_at(cube, label, volume_id, center, &all)
}

/// Like [`slice_triaxial`] but only at the given indices on each axis.
pub fn slice_triaxial_at(
    cube: &Cube<i16>,
    label: SliceLabel<'_>,
    volume_id: &str,
    center: [usize; 3],
    indices: &[usize],
) -> Result<Vec<SliceRecord>> {
    if let SliceLabel::Mask(mask) = label {
        if mask.size != cube.size {
            return Err(CtError::data(format!("mask side {} does not match cube side {}", mask.size, cube.size)));
        }
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= cube.size) {
        return Err(CtError::data(format!("slice index {bad} outside a cube of side {}", cube.size)));
    }
    let mut out = Vec::new();
    for axis in Axis::ALL {
        for &index in indices {
            let label = match label {
                SliceLabel::Class(c) => Label::Class(c),
                SliceLabel::Mask(mask) => {
                    let m = mask.slice(axis, index);
                    if m.iter().all(|&v| v == 0) {
                        continue;
                    }
                    Label::Mask(m)
                }
            };
            let image = cube.slice(axis, index).into_iter().map(|v| hu_window(v as f32)).collect();
            out.push(SliceRecord {
                height: cube.size,
                width: cube.size,
                image,
                label,
                provenance: Provenance {
                    volume_id: volume_id.to_owned(),
                    center_zyx: center,
                    axis,
                    index,
                    augmentation: String::new(),
                },
            });
        }
    }
    Ok(out)
}

fn to_buffer(img: &[f32], h: usize, w: usize) -> ImageBuffer<Luma<f32>, Vec<f32>> {
    ImageBuffer::from_raw(w as u32, h as u32, img.to_vec()).expect("buffer matches dims")
}

/// Catmull-Rom bicubic resampling of a grey image in `[0, 1]`.
pub fn resize_image(img: &[f32], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f32> {
    imageops::resize(&to_buffer(img, h, w), ow as u32, oh as u32, FilterType::CatmullRom).into_raw()
}

/// Nearest-neighbour resampling of a label mask.
pub fn resize_mask(mask: &[u8], h: usize, w: usize, oh: usize, ow: usize) -> Vec<u8> {
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(w as u32, h as u32, mask.to_vec()).expect("buffer matches dims");
    imageops::resize(&buf, ow as u32, oh as u32, FilterType::Nearest).into_raw()
}
