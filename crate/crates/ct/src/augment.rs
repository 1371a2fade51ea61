//! Seeded geometric and photometric augmentation of slices.
//!
//! Geometric ops move the image and its mask together (masks with nearest
//! neighbour sampling); photometric ops touch the image only.

use std::fmt::Write;

use image::imageops;
use image::{ImageBuffer, Luma};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::slicing::{resize_image, resize_mask, Label, SliceRecord};

/// Windowed value of air, used to fill uncovered image pixels.
pub const IMAGE_FILL: f32 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugOp {
    /// `k` quarter turns clockwise.
    Rot90(u8),
    /// Small rotation in degrees about the image centre, clockwise.
    Rotate(f32),
    FlipH,
    FlipV,
    /// Integer shift by `(rows, cols)`.
    Translate(i32, i32),
    /// Zoom by the factor, then centre-crop or pad back to size.
    Scale(f32),
    /// `v ← (v − ½)·contrast + ½ + brightness`, clamped to `[0, 1]`.
    Photometric { brightness: f32, contrast: f32 },
}

/// An ordered list of ops.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AugPlan {
    pub ops: Vec<AugOp>,
}

impl AugPlan {
    /// Draws each op independently: scale in `[0.5, 2]`, a rotation of up to
    /// 15°, a quarter-turn count, flips, a shift of up to a twelfth of the
    /// side, and brightness/contrast jitter.
    pub fn sample<R: Rng>(rng: &mut R, size: usize) -> Self {
        let mut ops = Vec::new();
        if rng.random_bool(0.5) {
            ops.push(AugOp::Scale(rng.random_range(0.5..=2.0)));
        }
        if rng.random_bool(0.5) {
            ops.push(AugOp::Rotate(rng.random_range(-15.0..=15.0)));
        }
        let k = rng.random_range(0..4u8);
        if k > 0 {
            ops.push(AugOp::Rot90(k));
        }
        if rng.random_bool(0.5) {
            ops.push(AugOp::FlipH);
        }
        if rng.random_bool(0.5) {
            ops.push(AugOp::FlipV);
        }
        let reach = (size / 12).max(1) as i32;
        if rng.random_bool(0.5) {
            ops.push(AugOp::Translate(rng.random_range(-reach..=reach), rng.random_range(-reach..=reach)));
        }
        if rng.random_bool(0.5) {
            ops.push(AugOp::Photometric {
                brightness: rng.random_range(-0.1..=0.1),
                contrast: rng.random_range(0.8..=1.2),
            });
        }
        Self { ops }
    }

    /// Compact description recorded in provenance.
    pub fn tag(&self) -> String {
        let mut s = String::new();
        for (i, op) in self.ops.iter().enumerate() {
            if i > 0 {
                s.push('+');
            }
            let _ = match op {
                AugOp::Rot90(k) => write!(s, "rot90x{k}"),
                AugOp::Rotate(a) => write!(s, "rot{a:.3}"),
                AugOp::FlipH => write!(s, "fliph"),
                AugOp::FlipV => write!(s, "flipv"),
                AugOp::Translate(r, c) => write!(s, "shift{r},{c}"),
                AugOp::Scale(f) => write!(s, "scale{f:.4}"),
                AugOp::Photometric { brightness, contrast } => write!(s, "photo{brightness:.4},{contrast:.4}"),
            };
        }
        s
    }

    /// Applies the plan to an `h × w` image and optional mask in place.
    pub fn apply_arrays(&self, image: &mut Vec<f32>, mask: Option<&mut Vec<u8>>, h: usize, w: usize) {
        let mut mask = mask;
        let (mut h, mut w) = (h, w);
        for op in &self.ops {
            match *op {
                AugOp::Photometric { brightness, contrast } => {
                    image.iter_mut().for_each(|v| *v = ((*v - 0.5) * contrast + 0.5 + brightness).clamp(0.0, 1.0));
                }
                _ => {
                    let (nh, nw) = geometric(op, image, h, w, IMAGE_FILL, Interp::Linear);
                    if let Some(m) = mask.as_deref_mut() {
                        geometric(op, m, h, w, 0, Interp::Nearest);
                    }
                    (h, w) = (nh, nw);
                }
            }
        }
    }
}

/// Applies `plan` and appends its tag to the provenance.
pub fn augment(rec: &SliceRecord, plan: &AugPlan) -> SliceRecord {
    let mut out = rec.clone();
    let mask = match &mut out.label {
        Label::Mask(m) => Some(m),
        Label::Class(_) => None,
    };
    plan.apply_arrays(&mut out.image, mask, rec.height, rec.width);
    if rec.height != rec.width && plan.ops.iter().any(|op| matches!(op, AugOp::Rot90(1 | 3))) {
        (out.height, out.width) = (rec.width, rec.height);
    }
    let tag = plan.tag();
    if !tag.is_empty() {
        if !out.provenance.augmentation.is_empty() {
            out.provenance.augmentation.push('|');
        }
        out.provenance.augmentation.push_str(&tag);
    }
    out
}

#[derive(Clone, Copy)]
enum Interp {
    Linear,
    Nearest,
}

trait Pixel: Copy + Default + image::Primitive + 'static {
    fn resize(data: &[Self], h: usize, w: usize, oh: usize, ow: usize) -> Vec<Self>;
    fn lerp(a: Self, b: Self, t: f32) -> Self;
}

impl Pixel for f32 {
    fn resize(data: &[f32], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f32> {
        resize_image(data, h, w, oh, ow)
    }
    fn lerp(a: f32, b: f32, t: f32) -> f32 {
        a + (b - a) * t
    }
}

impl Pixel for u8 {
    fn resize(data: &[u8], h: usize, w: usize, oh: usize, ow: usize) -> Vec<u8> {
        resize_mask(data, h, w, oh, ow)
    }
    fn lerp(a: u8, _: u8, _: f32) -> u8 {
        a
    }
}

/// Applies one geometric op, returning the new `(h, w)`.
fn geometric<T: Pixel>(op: &AugOp, data: &mut Vec<T>, h: usize, w: usize, fill: T, interp: Interp) -> (usize, usize) {
    let buf = || -> ImageBuffer<Luma<T>, Vec<T>> {
        ImageBuffer::from_raw(w as u32, h as u32, data.clone()).expect("buffer matches dims")
    };
    match *op {
        AugOp::Rot90(k) => {
            let out = match k % 4 {
                0 => return (h, w),
                1 => imageops::rotate90(&buf()),
                2 => imageops::rotate180(&buf()),
                _ => imageops::rotate270(&buf()),
            };
            *data = out.into_raw();
            if k % 2 == 1 {
                (w, h)
            } else {
                (h, w)
            }
        }
        AugOp::FlipH => {
            *data = imageops::flip_horizontal(&buf()).into_raw();
            (h, w)
        }
        AugOp::FlipV => {
            *data = imageops::flip_vertical(&buf()).into_raw();
            (h, w)
        }
        AugOp::Translate(dr, dc) => {
            let mut out = vec![fill; h * w];
            for r in 0..h as i64 {
                for c in 0..w as i64 {
                    let (sr, sc) = (r - dr as i64, c - dc as i64);
                    if sr >= 0 && sc >= 0 && (sr as usize) < h && (sc as usize) < w {
                        out[r as usize * w + c as usize] = data[sr as usize * w + sc as usize];
                    }
                }
            }
            *data = out;
            (h, w)
        }
        AugOp::Scale(f) => {
            let sh = ((h as f32 * f).round() as usize).max(1);
            let sw = ((w as f32 * f).round() as usize).max(1);
            let scaled = T::resize(data, h, w, sh, sw);
            let mut out = vec![fill; h * w];
            // offsets of the scaled image's origin inside the output frame
            let (or, oc) = ((h as i64 - sh as i64) / 2, (w as i64 - sw as i64) / 2);
            for r in 0..h as i64 {
                for c in 0..w as i64 {
                    let (sr, sc) = (r - or, c - oc);
                    if sr >= 0 && sc >= 0 && (sr as usize) < sh && (sc as usize) < sw {
                        out[r as usize * w + c as usize] = scaled[sr as usize * sw + sc as usize];
                    }
                }
            }
            *data = out;
            (h, w)
        }
        AugOp::Rotate(deg) => {
            *data = rotate_small(data, h, w, deg, fill, interp);
            (h, w)
        }
        AugOp::Photometric { .. } => (h, w),
    }
}

/// Rotation about the image centre by inverse mapping each output pixel.
fn rotate_small<T: Pixel>(data: &[T], h: usize, w: usize, deg: f32, fill: T, interp: Interp) -> Vec<T> {
    let (sin, cos) = deg.to_radians().sin_cos();
    let (cy, cx) = ((h as f32 - 1.0) / 2.0, (w as f32 - 1.0) / 2.0);
    let at = |r: i64, c: i64| -> T {
        if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w {
            data[r as usize * w + c as usize]
        } else {
            fill
        }
    };
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let (y, x) = (r as f32 - cy, c as f32 - cx);
            let sy = cos * y - sin * x + cy;
            let sx = sin * y + cos * x + cx;
            out.push(match interp {
                Interp::Nearest => at(sy.round() as i64, sx.round() as i64),
                Interp::Linear => {
                    let (y0, x0) = (sy.floor(), sx.floor());
                    let (ty, tx) = (sy - y0, sx - x0);
                    let (y0, x0) = (y0 as i64, x0 as i64);
                    let top = T::lerp(at(y0, x0), at(y0, x0 + 1), tx);
                    let bottom = T::lerp(at(y0 + 1, x0), at(y0 + 1, x0 + 1), tx);
                    T::lerp(top, bottom, ty)
                }
            });
        }
    }
    out
}
