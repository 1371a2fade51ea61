//! CT volumes in the SWV1 format and JSON-lines nodule annotations.
//!
//! SWV1 layout (little-endian): magic `53 57 56 31`, u8 dtype (1 = int16),
//! u8 rank (3), three u32 dims (depth, height, width), three f32 spacings
//! (z, y, x) in mm, then row-major int16 voxels.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use swinct_tensor::io::{read_dims, read_payload, write_atomic, ByteReader, DType, FormatError, TensorData};

use crate::error::{CtError, Result};

pub const SWV1_MAGIC: [u8; 4] = *b"SWV1";
const DTYPE_I16: u8 = 1;

/// A 3D scan of Hounsfield-like units.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub id: String,
    /// `(depth, height, width)`.
    pub dims: [usize; 3],
    /// Voxel size `(z, y, x)` in mm.
    pub spacing: [f32; 3],
    pub voxels: Vec<i16>,
}

impl Volume {
    pub fn new(id: impl Into<String>, dims: [usize; 3], spacing: [f32; 3], voxels: Vec<i16>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(CtError::data(format!("volume dims {dims:?} must all be positive")));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(CtError::data(format!("volume spacing {spacing:?} must be positive")));
        }
        if voxels.len() != dims.iter().product::<usize>() {
            return Err(CtError::data(format!("{} voxels for dims {dims:?}", voxels.len())));
        }
        Ok(Self { id: id.into(), dims, spacing, voxels })
    }

    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[2] + x
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> i16 {
        self.voxels[self.index(z, y, x)]
    }

    pub fn contains(&self, zyx: [usize; 3]) -> bool {
        zyx.iter().zip(&self.dims).all(|(c, d)| c < d)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(30 + 2 * self.voxels.len());
        out.extend_from_slice(&SWV1_MAGIC);
        out.push(DTYPE_I16);
        out.push(3);
        for d in self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for s in self.spacing {
            out.extend_from_slice(&s.to_le_bytes());
        }
        for v in &self.voxels {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses SWV1 bytes. Errors carry the byte offset of the problem.
    pub fn decode(id: impl Into<String>, bytes: &[u8]) -> std::result::Result<Self, FormatError> {
        let mut r = ByteReader::new(bytes);
        let magic = r.take(4).map_err(|_| FormatError::BadMagic {
            found: bytes.iter().take(4).copied().collect(),
            expected: SWV1_MAGIC,
        })?;
        if magic != SWV1_MAGIC {
            return Err(FormatError::BadMagic { found: magic.to_vec(), expected: SWV1_MAGIC });
        }
        let offset = r.offset();
        let code = r.u8()?;
        if code != DTYPE_I16 {
            return Err(FormatError::UnknownDType { code, offset });
        }
        let offset = r.offset();
        let rank = r.u8()?;
        if rank != 3 {
            return Err(FormatError::Unsupported { field: "rank", value: rank as u64, offset });
        }
        let dims_at = r.offset();
        let (dims, count) = read_dims(&mut r, 3)?;
        if let Some(i) = dims.iter().position(|&d| d == 0) {
            return Err(FormatError::Unsupported { field: "dimension", value: 0, offset: dims_at + 4 * i });
        }
        let mut spacing = [0f32; 3];
        for s in &mut spacing {
            let offset = r.offset();
            *s = r.f32()?;
            if !(*s > 0.0 && s.is_finite()) {
                return Err(FormatError::Unsupported { field: "spacing", value: s.to_bits() as u64, offset });
            }
        }
        let TensorData::I16(voxels) = read_payload(&mut r, DType::I16, count)? else {
            unreachable!("payload decoded as int16")
        };
        r.finish()?;
        Ok(Self { id: id.into(), dims: [dims[0], dims[1], dims[2]], spacing, voxels })
    }
}

/// Reads a volume; its id is the file stem.
pub fn load_volume(path: &Path) -> Result<Volume> {
    let bytes = fs::read(path).map_err(|e| CtError::io(path, e))?;
    let id = volume_id_of(path);
    Volume::decode(id, &bytes).map_err(|e| CtError::format(path, e))
}

pub fn write_volume(path: &Path, volume: &Volume) -> Result<()> {
    write_atomic(path, &volume.encode()).map_err(|e| CtError::io(path, e))
}

fn volume_id_of(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.strip_suffix(".swv").map(str::to_owned).unwrap_or(name)
}

/// One annotated nodule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoduleAnnotation {
    pub volume_id: String,
    /// Voxel indices `(z, y, x)`.
    pub center_zyx: [usize; 3],
    pub diameter_mm: Option<f64>,
}

/// Parses one annotation per non-blank line.
pub fn read_annotations(path: &Path) -> Result<Vec<NoduleAnnotation>> {
    let file = fs::File::open(path).map_err(|e| CtError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CtError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ann = serde_json::from_str(&line)
            .map_err(|e| CtError::data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(ann);
    }
    Ok(out)
}

pub fn write_annotations(path: &Path, annotations: &[NoduleAnnotation]) -> Result<()> {
    let mut text = String::new();
    for a in annotations {
        text.push_str(&serde_json::to_string(a).expect("annotation serializes"));
        text.push('\n');
    }
    write_atomic(path, text.as_bytes()).map_err(|e| CtError::io(path, e))
}

/// Errors if an annotation names an unknown volume or lies outside it.
pub fn check_annotations(volumes: &[Volume], annotations: &[NoduleAnnotation]) -> Result<()> {
    for a in annotations {
        let v = volumes
            .iter()
            .find(|v| v.id == a.volume_id)
            .ok_or_else(|| CtError::data(format!("annotation refers to unknown volume `{}`", a.volume_id)))?;
        if !v.contains(a.center_zyx) {
            return Err(CtError::data(format!(
                "nodule center {:?} lies outside volume `{}` of dims {:?}",
                a.center_zyx, v.id, v.dims
            )));
        }
    }
    Ok(())
}
