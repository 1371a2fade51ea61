//! The SWT1 tensor file format.
//!
//! Layout (all integers little-endian):
//!
//! | bytes        | content                                          |
//! |--------------|--------------------------------------------------|
//! | 4            | magic `53 57 54 31` (`"SWT1"`)                   |
//! | 1            | dtype: 0 = f32, 1 = f64, 2 = i16, 3 = u8         |
//! | 1            | rank                                             |
//! | 4 × rank     | u32 dimensions                                   |
//! | rest         | row-major payload                                |

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::tensor::Tensor;

pub const SWT1_MAGIC: [u8; 4] = *b"SWT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    F32,
    F64,
    I16,
    U8,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
            DType::I16 => 2,
            DType::U8 => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => DType::F32,
            1 => DType::F64,
            2 => DType::I16,
            3 => DType::U8,
            _ => return None,
        })
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
            DType::I16 => 2,
            DType::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I16(Vec<i16>),
    U8(Vec<u8>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
            TensorData::I16(_) => DType::I16,
            TensorData::U8(_) => DType::U8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::I16(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
            TensorData::I16(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::U8(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }
}

/// A typed tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub shape: Vec<usize>,
    pub data: TensorData,
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {found:02x?} at byte 0, expected {expected:02x?}")]
    BadMagic { found: Vec<u8>, expected: [u8; 4] },
    #[error("unknown dtype code {code} at byte {offset}")]
    UnknownDType { code: u8, offset: usize },
    #[error("unsupported value {value} for {field} at byte {offset}")]
    Unsupported {
        field: &'static str,
        value: u64,
        offset: usize,
    },
    #[error("truncated input: needed {needed} bytes at byte {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("dimension product overflows at byte {offset}")]
    DimOverflow { offset: usize },
    #[error("{trailing} unexpected trailing bytes at byte {offset}")]
    TrailingBytes { offset: usize, trailing: usize },
    #[error("shape {shape:?} does not match {len} payload elements")]
    LengthMismatch { shape: Vec<usize>, len: usize },
}

/// Cursor over a byte buffer that reports offsets in its errors.
pub struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(FormatError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    /// Errors unless every byte has been consumed.
    pub fn finish(&self) -> Result<(), FormatError> {
        let trailing = self.bytes.len() - self.pos;
        if trailing > 0 {
            return Err(FormatError::TrailingBytes {
                offset: self.pos,
                trailing,
            });
        }
        Ok(())
    }
}

/// Reads `rank` u32 dimensions and returns them with their checked product.
pub fn read_dims(r: &mut ByteReader<'_>, rank: usize) -> Result<(Vec<usize>, usize), FormatError> {
    let start = r.offset();
    let mut dims = Vec::with_capacity(rank);
    let mut count: usize = 1;
    for _ in 0..rank {
        let d = r.u32()? as usize;
        count = count
            .checked_mul(d)
            .ok_or(FormatError::DimOverflow { offset: start })?;
        dims.push(d);
    }
    Ok((dims, count))
}

/// Decodes `count` little-endian values of `dtype` from the reader.
pub fn read_payload(r: &mut ByteReader<'_>, dtype: DType, count: usize) -> Result<TensorData, FormatError> {
    let offset = r.offset();
    let nbytes = count
        .checked_mul(dtype.size())
        .ok_or(FormatError::DimOverflow { offset })?;
    let raw = r.take(nbytes)?;
    Ok(match dtype {
        DType::F32 => TensorData::F32(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
        DType::F64 => TensorData::F64(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
        DType::I16 => TensorData::I16(raw.chunks_exact(2).map(|c| i16::from_le_bytes(c.try_into().unwrap())).collect()),
        DType::U8 => TensorData::U8(raw.to_vec()),
    })
}

pub fn write_payload(out: &mut Vec<u8>, data: &TensorData) {
    match data {
        TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        TensorData::I16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        TensorData::U8(v) => out.extend_from_slice(v),
    }
}

impl RawTensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self, FormatError> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(FormatError::LengthMismatch { shape, len: data.len() });
        }
        Ok(Self { shape, data })
    }

    /// Converts a tensor's values to `dtype` (rounding and saturating for integers).
    pub fn from_tensor(t: &Tensor, dtype: DType) -> Self {
        let v = t.data();
        let data = match dtype {
            DType::F32 => TensorData::F32(v.iter().map(|&x| x as f32).collect()),
            DType::F64 => TensorData::F64(v.to_vec()),
            DType::I16 => TensorData::I16(v.iter().map(|&x| x.round() as i16).collect()),
            DType::U8 => TensorData::U8(v.iter().map(|&x| x.round() as u8).collect()),
        };
        Self {
            shape: t.shape().to_vec(),
            data,
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(&self.shape, self.data.to_f64()).expect("RawTensor shape invariant")
    }

    pub fn encode(&self) -> Result<Vec<u8>, FormatError> {
        let rank = u8::try_from(self.shape.len()).map_err(|_| FormatError::Unsupported {
            field: "rank",
            value: self.shape.len() as u64,
            offset: 5,
        })?;
        let mut out = Vec::with_capacity(6 + 4 * self.shape.len() + self.data.len() * self.data.dtype().size());
        out.extend_from_slice(&SWT1_MAGIC);
        out.push(self.data.dtype().code());
        out.push(rank);
        for (i, &d) in self.shape.iter().enumerate() {
            let d = u32::try_from(d).map_err(|_| FormatError::Unsupported {
                field: "dimension",
                value: d as u64,
                offset: 6 + 4 * i,
            })?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        write_payload(&mut out, &self.data);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = ByteReader::new(bytes);
        let magic = r.take(4).map_err(|_| FormatError::BadMagic {
            found: bytes.iter().take(4).copied().collect(),
            expected: SWT1_MAGIC,
        })?;
        if magic != SWT1_MAGIC {
            return Err(FormatError::BadMagic {
                found: magic.to_vec(),
                expected: SWT1_MAGIC,
            });
        }
        let offset = r.offset();
        let code = r.u8()?;
        let dtype = DType::from_code(code).ok_or(FormatError::UnknownDType { code, offset })?;
        let rank = r.u8()? as usize;
        let (shape, count) = read_dims(&mut r, rank)?;
        let data = read_payload(&mut r, dtype, count)?;
        r.finish()?;
        Ok(Self { shape, data })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, FormatError> {
        Self::decode(&fs::read(path)?)
    }

    /// Writes via a temporary file and rename, so readers never observe a
    /// partial file.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), FormatError> {
        write_atomic(path.as_ref(), &self.encode()?)?;
        Ok(())
    }
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
