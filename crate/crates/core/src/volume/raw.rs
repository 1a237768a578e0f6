use std::path::Path;

use super::{DType, ScalarVolume, Volume, VolumeMeta};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Endianness {
    #[default]
    Little,
    Big,
}

impl std::str::FromStr for Endianness {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "little" | "le" => Ok(Endianness::Little),
            "big" | "be" => Ok(Endianness::Big),
            other => Err(Error::Argument(format!("unknown byte order {other:?}"))),
        }
    }
}

/// Reads a headerless x-fastest raw dump described by `meta`.
pub fn import_raw(path: &Path, meta: VolumeMeta, endianness: Endianness) -> Result<ScalarVolume> {
    meta.validate()?;
    if meta.dtype == DType::U32 {
        return Err(Error::Argument("raw intensity import supports u8, u16 and f32".into()));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = meta.num_voxels() * meta.dtype.width();
    if bytes.len() != expected {
        return Err(Error::Malformed(format!(
            "{}: expected {expected} bytes for shape {:?} as {}, found {}",
            path.display(),
            meta.shape,
            meta.dtype,
            bytes.len()
        )));
    }
    let values = decode_scalar(&bytes, meta.dtype, endianness);
    Volume::new(meta, values)
}

pub(crate) fn decode_scalar(bytes: &[u8], dtype: DType, endianness: Endianness) -> Vec<f32> {
    let big = endianness == Endianness::Big;
    match dtype {
        DType::U8 => bytes.iter().map(|&b| f32::from(b)).collect(),
        DType::U16 => bytes
            .chunks_exact(2)
            .map(|c| {
                let b = [c[0], c[1]];
                f32::from(if big { u16::from_be_bytes(b) } else { u16::from_le_bytes(b) })
            })
            .collect(),
        DType::U32 => bytes
            .chunks_exact(4)
            .map(|c| {
                let b = [c[0], c[1], c[2], c[3]];
                (if big { u32::from_be_bytes(b) } else { u32::from_le_bytes(b) }) as f32
            })
            .collect(),
        DType::F32 => bytes
            .chunks_exact(4)
            .map(|c| {
                let b = [c[0], c[1], c[2], c[3]];
                if big {
                    f32::from_be_bytes(b)
                } else {
                    f32::from_le_bytes(b)
                }
            })
            .collect(),
    }
}
