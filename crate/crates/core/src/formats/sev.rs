//! Dense volume interchange format.
//!
//! ```text
//! "SEV1" | dtype: u8 (0 = u8, 1 = f32) | ndim: u8 (3 or 4) | dims: u32 LE × ndim | payload
//! ```
//!
//! The payload is row-major with the last axis fastest, so a 4D file is
//! `W×H×D×C` with channels interleaved innermost. f32 values are little-endian.

use super::Reader;
use crate::error::{Error, Result};
use crate::grid::{DType, VoxelData, VoxelGrid};

pub const MAGIC: &[u8; 4] = b"SEV1";
const NAME: &str = "SEV";

/// A decoded file. `ndim` is kept so that files written with an explicit
/// single channel re-encode byte for byte.
#[derive(Clone, Debug, PartialEq)]
pub struct SevVolume {
    pub grid: VoxelGrid,
    pub ndim: u8,
}

impl SevVolume {
    pub fn to_bytes(&self) -> Vec<u8> {
        encode(&self.grid, self.ndim)
    }
}

fn dtype_code(d: DType) -> u8 {
    match d {
        DType::U8 => 0,
        DType::F32 => 1,
    }
}

pub fn header_len(ndim: u8) -> usize {
    4 + 1 + 1 + 4 * usize::from(ndim)
}

fn encode(grid: &VoxelGrid, ndim: u8) -> Vec<u8> {
    let payload = grid.data().len() * grid.dtype().size();
    let mut out = Vec::with_capacity(header_len(ndim) + payload);
    out.extend_from_slice(MAGIC);
    out.push(dtype_code(grid.dtype()));
    out.push(ndim);
    for d in grid.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    if ndim == 4 {
        out.extend_from_slice(&(grid.channels() as u32).to_le_bytes());
    }
    match grid.data() {
        VoxelData::U8(v) => out.extend_from_slice(v),
        VoxelData::F32(v) => {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    out
}

/// Encodes `grid`, writing a 3D header when it has a single channel.
pub fn write_sev(grid: &VoxelGrid) -> Vec<u8> {
    encode(grid, if grid.channels() == 1 { 3 } else { 4 })
}

pub fn read_sev(bytes: &[u8]) -> Result<SevVolume> {
    let mut r = Reader::new(bytes, NAME);
    if r.take(4)? != MAGIC {
        return Err(Error::format(NAME, "bad magic, expected SEV1"));
    }
    let dtype = match r.u8()? {
        0 => DType::U8,
        1 => DType::F32,
        c => return Err(Error::format(NAME, format!("unknown dtype code {c}"))),
    };
    let ndim = r.u8()?;
    if ndim != 3 && ndim != 4 {
        return Err(Error::format(NAME, format!("ndim {ndim} is not 3 or 4")));
    }
    let mut shape = [1usize; 4];
    for d in shape.iter_mut().take(usize::from(ndim)) {
        *d = u32::from_le_bytes(r.array()?) as usize;
        if *d == 0 {
            return Err(Error::format(NAME, "zero-length axis"));
        }
    }
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format(NAME, "dims overflow"))?;
    let expected = count
        .checked_mul(dtype.size())
        .ok_or_else(|| Error::format(NAME, "dims overflow"))?;
    let payload = r.remaining();
    if payload.len() != expected {
        return Err(Error::format(
            NAME,
            format!("payload is {} bytes, dims need {expected}", payload.len()),
        ));
    }
    let data = match dtype {
        DType::U8 => VoxelData::U8(payload.to_vec()),
        DType::F32 => VoxelData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
                .collect(),
        ),
    };
    let grid = VoxelGrid::new([shape[0], shape[1], shape[2]], shape[3], data)?;
    Ok(SevVolume { grid, ndim })
}
