//! Single-file NIfTI-1 (`n+1`) subset: u8, i16 and f32 data, either byte
//! order, optional gzip envelope.
//!
//! NIfTI stores x fastest; volumes are transposed into the grid layout (last
//! axis fastest, channels innermost) and converted to f32 with the header's
//! `scl_slope`/`scl_inter` applied when the slope is nonzero.

use std::io::{Read, Write};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::Reader;
use crate::error::{Error, Result};
use crate::grid::{VoxelData, VoxelGrid};

const NAME: &str = "NIfTI";
const HEADER_SIZE: usize = 348;
const MIN_VOX_OFFSET: usize = 352;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NiftiDataType {
    U8,
    I16,
    F32,
}

impl NiftiDataType {
    pub fn code(self) -> i16 {
        match self {
            NiftiDataType::U8 => 2,
            NiftiDataType::I16 => 4,
            NiftiDataType::F32 => 16,
        }
    }

    fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(NiftiDataType::U8),
            4 => Ok(NiftiDataType::I16),
            16 => Ok(NiftiDataType::F32),
            c => Err(Error::format(NAME, format!("unsupported datatype {c}"))),
        }
    }

    fn size(self) -> usize {
        match self {
            NiftiDataType::U8 => 1,
            NiftiDataType::I16 => 2,
            NiftiDataType::F32 => 4,
        }
    }
}

struct Endian(bool);

impl Endian {
    fn i16(&self, b: &[u8]) -> i16 {
        let a = [b[0], b[1]];
        if self.0 {
            i16::from_be_bytes(a)
        } else {
            i16::from_le_bytes(a)
        }
    }

    fn f32(&self, b: &[u8]) -> f32 {
        let a = [b[0], b[1], b[2], b[3]];
        if self.0 {
            f32::from_be_bytes(a)
        } else {
            f32::from_le_bytes(a)
        }
    }
}

fn gunzip(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    GzDecoder::new(bytes)
        .read_to_end(&mut out)
        .map_err(|e| Error::format(NAME, format!("gzip: {e}")))?;
    Ok(out)
}

/// Decodes a NIfTI-1 volume. With `gzipped`, the bytes are first inflated.
pub fn read_nifti(bytes: &[u8], gzipped: bool) -> Result<VoxelGrid> {
    let inflated;
    let bytes = if gzipped {
        inflated = gunzip(bytes)?;
        &inflated[..]
    } else {
        bytes
    };
    let mut r = Reader::new(bytes, NAME);
    let header = r.take(HEADER_SIZE)?;
    let e = match (
        i32::from_le_bytes(header[0..4].try_into().expect("4 bytes")),
        i32::from_be_bytes(header[0..4].try_into().expect("4 bytes")),
    ) {
        (348, _) => Endian(false),
        (_, 348) => Endian(true),
        _ => return Err(Error::format(NAME, "sizeof_hdr is not 348")),
    };
    if &header[344..348] != b"n+1\0" {
        return Err(Error::format(NAME, "bad magic, expected single-file n+1"));
    }
    let dim: Vec<i16> = (0..8).map(|i| e.i16(&header[40 + 2 * i..])).collect();
    let ndim = dim[0];
    if !(1..=7).contains(&ndim) {
        return Err(Error::format(NAME, format!("dim[0] = {ndim} out of range")));
    }
    let mut shape = [1usize; 7];
    for i in 0..ndim as usize {
        let d = dim[i + 1];
        if d < 1 {
            return Err(Error::format(NAME, format!("dim[{}] = {d} is not positive", i + 1)));
        }
        shape[i] = d as usize;
    }
    if shape[4..].iter().any(|&d| d != 1) {
        return Err(Error::format(NAME, "only 3D and 4D volumes are supported"));
    }
    let dtype = NiftiDataType::from_code(e.i16(&header[70..]))?;
    let vox_offset = e.f32(&header[108..]);
    if !(vox_offset.is_finite() && vox_offset >= MIN_VOX_OFFSET as f32) {
        return Err(Error::format(NAME, format!("vox_offset {vox_offset} below 352")));
    }
    let slope = e.f32(&header[112..]);
    let inter = e.f32(&header[116..]);

    let [nx, ny, nz, nc] = [shape[0], shape[1], shape[2], shape[3]];
    let count = nx * ny * nz * nc;
    let _skip = r.take(vox_offset as usize - HEADER_SIZE)?;
    let payload = r.take(count * dtype.size())?;

    let raw = |i: usize| -> f32 {
        let b = &payload[i * dtype.size()..];
        match dtype {
            NiftiDataType::U8 => f32::from(b[0]),
            NiftiDataType::I16 => f32::from(e.i16(b)),
            NiftiDataType::F32 => e.f32(b),
        }
    };
    let scaled = slope != 0.0 && slope.is_finite() && !(slope == 1.0 && inter == 0.0);
    let mut data = Vec::with_capacity(count);
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                for c in 0..nc {
                    let v = raw(x + nx * (y + ny * (z + nz * c)));
                    data.push(if scaled { v * slope + inter } else { v });
                }
            }
        }
    }
    VoxelGrid::new([nx, ny, nz], nc, VoxelData::F32(data))
}

/// Encodes `grid` as NIfTI-1 with the given element type and byte order.
/// Values are cast without scaling, so integer types must already hold
/// representable values.
pub fn write_nifti(grid: &VoxelGrid, dtype: NiftiDataType, big_endian: bool, gzip: bool) -> Result<Vec<u8>> {
    let [nx, ny, nz] = grid.dims();
    let nc = grid.channels();
    let fits_i16 = |d: usize| i16::try_from(d).is_ok();
    if ![nx, ny, nz, nc].into_iter().all(fits_i16) {
        return Err(Error::Validation("volume too large for a NIfTI-1 header".into()));
    }
    let put_i16 = |out: &mut Vec<u8>, v: i16| {
        out.extend_from_slice(&if big_endian { v.to_be_bytes() } else { v.to_le_bytes() })
    };
    let put_i32 = |out: &mut Vec<u8>, v: i32| {
        out.extend_from_slice(&if big_endian { v.to_be_bytes() } else { v.to_le_bytes() })
    };
    let put_f32 = |out: &mut Vec<u8>, v: f32| {
        out.extend_from_slice(&if big_endian { v.to_be_bytes() } else { v.to_le_bytes() })
    };

    let mut h = Vec::with_capacity(MIN_VOX_OFFSET);
    put_i32(&mut h, HEADER_SIZE as i32);
    h.resize(40, 0);
    let ndim = if nc == 1 { 3 } else { 4 };
    for d in [ndim, nx, ny, nz, nc, 1, 1, 1] {
        put_i16(&mut h, d as i16);
    }
    h.resize(70, 0);
    put_i16(&mut h, dtype.code());
    put_i16(&mut h, (dtype.size() * 8) as i16);
    h.resize(76, 0);
    for _ in 0..8 {
        put_f32(&mut h, 1.0); // pixdim
    }
    put_f32(&mut h, MIN_VOX_OFFSET as f32);
    put_f32(&mut h, 0.0); // scl_slope
    put_f32(&mut h, 0.0); // scl_inter
    h.resize(344, 0);
    h.extend_from_slice(b"n+1\0");
    h.resize(MIN_VOX_OFFSET, 0);

    let data = grid.data();
    for c in 0..nc {
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let v = data.value(((x * ny + y) * nz + z) * nc + c);
                    match dtype {
                        NiftiDataType::U8 => h.push(v as u8),
                        NiftiDataType::I16 => put_i16(&mut h, v as i16),
                        NiftiDataType::F32 => put_f32(&mut h, v),
                    }
                }
            }
        }
    }
    if !gzip {
        return Ok(h);
    }
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    enc.write_all(&h).and_then(|_| enc.finish()).map_err(|e| Error::format(NAME, format!("gzip: {e}")))
}
