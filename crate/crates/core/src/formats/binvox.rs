//! binvox occupancy grids.
//!
//! ASCII header (`#binvox 1`, `dim`, `translate`, `scale`, `data`) followed by
//! `(value, count)` byte pairs. Voxel `(x, y, z)` of a `dim a b c` file sits at
//! run position `x·(b·c) + z·b + y`, i.e. y varies fastest.

use super::Reader;
use crate::error::{Error, Result};
use crate::grid::{Dims3, Grid3, SegMask, VoxelData, VoxelGrid};

const NAME: &str = "binvox";

#[derive(Clone, Debug, PartialEq)]
pub struct Binvox {
    /// Single-channel u8 grid holding the decoded values.
    pub grid: VoxelGrid,
    pub translate: [f64; 3],
    pub scale: f64,
}

impl Binvox {
    pub fn from_mask(mask: &SegMask) -> Self {
        Binvox {
            grid: VoxelGrid::from_mask(mask),
            translate: [0.0; 3],
            scale: 1.0,
        }
    }

    pub fn occupancy(&self) -> SegMask {
        self.grid.occupancy()
    }
}

/// Run position of every voxel in grid order.
fn run_positions(dims: Dims3) -> impl Iterator<Item = usize> {
    let [a, b, c] = dims;
    (0..a).flat_map(move |x| (0..b).flat_map(move |y| (0..c).map(move |z| x * b * c + z * b + y)))
}

fn parse_numbers<T: std::str::FromStr, const N: usize>(rest: &str, what: &str) -> Result<[T; N]> {
    let parts: Vec<&str> = rest.split_whitespace().collect();
    if parts.len() != N {
        return Err(Error::format(NAME, format!("{what} needs {N} values")));
    }
    let mut out = Vec::with_capacity(N);
    for p in parts {
        out.push(
            p.parse::<T>()
                .map_err(|_| Error::format(NAME, format!("bad {what} value {p:?}")))?,
        );
    }
    Ok(out.try_into().ok().expect("length checked"))
}

pub fn read_binvox(bytes: &[u8]) -> Result<Binvox> {
    let mut r = Reader::new(bytes, NAME);
    let magic = r.line()?;
    if magic.trim_end() != "#binvox 1" {
        return Err(Error::format(NAME, format!("bad magic line {magic:?}")));
    }
    let mut dims: Option<Dims3> = None;
    let mut translate = [0.0; 3];
    let mut scale = 1.0;
    loop {
        let line = r.line()?;
        let (key, rest) = line.trim().split_once(' ').unwrap_or((line.trim(), ""));
        match key {
            "dim" => dims = Some(parse_numbers::<usize, 3>(rest, "dim")?),
            "translate" => translate = parse_numbers::<f64, 3>(rest, "translate")?,
            "scale" => scale = parse_numbers::<f64, 1>(rest, "scale")?[0],
            "data" => break,
            "" => {}
            other => return Err(Error::format(NAME, format!("unknown header key {other:?}"))),
        }
    }
    let dims = dims.ok_or_else(|| Error::format(NAME, "missing dim line"))?;
    if dims.contains(&0) {
        return Err(Error::format(NAME, "dim has a zero axis"));
    }
    let total = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format(NAME, "dims overflow"))?;

    let runs = r.remaining();
    if !runs.len().is_multiple_of(2) {
        return Err(Error::format(NAME, "odd number of run-length bytes"));
    }
    let mut decoded = Vec::with_capacity(total);
    for pair in runs.chunks_exact(2) {
        let (value, count) = (pair[0], usize::from(pair[1]));
        if decoded.len() + count > total {
            return Err(Error::format(
                NAME,
                format!("run-length data overruns {total} voxels"),
            ));
        }
        decoded.extend(std::iter::repeat_n(value, count));
    }
    if decoded.len() != total {
        return Err(Error::format(
            NAME,
            format!("run-length data covers {} of {total} voxels", decoded.len()),
        ));
    }
    let data: Vec<u8> = run_positions(dims).map(|i| decoded[i]).collect();
    Ok(Binvox {
        grid: VoxelGrid::new(dims, 1, VoxelData::U8(data))?,
        translate,
        scale,
    })
}

pub fn write_binvox(b: &Binvox) -> Result<Vec<u8>> {
    let VoxelData::U8(values) = b.grid.data() else {
        return Err(Error::Validation("binvox stores u8 volumes only".into()));
    };
    if b.grid.channels() != 1 {
        return Err(Error::Validation("binvox stores single-channel volumes only".into()));
    }
    let dims = b.grid.dims();
    let [tx, ty, tz] = b.translate;
    let mut out = format!(
        "#binvox 1\ndim {} {} {}\ntranslate {tx} {ty} {tz}\nscale {}\ndata\n",
        dims[0], dims[1], dims[2], b.scale
    )
    .into_bytes();

    let positions = Grid3::new(dims, run_positions(dims).collect())?;
    let mut in_file_order = vec![0u8; values.len()];
    for (&pos, &v) in positions.data().iter().zip(values) {
        in_file_order[pos] = v;
    }
    let mut iter = in_file_order.into_iter().peekable();
    while let Some(v) = iter.next() {
        let mut count = 1u8;
        while count < u8::MAX && iter.peek() == Some(&v) {
            iter.next();
            count += 1;
        }
        out.extend_from_slice(&[v, count]);
    }
    Ok(out)
}
