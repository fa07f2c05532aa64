//! Dense voxel containers and the primitives every metric is built from.
//!
//! All grids are stored row-major with the last axis fastest: the voxel at
//! `(x, y, z)` of a `W×H×D` grid lives at `(x·H + y)·D + z`. Multi-channel
//! volumes interleave channels innermost.

mod bbox;
mod thresholds;

pub use bbox::{iou, Aabb, BBox2, BBox3};
pub use thresholds::{GridMode, IouThresholdSet, ThresholdGrid};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Dims3 = [usize; 3];

pub(crate) fn check_dims(dims: Dims3) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::Validation(format!(
            "grid dimensions must be positive, got {dims:?}"
        )));
    }
    Ok(())
}

pub(crate) fn check_axis(axis: usize) -> Result<()> {
    if axis > 2 {
        return Err(Error::Validation(format!("axis {axis} is not one of 0, 1, 2")));
    }
    Ok(())
}

/// Generic dense 3D array.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid3<T> {
    dims: Dims3,
    data: Vec<T>,
}

impl<T: Copy> Grid3<T> {
    pub fn new(dims: Dims3, data: Vec<T>) -> Result<Self> {
        check_dims(dims)?;
        let expected = dims.iter().product::<usize>();
        if data.len() != expected {
            return Err(Error::Validation(format!(
                "grid {dims:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Grid3 { dims, data })
    }

    pub fn filled(dims: Dims3, value: T) -> Result<Self> {
        check_dims(dims)?;
        Ok(Grid3 {
            dims,
            data: vec![value; dims.iter().product()],
        })
    }

    pub fn from_fn(dims: Dims3, mut f: impl FnMut(Dims3) -> T) -> Result<Self> {
        check_dims(dims)?;
        let mut data = Vec::with_capacity(dims.iter().product());
        for x in 0..dims[0] {
            for y in 0..dims[1] {
                for z in 0..dims[2] {
                    data.push(f([x, y, z]));
                }
            }
        }
        Ok(Grid3 { dims, data })
    }

    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index_of(&self, p: Dims3) -> usize {
        (p[0] * self.dims[1] + p[1]) * self.dims[2] + p[2]
    }

    #[inline]
    pub fn coords_of(&self, index: usize) -> Dims3 {
        let z = index % self.dims[2];
        let rest = index / self.dims[2];
        [rest / self.dims[1], rest % self.dims[1], z]
    }

    #[inline]
    pub fn get(&self, p: Dims3) -> T {
        self.data[self.index_of(p)]
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(&T) -> U) -> Grid3<U> {
        Grid3 {
            dims: self.dims,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Extracts the plane at `index` along `axis`. The plane keeps the two
    /// remaining axes in their original order.
    pub fn slice(&self, axis: usize, index: usize) -> Result<Plane<T>> {
        check_axis(axis)?;
        if index >= self.dims[axis] {
            return Err(Error::Validation(format!(
                "slice index {index} out of range for axis {axis} of length {}",
                self.dims[axis]
            )));
        }
        let (a, b) = plane_axes(axis);
        let pdims = [self.dims[a], self.dims[b]];
        let mut data = Vec::with_capacity(pdims[0] * pdims[1]);
        let mut p = [0usize; 3];
        p[axis] = index;
        for i in 0..pdims[0] {
            for j in 0..pdims[1] {
                p[a] = i;
                p[b] = j;
                data.push(self.get(p));
            }
        }
        Ok(Plane { dims: pdims, data })
    }

    /// Inverse of slicing every index along `axis`.
    pub fn stack(planes: &[Plane<T>], axis: usize) -> Result<Self> {
        check_axis(axis)?;
        let first = planes
            .first()
            .ok_or_else(|| Error::Empty("no planes to stack".into()))?;
        if planes.iter().any(|p| p.dims != first.dims) {
            return Err(Error::Validation("planes differ in shape".into()));
        }
        let (a, b) = plane_axes(axis);
        let mut dims = [0usize; 3];
        dims[axis] = planes.len();
        dims[a] = first.dims[0];
        dims[b] = first.dims[1];
        Grid3::from_fn(dims, |p| planes[p[axis]].get(p[a], p[b]))
    }

    /// Joins `self` and `other` along `axis`; `self` comes first.
    pub fn concat(&self, other: &Self, axis: usize) -> Result<Self> {
        check_axis(axis)?;
        for ax in 0..3 {
            if ax != axis && self.dims[ax] != other.dims[ax] {
                return Err(Error::DimensionMismatch {
                    expected: self.dims.to_vec(),
                    found: other.dims.to_vec(),
                });
            }
        }
        let mut dims = self.dims;
        dims[axis] += other.dims[axis];
        let split = self.dims[axis];
        Grid3::from_fn(dims, |mut p| {
            if p[axis] < split {
                self.get(p)
            } else {
                p[axis] -= split;
                other.get(p)
            }
        })
    }

    /// Copies the half-open range `start..end` along `axis`.
    pub fn sub_range(&self, axis: usize, start: usize, end: usize) -> Result<Self> {
        check_axis(axis)?;
        if start >= end || end > self.dims[axis] {
            return Err(Error::Validation(format!(
                "range {start}..{end} invalid for axis {axis} of length {}",
                self.dims[axis]
            )));
        }
        let mut dims = self.dims;
        dims[axis] = end - start;
        Grid3::from_fn(dims, |mut p| {
            p[axis] += start;
            self.get(p)
        })
    }

    pub fn swap_axes(&self, a: usize, b: usize) -> Result<Self> {
        check_axis(a)?;
        check_axis(b)?;
        let mut dims = self.dims;
        dims.swap(a, b);
        Grid3::from_fn(dims, |mut p| {
            p.swap(a, b);
            self.get(p)
        })
    }

    pub fn flip(&self, axis: usize) -> Result<Self> {
        check_axis(axis)?;
        let n = self.dims[axis];
        Grid3::from_fn(self.dims, |mut p| {
            p[axis] = n - 1 - p[axis];
            self.get(p)
        })
    }
}

fn plane_axes(axis: usize) -> (usize, usize) {
    match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

/// A 2D slice of a grid, row-major with the second axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane<T> {
    dims: [usize; 2],
    data: Vec<T>,
}

impl<T: Copy> Plane<T> {
    pub fn new(dims: [usize; 2], data: Vec<T>) -> Result<Self> {
        if dims[0] == 0 || dims[1] == 0 || data.len() != dims[0] * dims[1] {
            return Err(Error::Validation(format!(
                "plane {dims:?} cannot hold {} values",
                data.len()
            )));
        }
        Ok(Plane { dims, data })
    }

    pub fn dims(&self) -> [usize; 2] {
        self.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.dims[1] + j]
    }

    /// Views the plane as a `W×H×1` grid so 3D routines apply unchanged.
    pub fn into_grid(self) -> Grid3<T> {
        Grid3 {
            dims: [self.dims[0], self.dims[1], 1],
            data: self.data,
        }
    }
}

/// Binary ground-truth segmentation.
#[derive(Clone, Debug, PartialEq)]
pub struct SegMask(Grid3<u8>);

impl SegMask {
    pub fn new(dims: Dims3, data: Vec<u8>) -> Result<Self> {
        Self::from_grid(Grid3::new(dims, data)?)
    }

    pub fn from_grid(grid: Grid3<u8>) -> Result<Self> {
        if let Some(v) = grid.data().iter().find(|&&v| v > 1) {
            return Err(Error::Validation(format!(
                "segmentation masks are binary, found value {v}"
            )));
        }
        Ok(SegMask(grid))
    }

    /// Marks every voxel for which `pred` holds.
    pub fn from_predicate<T: Copy>(grid: &Grid3<T>, mut pred: impl FnMut(T) -> bool) -> Self {
        SegMask(grid.map(|&v| u8::from(pred(v))))
    }

    pub fn zeros(dims: Dims3) -> Result<Self> {
        Ok(SegMask(Grid3::filled(dims, 0)?))
    }

    pub fn dims(&self) -> Dims3 {
        self.0.dims()
    }

    pub fn grid(&self) -> &Grid3<u8> {
        &self.0
    }

    pub fn into_grid(self) -> Grid3<u8> {
        self.0
    }

    pub fn data(&self) -> &[u8] {
        self.0.data()
    }

    pub fn count(&self) -> usize {
        self.0.data().iter().filter(|&&v| v != 0).count()
    }

    /// True when no voxel is set.
    pub fn is_blank(&self) -> bool {
        self.0.data().iter().all(|&v| v == 0)
    }

    pub fn slice(&self, axis: usize, index: usize) -> Result<SegMask> {
        Ok(SegMask(self.0.slice(axis, index)?.into_grid()))
    }

    pub fn to_saliency(&self) -> SaliencyMap {
        SaliencyMap(self.0.map(|&v| f32::from(v)))
    }
}

/// Real-valued per-voxel heatmap. Construction accepts raw values; metric
/// code requires the map to be normalized to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap(Grid3<f32>);

impl SaliencyMap {
    pub fn new(dims: Dims3, data: Vec<f32>) -> Result<Self> {
        Ok(SaliencyMap(Grid3::new(dims, data)?))
    }

    pub fn from_grid(grid: Grid3<f32>) -> Self {
        SaliencyMap(grid)
    }

    pub fn dims(&self) -> Dims3 {
        self.0.dims()
    }

    pub fn grid(&self) -> &Grid3<f32> {
        &self.0
    }

    pub fn into_grid(self) -> Grid3<f32> {
        self.0
    }

    pub fn data(&self) -> &[f32] {
        self.0.data()
    }

    pub fn is_normalized(&self) -> bool {
        self.0.data().iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn ensure_normalized(&self) -> Result<()> {
        if let Some(v) = self.0.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!(
                "saliency map is not normalized: value {v} outside [0, 1]"
            )));
        }
        Ok(())
    }

    /// Per-volume min-max rescale to `[0, 1]`. Constant maps become all zeros.
    pub fn normalize(&self) -> Result<SaliencyMap> {
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for &v in self.0.data() {
            if !v.is_finite() {
                return Err(Error::Validation(format!(
                    "saliency map contains non-finite value {v}"
                )));
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo == hi {
            return Ok(SaliencyMap(self.0.map(|_| 0.0)));
        }
        if lo == 0.0 && hi == 1.0 {
            return Ok(self.clone());
        }
        let (lo, range) = (f64::from(lo), f64::from(hi) - f64::from(lo));
        Ok(SaliencyMap(self.0.map(|&v| {
            ((f64::from(v) - lo) / range).clamp(0.0, 1.0) as f32
        })))
    }

    pub fn slice(&self, axis: usize, index: usize) -> Result<SaliencyMap> {
        Ok(SaliencyMap(self.0.slice(axis, index)?.into_grid()))
    }

    pub fn total_mass(&self) -> f64 {
        self.0.data().iter().map(|&v| f64::from(v)).sum()
    }
}

/// `{s ≥ τ}` as a mask.
pub fn threshold(map: &SaliencyMap, tau: f64) -> Result<SegMask> {
    map.ensure_normalized()?;
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Validation(format!("threshold {tau} outside (0, 1]")));
    }
    Ok(SegMask::from_predicate(map.grid(), |v| f64::from(v) >= tau))
}

/// Tightest inclusive box around the set voxels, `None` for a blank mask.
pub fn bbox_of(mask: &SegMask) -> Option<BBox3> {
    let grid = mask.grid();
    let mut out: Option<BBox3> = None;
    for (i, _) in grid.data().iter().enumerate().filter(|(_, &v)| v != 0) {
        let p = grid.coords_of(i);
        match out.as_mut() {
            Some(b) => b.include(p),
            None => out = Some(BBox3::point(p)),
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    U8,
    F32,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::F32 => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum VoxelData {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

impl VoxelData {
    pub fn len(&self) -> usize {
        match self {
            VoxelData::U8(v) => v.len(),
            VoxelData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            VoxelData::U8(_) => DType::U8,
            VoxelData::F32(_) => DType::F32,
        }
    }

    #[inline]
    pub fn value(&self, i: usize) -> f32 {
        match self {
            VoxelData::U8(v) => f32::from(v[i]),
            VoxelData::F32(v) => v[i],
        }
    }

    fn gather(&self, indices: impl Iterator<Item = usize>) -> VoxelData {
        match self {
            VoxelData::U8(v) => VoxelData::U8(indices.map(|i| v[i]).collect()),
            VoxelData::F32(v) => VoxelData::F32(indices.map(|i| v[i]).collect()),
        }
    }
}

/// Dense `W×H×D×C` volume, the carrier for every input sample.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    dims: Dims3,
    channels: usize,
    data: VoxelData,
}

impl VoxelGrid {
    pub fn new(dims: Dims3, channels: usize, data: VoxelData) -> Result<Self> {
        check_dims(dims)?;
        if channels == 0 {
            return Err(Error::Validation("a volume needs at least one channel".into()));
        }
        let expected = dims.iter().product::<usize>() * channels;
        if data.len() != expected {
            return Err(Error::Validation(format!(
                "volume {dims:?}x{channels} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(VoxelGrid {
            dims,
            channels,
            data,
        })
    }

    pub fn from_mask(mask: &SegMask) -> Self {
        VoxelGrid {
            dims: mask.dims(),
            channels: 1,
            data: VoxelData::U8(mask.data().to_vec()),
        }
    }

    pub fn from_saliency(map: &SaliencyMap) -> Self {
        VoxelGrid {
            dims: map.dims(),
            channels: 1,
            data: VoxelData::F32(map.data().to_vec()),
        }
    }

    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &VoxelData {
        &self.data
    }

    pub fn into_data(self) -> VoxelData {
        self.data
    }

    pub fn voxel_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// One channel as an `f32` grid.
    pub fn channel(&self, c: usize) -> Result<Grid3<f32>> {
        if c >= self.channels {
            return Err(Error::Validation(format!(
                "channel {c} out of range for {} channels",
                self.channels
            )));
        }
        let n = self.voxel_count();
        let data = (0..n).map(|i| self.data.value(i * self.channels + c)).collect();
        Grid3::new(self.dims, data)
    }

    /// Voxels whose first channel is nonzero.
    pub fn occupancy(&self) -> SegMask {
        let n = self.voxel_count();
        let data = (0..n)
            .map(|i| u8::from(self.data.value(i * self.channels) != 0.0))
            .collect();
        SegMask(Grid3 {
            dims: self.dims,
            data,
        })
    }

    /// Reorders voxels (channels move together) so that output voxel `p`
    /// holds input voxel `source(p)`.
    pub(crate) fn remap(&self, dims: Dims3, source: impl Fn(Dims3) -> Dims3) -> Result<Self> {
        let index = Grid3::from_fn(dims, |p| {
            let q = source(p);
            (q[0] * self.dims[1] + q[1]) * self.dims[2] + q[2]
        })?;
        let c = self.channels;
        let data = self
            .data
            .gather(index.data().iter().flat_map(|&i| (0..c).map(move |k| i * c + k)));
        VoxelGrid::new(dims, c, data)
    }

    pub fn slice(&self, axis: usize, index: usize) -> Result<VoxelPlane> {
        check_axis(axis)?;
        if index >= self.dims[axis] {
            return Err(Error::Validation(format!(
                "slice index {index} out of range for axis {axis} of length {}",
                self.dims[axis]
            )));
        }
        let (a, b) = plane_axes(axis);
        let mut dims = self.dims;
        dims[axis] = 1;
        let plane = self.remap(dims, |mut p| {
            p[axis] = index;
            p
        })?;
        Ok(VoxelPlane {
            dims: [self.dims[a], self.dims[b]],
            channels: self.channels,
            data: plane.data,
        })
    }

    pub fn concat(&self, other: &VoxelGrid, axis: usize) -> Result<VoxelGrid> {
        check_axis(axis)?;
        if self.channels != other.channels
            || self.dtype() != other.dtype()
            || (0..3).any(|ax| ax != axis && self.dims[ax] != other.dims[ax])
        {
            return Err(Error::DimensionMismatch {
                expected: self.dims.to_vec(),
                found: other.dims.to_vec(),
            });
        }
        let mut dims = self.dims;
        dims[axis] += other.dims[axis];
        let data = match (&self.data, &other.data) {
            (VoxelData::U8(a), VoxelData::U8(b)) => {
                VoxelData::U8(concat_raw(a, self.dims, b, other.dims, axis, self.channels))
            }
            (VoxelData::F32(a), VoxelData::F32(b)) => {
                VoxelData::F32(concat_raw(a, self.dims, b, other.dims, axis, self.channels))
            }
            _ => unreachable!("dtypes checked above"),
        };
        VoxelGrid::new(dims, self.channels, data)
    }

    pub fn sub_range(&self, axis: usize, start: usize, end: usize) -> Result<VoxelGrid> {
        check_axis(axis)?;
        if start >= end || end > self.dims[axis] {
            return Err(Error::Validation(format!(
                "range {start}..{end} invalid for axis {axis} of length {}",
                self.dims[axis]
            )));
        }
        let mut dims = self.dims;
        dims[axis] = end - start;
        self.remap(dims, |mut p| {
            p[axis] += start;
            p
        })
    }
}

fn concat_raw<T: Copy>(
    a: &[T],
    a_dims: Dims3,
    b: &[T],
    b_dims: Dims3,
    axis: usize,
    channels: usize,
) -> Vec<T> {
    // Row-major layout: everything after `axis` forms contiguous blocks.
    let inner: usize = a_dims[axis + 1..].iter().product::<usize>() * channels;
    let outer: usize = a_dims[..axis].iter().product();
    let (block_a, block_b) = (a_dims[axis] * inner, b_dims[axis] * inner);
    let mut out = Vec::with_capacity(a.len() + b.len());
    for o in 0..outer {
        out.extend_from_slice(&a[o * block_a..(o + 1) * block_a]);
        out.extend_from_slice(&b[o * block_b..(o + 1) * block_b]);
    }
    out
}

/// A 2D slice of a [`VoxelGrid`], channels innermost.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelPlane {
    pub dims: [usize; 2],
    pub channels: usize,
    pub data: VoxelData,
}
