//! Point-cloud occupancy grids.
//!
//! Points are mapped into the unit cube by their tight bounding box: one
//! uniform scale (the largest extent) and centering, so the aspect ratio is
//! kept. Voxel `i` along an axis of `n` covers `[i/n, (i+1)/n)`; points at 1.0
//! clamp into the last voxel.

use crate::error::{Error, Result};
use crate::grid::{Dims3, Grid3, SegMask};

/// Normalizing frame derived from a reference point set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoxelFrame {
    center: [f64; 3],
    extent: f64,
    dims: Dims3,
}

impl VoxelFrame {
    pub fn from_points(points: &[[f64; 3]], dims: Dims3) -> Result<Self> {
        crate::grid::check_dims(dims)?;
        let first = points
            .first()
            .ok_or_else(|| Error::Empty("cannot voxelize an empty point cloud".into()))?;
        let (mut lo, mut hi) = (*first, *first);
        for p in points {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::Validation(format!("non-finite point {p:?}")));
            }
            for i in 0..3 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        let extent = (0..3).map(|i| hi[i] - lo[i]).fold(0.0, f64::max);
        Ok(VoxelFrame {
            center: [0, 1, 2].map(|i| (lo[i] + hi[i]) / 2.0),
            // A single point (or coincident points) lands in the middle voxel.
            extent: if extent > 0.0 { extent } else { 1.0 },
            dims,
        })
    }

    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    /// Voxel holding `p`, or `None` when `p` lies outside the frame's cube.
    pub fn bin(&self, p: [f64; 3]) -> Option<Dims3> {
        let mut out = [0usize; 3];
        for i in 0..3 {
            let u = (p[i] - self.center[i]) / self.extent + 0.5;
            if !(0.0..=1.0).contains(&u) {
                return None;
            }
            out[i] = ((u * self.dims[i] as f64) as usize).min(self.dims[i] - 1);
        }
        Some(out)
    }
}

/// Occupancy of `points` binned in `frame`. Points outside the frame are
/// dropped.
pub fn voxelize_in_frame(points: &[[f64; 3]], frame: &VoxelFrame) -> SegMask {
    let mut g = Grid3::filled(frame.dims, 0u8).expect("frame dims validated").into_data();
    let probe = Grid3::filled(frame.dims, ()).expect("frame dims validated");
    for &p in points {
        if let Some(v) = frame.bin(p) {
            g[probe.index_of(v)] = 1;
        }
    }
    SegMask::new(frame.dims, g).expect("binary by construction")
}

/// Occupancy of `points` in their own normalizing frame.
pub fn voxelize(points: &[[f64; 3]], dims: Dims3) -> Result<SegMask> {
    let frame = VoxelFrame::from_points(points, dims)?;
    Ok(voxelize_in_frame(points, &frame))
}
