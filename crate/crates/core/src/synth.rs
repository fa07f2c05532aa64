//! Synthetic saliency maps with known behavior, for fixtures and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Dims3, Grid3, SaliencyMap, SegMask};

/// How [`from_gt`] degrades a ground-truth mask.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    /// Blend weight toward uniform noise, in `[0, 1]`.
    pub alpha: f64,
    /// Integer translation in voxels.
    pub offset: [i64; 3],
    /// Cubic dilation radius.
    pub dilation: usize,
    pub seed: u64,
}

impl DegradationSpec {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn blend(alpha: f64, seed: u64) -> Self {
        DegradationSpec {
            alpha,
            seed,
            ..Default::default()
        }
    }

    fn validate(&self, dims: Dims3) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Validation(format!("blend alpha {} outside [0, 1]", self.alpha)));
        }
        for i in 0..3 {
            if self.offset[i].unsigned_abs() > dims[i] as u64 {
                return Err(Error::Validation(format!(
                    "offset {:?} exceeds dims {dims:?}",
                    self.offset
                )));
            }
        }
        Ok(())
    }
}

/// Box dilation with a `(2r+1)³` cube, done one axis at a time.
fn dilate(mask: &Grid3<u8>, r: usize) -> Grid3<u8> {
    let mut cur = mask.clone();
    if r == 0 {
        return cur;
    }
    let dims = mask.dims();
    for axis in 0..3 {
        let src = cur.clone();
        cur = Grid3::from_fn(dims, |p| {
            let lo = p[axis].saturating_sub(r);
            let hi = (p[axis] + r).min(dims[axis] - 1);
            let mut q = p;
            u8::from((lo..=hi).any(|v| {
                q[axis] = v;
                src.get(q) != 0
            }))
        })
        .expect("dims unchanged");
    }
    cur
}

fn translate(grid: &Grid3<u8>, offset: [i64; 3]) -> Grid3<u8> {
    let dims = grid.dims();
    Grid3::from_fn(dims, |p| {
        let mut q = [0usize; 3];
        for i in 0..3 {
            let v = p[i] as i64 - offset[i];
            if v < 0 || v >= dims[i] as i64 {
                return 0;
            }
            q[i] = v as usize;
        }
        grid.get(q)
    })
    .expect("dims unchanged")
}

/// Dilate, translate with zero fill, blend `(1−α)·map + α·U[0,1]`, then
/// min-max normalize.
pub fn from_gt(m: &SegMask, spec: &DegradationSpec) -> Result<SaliencyMap> {
    if m.is_blank() {
        return Err(Error::Validation("cannot derive saliency from an empty mask".into()));
    }
    spec.validate(m.dims())?;
    let moved = translate(&dilate(m.grid(), spec.dilation), spec.offset);
    if moved.data().iter().all(|&v| v == 0) {
        return Err(Error::Validation(format!(
            "offset {:?} moves the whole object out of the volume",
            spec.offset
        )));
    }
    if spec.alpha == 0.0 {
        return Ok(SaliencyMap::from_grid(moved.map(|&v| f32::from(v))));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let a = spec.alpha;
    let blended = moved.map(|&v| ((1.0 - a) * f64::from(v) + a * rng.gen::<f64>()) as f32);
    SaliencyMap::from_grid(blended).normalize()
}

/// Isotropic Gaussian bump centered on a voxel, peak 1.
pub fn gaussian_blob(dims: Dims3, center: [f64; 3], sigma: f64) -> Result<SaliencyMap> {
    crate::grid::check_dims(dims)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Validation(format!("sigma {sigma} must be positive")));
    }
    if (0..3).any(|i| !(center[i] >= 0.0 && center[i] <= (dims[i] - 1) as f64)) {
        return Err(Error::Validation(format!("center {center:?} outside dims {dims:?}")));
    }
    let g = Grid3::from_fn(dims, |p| {
        let d2: f64 = (0..3).map(|i| (p[i] as f64 - center[i]).powi(2)).sum();
        (-d2 / (2.0 * sigma * sigma)).exp() as f32
    })?;
    SaliencyMap::from_grid(g).normalize()
}

/// Union of random axis-aligned ellipsoids, never blank.
pub fn random_blob_mask(dims: Dims3, blobs: usize, rng: &mut impl Rng) -> Result<SegMask> {
    crate::grid::check_dims(dims)?;
    let shapes: Vec<([f64; 3], [f64; 3])> = (0..blobs.max(1))
        .map(|_| {
            let c = [0, 1, 2].map(|i| rng.gen_range(0.0..dims[i] as f64));
            let r = [0, 1, 2].map(|i| rng.gen_range(1.0..(dims[i] as f64 / 4.0).max(1.5)));
            (c, r)
        })
        .collect();
    let g = Grid3::from_fn(dims, |p| {
        u8::from(shapes.iter().any(|(c, r)| {
            (0..3)
                .map(|i| ((p[i] as f64 - c[i]) / r[i]).powi(2))
                .sum::<f64>()
                <= 1.0
        }))
    })?;
    let mut mask = SegMask::from_grid(g)?;
    if mask.is_blank() {
        // Ellipsoid centers can fall between voxels; seed the nearest one.
        let c = shapes[0].0.map(|v| v as usize);
        let mut data = mask.data().to_vec();
        data[mask.grid().index_of(c)] = 1;
        mask = SegMask::new(dims, data)?;
    }
    Ok(mask)
}
