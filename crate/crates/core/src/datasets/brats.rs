//! BraTS hemisphere halves.
//!
//! Each scan is rotated −90° about the first and then the second axis,
//! intensities are min-max normalized over the whole multi-channel volume and
//! quantized to u8, tumor labels {1, 2, 4} merge into one foreground class,
//! and volume and mask are cut in two along the left-right axis. A half with
//! tumor fraction `0 < t < 0.003` is dropped; the rest are labeled tumor when
//! `t ≥ 0.003`.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::formats::{read_volume, FileKind};
use crate::grid::{Dims3, Grid3, SegMask, VoxelData, VoxelGrid};

use super::{sanitize_id, BuiltDataset, Exclusion, LabeledSample};

pub const BRATS_TUMOR_FRACTION: f64 = 0.003;
const TUMOR_LABELS: [f32; 3] = [1.0, 2.0, 4.0];
const MODALITIES: [&str; 4] = ["flair", "t1", "t1ce", "t2"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BratsOptions {
    pub tumor_fraction: f64,
}

impl Default for BratsOptions {
    fn default() -> Self {
        BratsOptions {
            tumor_fraction: BRATS_TUMOR_FRACTION,
        }
    }
}

/// `np.rot90(·, k=-1, axes=(a, b))`: swap the axes, then flip along `b`.
/// Returns the new dims and, for each output voxel, the input voxel.
fn rot_neg90(dims: Dims3, a: usize, b: usize) -> (Dims3, impl Fn(Dims3) -> Dims3) {
    let mut out = dims;
    out.swap(a, b);
    let nb = out[b];
    (out, move |p: Dims3| {
        let mut q = p;
        q[b] = nb - 1 - p[b];
        q.swap(a, b);
        q
    })
}

/// Both rotations as one voxel mapping, plus the axis that held the original
/// first (left-right) axis.
fn rotation(dims: Dims3) -> (Dims3, impl Fn(Dims3) -> Dims3, usize) {
    let (d1, src1) = rot_neg90(dims, 1, 2);
    let (d2, src2) = rot_neg90(d1, 0, 2);
    // Axis 0 is untouched by the first step and swapped into axis 2 by the second.
    (d2, move |p| src1(src2(p)), 2)
}

/// Rotated, normalized, quantized volume and merged tumor mask, with the
/// axis along which the hemispheres separate.
pub fn preprocess_brats(scan: &VoxelGrid, seg: &VoxelGrid) -> Result<(VoxelGrid, SegMask, usize)> {
    if scan.dims() != seg.dims() {
        return Err(Error::DimensionMismatch {
            expected: scan.dims().to_vec(),
            found: seg.dims().to_vec(),
        });
    }
    if seg.channels() != 1 {
        return Err(Error::Validation("segmentation must have one channel".into()));
    }
    let (dims, source, split_axis) = rotation(scan.dims());
    let rotated = scan.remap(dims, &source)?;
    let seg = seg.remap(dims, &source)?;

    let data = rotated.data();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..data.len() {
        let v = f64::from(data.value(i));
        if !v.is_finite() {
            return Err(Error::Validation(format!("scan contains non-finite value {v}")));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let range = hi - lo;
    let quantized = (0..data.len())
        .map(|i| {
            let x = if range > 0.0 { (f64::from(data.value(i)) - lo) / range } else { 0.0 };
            (x * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
        })
        .collect();
    let volume = VoxelGrid::new(dims, rotated.channels(), VoxelData::U8(quantized))?;
    let mask_data = (0..seg.voxel_count())
        .map(|i| u8::from(TUMOR_LABELS.contains(&seg.data().value(i))))
        .collect();
    Ok((volume, SegMask::new(dims, mask_data)?, split_axis))
}

/// The two halves of a preprocessed volume along `axis`.
pub fn split_halves(volume: &VoxelGrid, mask: &SegMask, axis: usize) -> Result<[(VoxelGrid, SegMask); 2]> {
    let n = volume.dims()[axis];
    if !n.is_multiple_of(2) {
        return Err(Error::Validation(format!(
            "split axis {axis} has odd length {n}"
        )));
    }
    let half = |start: usize| -> Result<(VoxelGrid, SegMask)> {
        Ok((
            volume.sub_range(axis, start, start + n / 2)?,
            SegMask::from_grid(mask.grid().sub_range(axis, start, start + n / 2)?)?,
        ))
    };
    Ok([half(0)?, half(n / 2)?])
}

/// Applies the tumor-fraction rule to the halves of one patient.
pub fn patient_halves(
    patient: &str,
    scan: &VoxelGrid,
    seg: &VoxelGrid,
    opts: &BratsOptions,
) -> Result<BuiltDataset> {
    let (volume, mask, axis) = preprocess_brats(scan, seg)?;
    let mut out = BuiltDataset::default();
    for (h, (v, m)) in split_halves(&volume, &mask, axis)?.into_iter().enumerate() {
        let id = sanitize_id(&format!("{patient}_h{h}"));
        let t = m.count() as f64 / m.data().len() as f64;
        if t > 0.0 && t < opts.tumor_fraction {
            out.excluded.push(Exclusion::new(
                id,
                format!("tumor fraction {t:.6} in (0, {})", opts.tumor_fraction),
            ));
            continue;
        }
        let mut s = LabeledSample::new(id, v, u8::from(t >= opts.tumor_fraction), m)?;
        s.group = Some(patient.to_string());
        s.tumor_fraction = Some(t);
        out.samples.push(s);
    }
    Ok(out)
}

fn nifti_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(FileKind::from_path(p), Some(FileKind::Nifti | FileKind::NiftiGz)))
        .collect();
    files.sort();
    Ok(files)
}

fn stem(p: &Path) -> String {
    let name = p.file_name().map(|n| n.to_string_lossy().to_ascii_lowercase()).unwrap_or_default();
    name.trim_end_matches(".gz").trim_end_matches(".nii").to_string()
}

/// Loads one patient folder: a `*seg*` label file plus either one 4-channel
/// scan or one file per modality (flair, t1, t1ce, t2, stacked in that order).
fn load_patient(dir: &Path) -> Result<(VoxelGrid, VoxelGrid)> {
    let files = nifti_files(dir)?;
    let (segs, scans): (Vec<&PathBuf>, Vec<&PathBuf>) = files.iter().partition(|p| stem(p).contains("seg"));
    let seg_path = segs
        .first()
        .ok_or_else(|| Error::Validation(format!("missing segmentation in {}", dir.display())))?;
    let mut ordered: Vec<&PathBuf> = Vec::new();
    for m in MODALITIES {
        if let Some(p) = scans.iter().find(|p| stem(p).ends_with(&format!("_{m}"))) {
            ordered.push(p);
        }
    }
    if ordered.len() != scans.len() {
        ordered = scans.clone();
    }
    if ordered.is_empty() {
        return Err(Error::Validation(format!("missing scan in {}", dir.display())));
    }
    let grids = ordered.iter().map(|p| read_volume(p)).collect::<Result<Vec<_>>>()?;
    let scan = if grids.len() == 1 {
        grids.into_iter().next().expect("one grid")
    } else {
        stack_channels(&grids)?
    };
    Ok((scan, read_volume(seg_path)?))
}

fn stack_channels(grids: &[VoxelGrid]) -> Result<VoxelGrid> {
    let dims = grids[0].dims();
    if let Some(g) = grids.iter().find(|g| g.dims() != dims) {
        return Err(Error::DimensionMismatch {
            expected: dims.to_vec(),
            found: g.dims().to_vec(),
        });
    }
    let channels: usize = grids.iter().map(VoxelGrid::channels).sum();
    let n = grids[0].voxel_count();
    let mut data = Vec::with_capacity(n * channels);
    for i in 0..n {
        for g in grids {
            let c = g.channels();
            data.extend((0..c).map(|k| g.data().value(i * c + k)));
        }
    }
    VoxelGrid::new(dims, channels, VoxelData::F32(data))
}

/// Patients are the sub-folders of `root`.
pub fn build_brats_halves(root: &Path, opts: &BratsOptions) -> Result<BuiltDataset> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Empty(format!("no patient folders under {}", root.display())));
    }
    let mut out = BuiltDataset::default();
    // Patients are loaded one at a time: full scans are large.
    for d in dirs {
        let patient = d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let (scan, seg) = load_patient(&d)?;
        let b = patient_halves(&patient, &scan, &seg, opts)?;
        out.samples.extend(b.samples);
        out.excluded.extend(b.excluded);
    }
    Ok(out)
}

/// Reassembles two halves along `axis`.
pub fn join_halves(halves: &[(VoxelGrid, SegMask); 2], axis: usize) -> Result<(VoxelGrid, SegMask)> {
    let volume = halves[0].0.concat(&halves[1].0, axis)?;
    let mask: Grid3<u8> = halves[0].1.grid().concat(halves[1].1.grid(), axis)?;
    Ok((volume, SegMask::from_grid(mask)?))
}
