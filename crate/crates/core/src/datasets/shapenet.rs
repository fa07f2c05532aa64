//! ShapeNet builders from binvox class folders.
//!
//! `shapenet-binary` keeps one object per volume and uses the occupancy as
//! its own mask. `shapenet-pairs` joins each class object `x_C` with a random
//! object `x_N` from the other classes along the first axis; `order` tells
//! which slab holds `x_C` and only that slab is masked.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{sanitize_id, BuiltDataset, Exclusion, LabeledSample};
use crate::error::{Error, Result};
use crate::formats::{read_binvox, read_file};
use crate::grid::{SegMask, VoxelGrid};

/// Every `.binvox` under `dir`, sorted.
fn binvox_files(dir: &Path) -> Result<Vec<PathBuf>> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_dir() {
                walk(&path, out)?;
            } else if path.extension().is_some_and(|e| e == "binvox") {
                out.push(path);
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, &mut out)?;
    out.sort();
    Ok(out)
}

/// `{class}_{model}`: the model folder when files are nested, the file stem
/// otherwise.
fn model_id(class: &str, class_dir: &Path, file: &Path) -> String {
    let rel = file.strip_prefix(class_dir).unwrap_or(file);
    let mut parts = rel.components();
    let first = parts.next().map(|c| c.as_os_str().to_string_lossy().into_owned());
    let model = match (first, parts.next()) {
        (Some(dir), Some(_)) => dir,
        _ => file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
    };
    sanitize_id(&format!("{class}_{model}"))
}

struct Loaded {
    id: String,
    volume: VoxelGrid,
}

/// Reads every model of a class folder; unreadable and empty models become
/// exclusions.
fn load_class(root: &Path, class: &str) -> Result<(Vec<Loaded>, Vec<Exclusion>)> {
    let dir = root.join(class);
    if !dir.is_dir() {
        return Err(Error::Validation(format!("class folder {} not found", dir.display())));
    }
    let files = binvox_files(&dir)?;
    let results: Vec<(String, Result<VoxelGrid>)> = files
        .par_iter()
        .map(|f| {
            let id = model_id(class, &dir, f);
            let grid = read_file(f).and_then(|b| read_binvox(&b)).map(|b| b.grid);
            (id, grid)
        })
        .collect();
    let mut loaded = Vec::new();
    let mut excluded = Vec::new();
    for (id, r) in results {
        match r {
            Ok(volume) if volume.occupancy().is_blank() => {
                excluded.push(Exclusion::new(id, "empty occupancy"))
            }
            Ok(volume) => loaded.push(Loaded { id, volume }),
            Err(e) => {
                log::warn!("skipping {id}: {e}");
                excluded.push(Exclusion::new(id, format!("unreadable: {e}")));
            }
        }
    }
    Ok((loaded, excluded))
}

pub fn build_shapenet_binary(root: &Path, classes: [&str; 2]) -> Result<BuiltDataset> {
    let mut out = BuiltDataset::default();
    for (label, class) in classes.into_iter().enumerate() {
        let (loaded, excluded) = load_class(root, class)?;
        out.excluded.extend(excluded);
        for l in loaded {
            let mask = l.volume.occupancy();
            out.samples.push(LabeledSample::new(l.id, l.volume, label as u8, mask)?);
        }
    }
    Ok(out)
}

/// Pairs built from in-memory volumes.
#[derive(Clone, Debug, PartialEq)]
pub struct PairsOutput {
    pub samples: Vec<LabeledSample>,
    /// Index into the noise pool used for each sample.
    pub noise_index: Vec<usize>,
}

/// Joins every class volume with a noise volume drawn uniformly with
/// replacement, in random order. Draws happen in input order: for each class
/// sample, first the noise index, then the order bit.
pub fn prepare_pairs(
    class_samples: &[(String, VoxelGrid, u8)],
    noise_pool: &[VoxelGrid],
    seed: u64,
) -> Result<PairsOutput> {
    if noise_pool.is_empty() {
        return Err(Error::Empty("noise pool for pairs is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(usize, u8)> = class_samples
        .iter()
        .map(|_| (rng.gen_range(0..noise_pool.len()), rng.gen_range(0..2u8)))
        .collect();
    let samples = class_samples
        .par_iter()
        .zip(&draws)
        .map(|((id, xc, label), &(n, order))| {
            let xn = &noise_pool[n];
            if xc.dims() != xn.dims() {
                return Err(Error::DimensionMismatch {
                    expected: xc.dims().to_vec(),
                    found: xn.dims().to_vec(),
                });
            }
            let blank = SegMask::zeros(xc.dims())?;
            let own = xc.occupancy();
            let (volume, mask) = if order == 0 {
                (xc.concat(xn, 0)?, own.grid().concat(blank.grid(), 0)?)
            } else {
                (xn.concat(xc, 0)?, blank.grid().concat(own.grid(), 0)?)
            };
            let mut s = LabeledSample::new(id.clone(), volume, *label, SegMask::from_grid(mask)?)?;
            s.order = Some(order);
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PairsOutput {
        samples,
        noise_index: draws.into_iter().map(|(n, _)| n).collect(),
    })
}

/// Class folders are `root/{class}`; every other folder under `root` feeds
/// the noise pool.
pub fn build_shapenet_pairs(root: &Path, classes: [&str; 2], seed: u64) -> Result<BuiltDataset> {
    let mut out = BuiltDataset::default();
    let mut class_samples = Vec::new();
    for (label, class) in classes.into_iter().enumerate() {
        let (loaded, excluded) = load_class(root, class)?;
        out.excluded.extend(excluded);
        class_samples.extend(loaded.into_iter().map(|l| (l.id, l.volume, label as u8)));
    }

    let mut noise_classes: Vec<String> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|name| !classes.contains(&name.as_str()))
        .collect();
    noise_classes.sort();
    let mut pool = Vec::new();
    for class in &noise_classes {
        let (loaded, excluded) = load_class(root, class)?;
        // Unreadable noise models are still worth reporting.
        out.excluded.extend(excluded.into_iter().filter(|e| e.reason.starts_with("unreadable")));
        pool.extend(loaded.into_iter().map(|l| l.volume));
    }
    out.samples = prepare_pairs(&class_samples, &pool, seed)?.samples;
    Ok(out)
}
