//! ScanNet object volumes.
//!
//! Every instance of the two classes becomes one sample. `Isolated` voxelizes
//! the instance points alone; `Crop` voxelizes every scene point inside the
//! instance's tight box, so nearby environment shows up in the volume. In
//! both modes the mask is the instance points binned in the volume's frame.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sanitize_id, BuiltDataset, Exclusion, LabeledSample};
use crate::error::{Error, Result};
use crate::formats::{read_file, read_ply_with_instances, voxelize_in_frame, PointCloud, VoxelFrame};
use crate::grid::{Dims3, VoxelGrid};

pub const SCANNET_DIMS: Dims3 = [32, 32, 32];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScannetMode {
    Isolated,
    Crop,
}

struct SceneFiles {
    name: String,
    ply: PathBuf,
    aggregation: PathBuf,
    segs: PathBuf,
}

fn find_with_suffix(files: &[PathBuf], suffixes: &[&str]) -> Option<PathBuf> {
    suffixes.iter().find_map(|suf| {
        files
            .iter()
            .find(|f| f.file_name().is_some_and(|n| n.to_string_lossy().ends_with(suf)))
            .cloned()
    })
}

fn scene_files(dir: &Path) -> Result<Option<SceneFiles>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    let ply = find_with_suffix(&files, &["_vh_clean_2.ply", ".ply"]);
    let aggregation = find_with_suffix(&files, &[".aggregation.json"]);
    let segs = find_with_suffix(&files, &[".segs.json"]);
    Ok(match (ply, aggregation, segs) {
        (Some(ply), Some(aggregation), Some(segs)) => Some(SceneFiles {
            name: dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            ply,
            aggregation,
            segs,
        }),
        _ => None,
    })
}

/// Samples of one scene.
pub fn scene_samples(
    scene: &str,
    pc: &PointCloud,
    mode: ScannetMode,
    classes: [&str; 2],
    dims: Dims3,
) -> Result<BuiltDataset> {
    let mut out = BuiltDataset::default();
    for (instance, name) in pc.instances() {
        let Some(label) = name.and_then(|n| classes.iter().position(|c| *c == n)) else {
            continue;
        };
        let id = sanitize_id(&format!("{scene}_{instance}"));
        let object = pc.instance_points(instance);
        if object.is_empty() {
            out.excluded.push(Exclusion::new(id, "instance has no points"));
            continue;
        }
        let volume_points = match mode {
            ScannetMode::Isolated => object.clone(),
            ScannetMode::Crop => {
                let (mut lo, mut hi) = (object[0], object[0]);
                for p in &object {
                    for i in 0..3 {
                        lo[i] = lo[i].min(p[i]);
                        hi[i] = hi[i].max(p[i]);
                    }
                }
                pc.points
                    .iter()
                    .filter(|p| (0..3).all(|i| lo[i] <= p[i] && p[i] <= hi[i]))
                    .copied()
                    .collect()
            }
        };
        let frame = VoxelFrame::from_points(&volume_points, dims)?;
        let volume = VoxelGrid::from_mask(&voxelize_in_frame(&volume_points, &frame));
        let mask = voxelize_in_frame(&object, &frame);
        out.samples.push(LabeledSample::new(id, volume, label as u8, mask)?);
    }
    Ok(out)
}

/// Scenes are the sub-folders of `root` holding a PLY mesh with its
/// aggregation and segs sidecars.
pub fn build_scannet(root: &Path, mode: ScannetMode, classes: [&str; 2]) -> Result<BuiltDataset> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut scenes = Vec::new();
    for d in &dirs {
        match scene_files(d)? {
            Some(s) => scenes.push(s),
            None => log::warn!("{} has no complete scene files, skipping", d.display()),
        }
    }
    if scenes.is_empty() {
        return Err(Error::Empty(format!("no ScanNet scenes under {}", root.display())));
    }
    let per_scene: Vec<Result<BuiltDataset>> = scenes
        .par_iter()
        .map(|s| {
            let pc = read_ply_with_instances(
                &read_file(&s.ply)?,
                &read_file(&s.aggregation)?,
                &read_file(&s.segs)?,
            )?;
            scene_samples(&s.name, &pc, mode, classes, SCANNET_DIMS)
        })
        .collect();
    let mut out = BuiltDataset::default();
    for (scene, r) in scenes.iter().zip(per_scene) {
        match r {
            Ok(b) => {
                out.samples.extend(b.samples);
                out.excluded.extend(b.excluded);
            }
            Err(e) => {
                log::warn!("skipping scene {}: {e}", scene.name);
                out.excluded.push(Exclusion::new(&scene.name, format!("unreadable scene: {e}")));
            }
        }
    }
    Ok(out)
}
