//! Builders for the five benchmark datasets and their on-disk layout:
//! `volumes/{id}.sev`, `masks/{id}.sev` and `manifest.json`.

pub mod brats;
pub mod scannet;
pub mod shapenet;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use brats::{build_brats_halves, preprocess_brats, split_halves, BratsOptions, BRATS_TUMOR_FRACTION};
pub use scannet::{build_scannet, ScannetMode};
pub use shapenet::{build_shapenet_binary, build_shapenet_pairs, prepare_pairs, PairsOutput};

use crate::error::{Error, Result};
use crate::formats::{read_file, read_sev, write_file, write_sev};
use crate::grid::{SegMask, VoxelGrid};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetId {
    #[serde(rename = "shapenet-binary")]
    ShapenetBinary,
    #[serde(rename = "shapenet-pairs")]
    ShapenetPairs,
    #[serde(rename = "scannet-isolated")]
    ScannetIsolated,
    #[serde(rename = "scannet-crop")]
    ScannetCrop,
    #[serde(rename = "brats-halves")]
    BratsHalves,
}

impl DatasetId {
    pub const ALL: [DatasetId; 5] = [
        DatasetId::ShapenetBinary,
        DatasetId::ShapenetPairs,
        DatasetId::ScannetIsolated,
        DatasetId::ScannetCrop,
        DatasetId::BratsHalves,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetId::ShapenetBinary => "shapenet-binary",
            DatasetId::ShapenetPairs => "shapenet-pairs",
            DatasetId::ScannetIsolated => "scannet-isolated",
            DatasetId::ScannetCrop => "scannet-crop",
            DatasetId::BratsHalves => "brats-halves",
        }
    }

    /// Class identifiers `(λ1, λ2)` used when none are given.
    pub fn default_classes(self) -> [&'static str; 2] {
        match self {
            // ShapeNet synset folders: chair/table and airplane/bench.
            DatasetId::ShapenetBinary => ["03001627", "04379243"],
            DatasetId::ShapenetPairs => ["02691156", "02828884"],
            DatasetId::ScannetIsolated | DatasetId::ScannetCrop => ["chair", "table"],
            DatasetId::BratsHalves => ["no-tumor", "tumor"],
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown dataset id {s:?}")))
    }
}

/// One benchmark sample.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub id: String,
    pub volume: VoxelGrid,
    /// Binary class: 0 for λ1, 1 for λ2.
    pub label: u8,
    pub mask: SegMask,
    /// Slab holding the class object, pairs datasets only.
    pub order: Option<u8>,
    /// Samples sharing a group always land in the same split.
    pub group: Option<String>,
    pub tumor_fraction: Option<f64>,
}

impl LabeledSample {
    pub fn new(id: impl Into<String>, volume: VoxelGrid, label: u8, mask: SegMask) -> Result<Self> {
        let id = id.into();
        if volume.dims() != mask.dims() {
            return Err(Error::DimensionMismatch {
                expected: volume.dims().to_vec(),
                found: mask.dims().to_vec(),
            });
        }
        if label > 1 {
            return Err(Error::Validation(format!("sample {id}: label {label} is not binary")));
        }
        Ok(LabeledSample {
            id,
            volume,
            label,
            mask,
            order: None,
            group: None,
            tumor_fraction: None,
        })
    }
}

/// An input that did not become a sample, with the reason.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub id: String,
    pub reason: String,
}

impl Exclusion {
    pub fn new(id: impl Into<String>, reason: impl Into<String>) -> Self {
        Exclusion {
            id: id.into(),
            reason: reason.into(),
        }
    }
}

/// Output of a builder before it is split and written.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BuiltDataset {
    pub samples: Vec<LabeledSample>,
    pub excluded: Vec<Exclusion>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<u8>,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tumor_fraction: Option<f64>,
    /// Volume and mask paths relative to the dataset directory.
    pub volume: String,
    pub mask: String,
    /// Mask is non-empty; negative samples are not evaluated.
    pub positive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: DatasetId,
    pub classes: [String; 2],
    pub seed: u64,
    pub test_fraction: f64,
    pub builder_version: String,
    /// Training may flip volumes across the symmetry plane.
    #[serde(default)]
    pub flip_augmentation: bool,
    pub samples: Vec<ManifestEntry>,
    pub excluded: Vec<Exclusion>,
}

impl DatasetManifest {
    pub fn entry(&self, id: &str) -> Option<&ManifestEntry> {
        self.samples.iter().find(|e| e.id == id)
    }

    /// `(label, split) → count`, ordered.
    pub fn summary(&self) -> Vec<((u8, Split), usize)> {
        let mut out: Vec<((u8, Split), usize)> = Vec::new();
        for label in [0, 1] {
            for split in [Split::Train, Split::Test] {
                let n = self
                    .samples
                    .iter()
                    .filter(|e| e.label == label && e.split == split)
                    .count();
                out.push(((label, split), n));
            }
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&read_file(path)?)?)
    }
}

/// Deterministic grouped train/test assignment. Groups are shuffled with the
/// seed and moved to the test split until it holds `round(N·fraction)`
/// samples (clamped to `[1, N−1]`).
pub fn split_train_test(samples: &[LabeledSample], seed: u64, test_fraction: f64) -> Result<Vec<Split>> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Validation(format!("need at least 2 samples to split, got {n}")));
    }
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::Validation(format!("test fraction {test_fraction} outside [0, 1]")));
    }
    let key = |s: &LabeledSample| s.group.clone().unwrap_or_else(|| s.id.clone());
    let mut groups: Vec<String> = Vec::new();
    for s in samples {
        let k = key(s);
        if !groups.contains(&k) {
            groups.push(k);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);
    let target = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let mut test: Vec<&String> = Vec::new();
    let mut count = 0;
    for g in &groups {
        if count >= target {
            break;
        }
        count += samples.iter().filter(|s| &key(s) == g).count();
        test.push(g);
    }
    Ok(samples
        .iter()
        .map(|s| if test.contains(&&key(s)) { Split::Test } else { Split::Train })
        .collect())
}

pub struct DatasetMeta {
    pub name: DatasetId,
    pub classes: [String; 2],
    pub seed: u64,
    pub test_fraction: f64,
    pub flip_augmentation: bool,
}

/// Splits and writes a built dataset to `dir`, returning its manifest.
pub fn write_dataset(dir: &Path, built: &BuiltDataset, meta: &DatasetMeta) -> Result<DatasetManifest> {
    let ids: std::collections::HashSet<&str> = built.samples.iter().map(|s| s.id.as_str()).collect();
    if ids.len() != built.samples.len() {
        return Err(Error::Validation("duplicate sample ids".into()));
    }
    let splits = split_train_test(&built.samples, meta.seed, meta.test_fraction)?;
    let mut entries = Vec::with_capacity(built.samples.len());
    for (s, split) in built.samples.iter().zip(splits) {
        let volume = format!("volumes/{}.sev", s.id);
        let mask = format!("masks/{}.sev", s.id);
        write_file(&dir.join(&volume), &write_sev(&s.volume))?;
        write_file(&dir.join(&mask), &write_sev(&VoxelGrid::from_mask(&s.mask)))?;
        entries.push(ManifestEntry {
            id: s.id.clone(),
            label: s.label,
            order: s.order,
            split,
            group: s.group.clone(),
            tumor_fraction: s.tumor_fraction,
            volume,
            mask,
            positive: !s.mask.is_blank(),
        });
    }
    let manifest = DatasetManifest {
        name: meta.name,
        classes: meta.classes.clone(),
        seed: meta.seed,
        test_fraction: meta.test_fraction,
        builder_version: env!("CARGO_PKG_VERSION").to_string(),
        flip_augmentation: meta.flip_augmentation,
        samples: entries,
        excluded: built.excluded.clone(),
    };
    let json = serde_json::to_vec_pretty(&manifest)?;
    write_file(&dir.join(MANIFEST_FILE), &json)?;
    Ok(manifest)
}

/// A dataset directory on disk.
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    /// Opens a dataset from its directory or its manifest file.
    pub fn open(path: &Path) -> Result<Self> {
        let (root, manifest_path) = if path.is_dir() {
            (path.to_path_buf(), path.join(MANIFEST_FILE))
        } else {
            let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (root, path.to_path_buf())
        };
        Ok(Dataset {
            root,
            manifest: DatasetManifest::read(&manifest_path)?,
        })
    }

    pub fn load_mask(&self, entry: &ManifestEntry) -> Result<SegMask> {
        let grid = read_sev(&read_file(&self.root.join(&entry.mask))?)?.grid;
        if grid.channels() != 1 {
            return Err(Error::Validation(format!("mask of {} has several channels", entry.id)));
        }
        let data = (0..grid.voxel_count()).map(|i| grid.data().value(i) as u8).collect();
        SegMask::new(grid.dims(), data)
    }

    pub fn load_volume(&self, entry: &ManifestEntry) -> Result<VoxelGrid> {
        Ok(read_sev(&read_file(&self.root.join(&entry.volume))?)?.grid)
    }
}

/// Makes a string safe to use as a file stem.
pub(crate) fn sanitize_id(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}
