//! Evaluation engine for 3D saliency maps.
//!
//! Scores externally produced saliency volumes against ground-truth
//! segmentations with box-level localization metrics (`Max3DBoxAcc`,
//! `Max3DBoxAccV2` and their slice-wise 2D baselines) and voxel-level metrics
//! (`VxAP`, `MaxF1`, `Prec@F1τ`, `Rec@F1τ`, mass concentration). It also
//! builds the labeled benchmark datasets from ShapeNet binvox models, ScanNet
//! scans and BraTS volumes, and reads and writes every file format involved.

pub mod components;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod formats;
pub mod grid;
pub mod metrics;
pub mod synth;

pub use error::{Error, Result};
pub use grid::{
    bbox_of, threshold, BBox3, DType, Grid3, IouThresholdSet, SaliencyMap, SegMask,
    ThresholdGrid, VoxelData, VoxelGrid,
};
