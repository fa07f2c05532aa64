//! Box-level (WSOL) and voxel-level (WSSS) saliency metrics.
//!
//! Every metric is computed in two stages: a per-sample curve over the
//! threshold grid (pure, parallel over samples), then a dataset reduction
//! that averages in sample order and maximizes over thresholds, keeping the
//! smallest threshold on ties.

pub mod wsol;
pub mod wsss;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{SaliencyMap, SegMask};

pub use wsol::{
    box_acc_3d, box_acc_3d_v2, max_3d_box_acc, max_3d_box_acc_v2, max_box_acc_2d,
    max_box_acc_2d_v2, reduce_curves, slice_box_curve, volume_box_curve, SliceBoxCurve,
    VolumeBoxCurve,
};
pub use wsss::{
    mass_concentration, max_f1, pr_counts, pxap, pxap_slicewise, sample_mass_concentration,
    vx_precision_recall, vxap, vxap_with, ApMode, ApResult, McResult, PrCounts,
};

/// A saliency map paired with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSample {
    pub saliency: SaliencyMap,
    pub mask: SegMask,
    /// Slab holding the class object in a pairs volume.
    pub order: Option<u8>,
}

impl EvalSample {
    pub fn new(saliency: SaliencyMap, mask: SegMask) -> Self {
        EvalSample {
            saliency,
            mask,
            order: None,
        }
    }

    pub fn with_order(mut self, order: u8) -> Self {
        self.order = Some(order);
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.saliency.dims() != self.mask.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.mask.dims().to_vec(),
                found: self.saliency.dims().to_vec(),
            });
        }
        self.saliency.ensure_normalized()
    }
}

/// Metric identifiers, in report column order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricId {
    Max3DBoxAcc,
    Max3DBoxAccV2,
    VxAP,
    MaxF1,
    MaxBoxAcc,
    MaxBoxAccV2,
    PxAP,
    MassConcentration,
}

impl MetricId {
    pub const ALL: [MetricId; 8] = [
        MetricId::Max3DBoxAcc,
        MetricId::Max3DBoxAccV2,
        MetricId::VxAP,
        MetricId::MaxF1,
        MetricId::MaxBoxAcc,
        MetricId::MaxBoxAccV2,
        MetricId::PxAP,
        MetricId::MassConcentration,
    ];

    /// Short name accepted on the command line.
    pub fn key(self) -> &'static str {
        match self {
            MetricId::Max3DBoxAcc => "max3dboxacc",
            MetricId::Max3DBoxAccV2 => "max3dboxaccv2",
            MetricId::VxAP => "vxap",
            MetricId::MaxF1 => "maxf1",
            MetricId::MaxBoxAcc => "maxboxacc",
            MetricId::MaxBoxAccV2 => "maxboxaccv2",
            MetricId::PxAP => "pxap",
            MetricId::MassConcentration => "mc",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        let key = key.trim().to_ascii_lowercase();
        Self::ALL.into_iter().find(|m| m.key() == key)
    }

    /// Report column headers produced by this metric.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            MetricId::Max3DBoxAcc => &["Max3DBoxAcc"],
            MetricId::Max3DBoxAccV2 => &["Max3DBoxAccV2"],
            MetricId::VxAP => &["VxAP"],
            MetricId::MaxF1 => &["MaxF1", "Prec@F1tau", "Rec@F1tau"],
            MetricId::MaxBoxAcc => &["MaxBoxAcc"],
            MetricId::MaxBoxAccV2 => &["MaxBoxAccV2"],
            MetricId::PxAP => &["PxAP"],
            MetricId::MassConcentration => &["MassConcentration"],
        }
    }
}

/// Result of a box-accuracy sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WsolResult {
    pub metric: MetricId,
    pub value: f64,
    pub best_tau: f64,
    pub deltas: Vec<f64>,
    /// Per-sample score at `best_tau` (indicator, or its mean over δ / slices).
    pub per_sample: Vec<f64>,
    /// Mean score at every threshold of the grid.
    pub curve: Vec<f64>,
    /// Indices of samples that could not be scored.
    pub excluded: Vec<usize>,
}

/// Result of the F1 sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Result {
    pub max_f1: f64,
    pub tau_f1: f64,
    pub prec_at_f1: f64,
    pub rec_at_f1: f64,
    pub per_sample_f1: Vec<f64>,
    pub per_sample_prec: Vec<f64>,
    pub per_sample_rec: Vec<f64>,
    pub curve: Vec<f64>,
    /// Indices of samples with an empty ground truth.
    pub excluded: Vec<usize>,
}

/// Mean of `values` accumulated in order.
pub(crate) fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Averages per-sample curves threshold by threshold and picks the first
/// (smallest-τ) maximum. Returns `(best index, mean curve)`.
pub(crate) fn maximize(curves: &[&[f64]], levels: usize) -> (usize, Vec<f64>) {
    let curve: Vec<f64> = (0..levels)
        .map(|l| mean(curves.iter().map(|c| c[l])))
        .collect();
    let mut best = 0;
    for (l, &v) in curve.iter().enumerate() {
        if v > curve[best] {
            best = l;
        }
    }
    (best, curve)
}

pub(crate) fn require_samples<T>(samples: &[T]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples to evaluate".into()));
    }
    Ok(())
}
