use serde::{Deserialize, Serialize};

use super::SaliencyMap;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum GridMode {
    /// `k/n` for `k = 1..=n`.
    Uniform { n: usize },
    /// Every distinct positive saliency value present in the evaluated maps.
    Exact,
    /// Caller-supplied values.
    Custom,
}

/// Strictly increasing saliency thresholds in `(0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGrid {
    mode: GridMode,
    values: Vec<f64>,
}

impl ThresholdGrid {
    pub const DEFAULT_STEPS: usize = 101;

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("uniform threshold grid needs n >= 1".into()));
        }
        let values = (1..=n).map(|k| k as f64 / n as f64).collect();
        Ok(ThresholdGrid {
            mode: GridMode::Uniform { n },
            values,
        })
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("threshold grid is empty".into()));
        }
        if values.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return Err(Error::Validation("thresholds must lie in (0, 1]".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(
                "thresholds must be strictly increasing".into(),
            ));
        }
        Ok(ThresholdGrid {
            mode: GridMode::Custom,
            values,
        })
    }

    /// Union of all distinct positive values across `maps`.
    pub fn exact_from_maps<'a>(maps: impl IntoIterator<Item = &'a SaliencyMap>) -> Result<Self> {
        let mut vals: Vec<f32> = Vec::new();
        for map in maps {
            map.ensure_normalized()?;
            vals.extend(map.data().iter().copied().filter(|&v| v > 0.0));
            vals.sort_unstable_by(f32::total_cmp);
            vals.dedup();
        }
        if vals.is_empty() {
            return Err(Error::Empty(
                "no positive saliency values to build an exact grid from".into(),
            ));
        }
        Ok(ThresholdGrid {
            mode: GridMode::Exact,
            values: vals.into_iter().map(f64::from).collect(),
        })
    }

    pub fn mode(&self) -> GridMode {
        self.mode
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of thresholds `τ` with `τ ≤ v`: the voxel is in `{s ≥ τ_l}`
    /// exactly for levels `l < level_count(v)`.
    #[inline]
    pub fn level_count(&self, v: f32) -> usize {
        let v = f64::from(v);
        self.values.partition_point(|&t| t <= v)
    }
}

/// Set of IoU acceptance thresholds `δ ∈ (0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IouThresholdSet {
    deltas: Vec<f64>,
}

impl IouThresholdSet {
    pub fn new(deltas: Vec<f64>) -> Result<Self> {
        if deltas.is_empty() {
            return Err(Error::Empty("IoU threshold set is empty".into()));
        }
        if let Some(d) = deltas.iter().find(|&&d| !(d > 0.0 && d < 1.0)) {
            return Err(Error::Validation(format!("IoU threshold {d} outside (0, 1)")));
        }
        Ok(IouThresholdSet { deltas })
    }

    pub fn single(delta: f64) -> Result<Self> {
        Self::new(vec![delta])
    }

    /// `{0.3, 0.5, 0.7}`, the set used for the V2 box metrics.
    pub fn v2_default() -> Self {
        IouThresholdSet {
            deltas: vec![0.3, 0.5, 0.7],
        }
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }
}
