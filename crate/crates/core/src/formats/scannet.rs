//! ScanNet point clouds with instance labels resolved from the
//! `.aggregation.json` and `.segs.json` sidecars.

use std::collections::HashMap;

use serde::Deserialize;

use super::ply::read_ply_vertices;
use crate::error::{Error, Result};

const NAME: &str = "ScanNet";

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    /// Instance id per point, `None` when the point's segment is unassigned.
    pub instance: Vec<Option<u32>>,
    /// Index into `label_names` per point.
    pub semantic: Vec<Option<u32>>,
    pub label_names: Vec<String>,
}

impl PointCloud {
    pub fn unlabeled(points: Vec<[f64; 3]>) -> Self {
        let n = points.len();
        PointCloud {
            points,
            instance: vec![None; n],
            semantic: vec![None; n],
            label_names: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Instance ids present, ascending, each with its label name.
    pub fn instances(&self) -> Vec<(u32, Option<&str>)> {
        let mut seen: Vec<(u32, Option<u32>)> = self
            .instance
            .iter()
            .zip(&self.semantic)
            .filter_map(|(i, s)| i.map(|i| (i, *s)))
            .collect();
        seen.sort_unstable();
        seen.dedup_by_key(|(i, _)| *i);
        seen.into_iter()
            .map(|(i, s)| (i, s.map(|s| self.label_names[s as usize].as_str())))
            .collect()
    }

    pub fn instance_points(&self, id: u32) -> Vec<[f64; 3]> {
        self.points
            .iter()
            .zip(&self.instance)
            .filter(|(_, i)| **i == Some(id))
            .map(|(p, _)| *p)
            .collect()
    }
}

#[derive(Deserialize)]
struct Aggregation {
    #[serde(rename = "segGroups", default)]
    seg_groups: Vec<SegGroup>,
}

#[derive(Deserialize)]
struct SegGroup {
    id: u32,
    #[serde(rename = "objectId")]
    object_id: Option<u32>,
    #[serde(default)]
    segments: Vec<i64>,
    #[serde(default)]
    label: Option<String>,
}

#[derive(Deserialize)]
struct Segs {
    #[serde(rename = "segIndices")]
    seg_indices: Vec<i64>,
}

/// Reads a PLY point cloud and attaches instance and label ids through
/// segment membership.
pub fn read_ply_with_instances(ply: &[u8], aggregation: &[u8], segs: &[u8]) -> Result<PointCloud> {
    let points = read_ply_vertices(ply)?;
    let agg: Aggregation = serde_json::from_slice(aggregation)
        .map_err(|e| Error::format(NAME, format!("aggregation json: {e}")))?;
    let segs: Segs = serde_json::from_slice(segs)
        .map_err(|e| Error::format(NAME, format!("segs json: {e}")))?;
    if segs.seg_indices.len() != points.len() {
        return Err(Error::format(
            NAME,
            format!(
                "segs json has {} entries for {} vertices",
                segs.seg_indices.len(),
                points.len()
            ),
        ));
    }
    let known: std::collections::HashSet<i64> = segs.seg_indices.iter().copied().collect();

    let mut label_names: Vec<String> = Vec::new();
    let mut owner: HashMap<i64, (u32, Option<u32>)> = HashMap::new();
    for g in &agg.seg_groups {
        let instance = g.object_id.unwrap_or(g.id);
        let label = g.label.as_ref().map(|l| {
            match label_names.iter().position(|n| n == l) {
                Some(i) => i as u32,
                None => {
                    label_names.push(l.clone());
                    (label_names.len() - 1) as u32
                }
            }
        });
        for &s in &g.segments {
            if !known.contains(&s) {
                return Err(Error::format(
                    NAME,
                    format!("aggregation group {} references unknown segment {s}", g.id),
                ));
            }
            if let Some((other, _)) = owner.insert(s, (instance, label)) {
                if other != instance {
                    return Err(Error::format(
                        NAME,
                        format!("segment {s} belongs to instances {other} and {instance}"),
                    ));
                }
            }
        }
    }
    let (instance, semantic) = segs
        .seg_indices
        .iter()
        .map(|s| owner.get(s).map_or((None, None), |&(i, l)| (Some(i), l)))
        .unzip();
    Ok(PointCloud {
        points,
        instance,
        semantic,
        label_names,
    })
}
