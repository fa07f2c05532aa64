//! Connected-component labeling of binary masks.
//!
//! 2D planes are handled as `W×H×1` grids: face connectivity then reduces to
//! 4-adjacency and full connectivity to 8-adjacency.

mod sweep;

pub use sweep::{sweep_components, LevelComponents};

use serde::{Deserialize, Serialize};

use crate::grid::{BBox3, Dims3, SegMask};

/// Voxel adjacency used when grouping foreground voxels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    /// Shared faces only: 6 neighbours in 3D, 4 in 2D.
    Face,
    /// Faces, edges and corners: 26 neighbours in 3D, 8 in 2D.
    #[default]
    Full,
}

impl Connectivity {
    /// Parses a neighbour count: 6 or 4 for face, 26 or 8 for full.
    pub fn from_neighbors(n: u32) -> Option<Self> {
        match n {
            6 | 4 => Some(Connectivity::Face),
            26 | 8 => Some(Connectivity::Full),
            _ => None,
        }
    }

    pub fn neighbors_3d(self) -> u32 {
        match self {
            Connectivity::Face => 6,
            Connectivity::Full => 26,
        }
    }

    pub(crate) fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::new();
        for dx in -1isize..=1 {
            for dy in -1isize..=1 {
                for dz in -1isize..=1 {
                    let manhattan = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Connectivity::Face => manhattan == 1,
                        Connectivity::Full => manhattan > 0,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }

    /// Offsets that precede a voxel in raster order.
    fn backward_offsets(self) -> Vec<[isize; 3]> {
        self.offsets()
            .into_iter()
            .filter(|o| (o[0], o[1], o[2]) < (0, 0, 0))
            .collect()
    }
}

#[inline]
pub(crate) fn step(p: Dims3, o: [isize; 3], dims: Dims3) -> Option<Dims3> {
    let mut q = [0usize; 3];
    for i in 0..3 {
        let v = p[i] as isize + o[i];
        if v < 0 || v >= dims[i] as isize {
            return None;
        }
        q[i] = v as usize;
    }
    Some(q)
}

/// Component ids per voxel (0 = background, `1..=K` foreground), assigned in
/// raster order of each component's first voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentLabeling {
    dims: Dims3,
    labels: Vec<u32>,
    sizes: Vec<usize>,
    connectivity: Connectivity,
}

impl ComponentLabeling {
    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// `sizes()[k - 1]` is the voxel count of component `k`.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn connectivity(&self) -> Connectivity {
        self.connectivity
    }

    /// Id of the biggest component; the lowest id wins ties.
    pub fn largest_id(&self) -> Option<u32> {
        let mut best: Option<(usize, u32)> = None;
        for (k, &size) in self.sizes.iter().enumerate() {
            if best.is_none_or(|(s, _)| size > s) {
                best = Some((size, k as u32 + 1));
            }
        }
        best.map(|(_, id)| id)
    }

    pub fn mask_of(&self, id: u32) -> SegMask {
        let data = self.labels.iter().map(|&l| u8::from(l == id)).collect();
        SegMask::new(self.dims, data).expect("labeling dims are valid")
    }
}

/// Two-pass labeling with union-find resolution of provisional labels.
pub fn label_components(mask: &SegMask, conn: Connectivity) -> ComponentLabeling {
    let dims = mask.dims();
    let data = mask.data();
    let grid = mask.grid();
    let backward = conn.backward_offsets();
    let mut labels = vec![0u32; data.len()];
    // parent[l] for provisional label l; index 0 unused.
    let mut parent: Vec<u32> = vec![0];

    fn find(parent: &mut [u32], mut l: u32) -> u32 {
        while parent[l as usize] != l {
            let gp = parent[parent[l as usize] as usize];
            parent[l as usize] = gp;
            l = gp;
        }
        l
    }

    for (i, &v) in data.iter().enumerate() {
        if v == 0 {
            continue;
        }
        let p = grid.coords_of(i);
        let mut current = 0u32;
        for &o in &backward {
            let Some(q) = step(p, o, dims) else { continue };
            let nl = labels[grid.index_of(q)];
            if nl == 0 {
                continue;
            }
            let root = find(&mut parent, nl);
            if current == 0 {
                current = root;
            } else if root != current {
                let (lo, hi) = (root.min(current), root.max(current));
                parent[hi as usize] = lo;
                current = lo;
            }
        }
        if current == 0 {
            current = parent.len() as u32;
            parent.push(current);
        }
        labels[i] = current;
    }

    let mut final_id = vec![0u32; parent.len()];
    let mut sizes = Vec::new();
    for l in labels.iter_mut().filter(|l| **l != 0) {
        let root = find(&mut parent, *l) as usize;
        if final_id[root] == 0 {
            sizes.push(0);
            final_id[root] = sizes.len() as u32;
        }
        *l = final_id[root];
        sizes[*l as usize - 1] += 1;
    }

    ComponentLabeling {
        dims,
        labels,
        sizes,
        connectivity: conn,
    }
}

/// Mask of the component with the most voxels, ties to the lowest id.
pub fn largest_component(lab: &ComponentLabeling) -> Option<SegMask> {
    lab.largest_id().map(|id| lab.mask_of(id))
}

/// One tight box per component, ordered by id.
pub fn component_bboxes(lab: &ComponentLabeling) -> Vec<BBox3> {
    let mut boxes: Vec<Option<BBox3>> = vec![None; lab.count()];
    let d = lab.dims;
    for (i, &l) in lab.labels.iter().enumerate().filter(|(_, &l)| l != 0) {
        let z = i % d[2];
        let rest = i / d[2];
        let p = [rest / d[1], rest % d[1], z];
        match &mut boxes[l as usize - 1] {
            Some(b) => b.include(p),
            slot @ None => *slot = Some(BBox3::point(p)),
        }
    }
    boxes.into_iter().map(|b| b.expect("every id has a voxel")).collect()
}

/// Box around the largest component of `mask`.
pub fn largest_component_bbox(mask: &SegMask, conn: Connectivity) -> Option<BBox3> {
    let lab = label_components(mask, conn);
    let id = lab.largest_id()?;
    Some(component_bboxes(&lab)[id as usize - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{bbox_of, Grid3};

    fn mask_with(dims: Dims3, points: &[Dims3]) -> SegMask {
        let mut g = Grid3::filled(dims, 0u8).unwrap().into_data();
        let probe = Grid3::filled(dims, 0u8).unwrap();
        for &p in points {
            g[probe.index_of(p)] = 1;
        }
        SegMask::new(dims, g).unwrap()
    }

    #[test]
    fn diagonal_pair_depends_on_connectivity() {
        let m = mask_with([2, 2, 2], &[[0, 0, 0], [1, 1, 1]]);
        assert_eq!(label_components(&m, Connectivity::Full).count(), 1);
        assert_eq!(label_components(&m, Connectivity::Face).count(), 2);
    }

    #[test]
    fn blank_and_full_masks() {
        let blank = SegMask::zeros([3, 3, 3]).unwrap();
        let lab = label_components(&blank, Connectivity::Full);
        assert_eq!(lab.count(), 0);
        assert!(largest_component(&lab).is_none());
        assert!(component_bboxes(&lab).is_empty());

        let full = SegMask::new([3, 3, 3], vec![1; 27]).unwrap();
        let lab = label_components(&full, Connectivity::Face);
        assert_eq!(lab.sizes(), &[27]);
    }

    #[test]
    fn largest_picks_biggest_and_breaks_ties_by_raster_order() {
        // Sizes 5, 9, 2 along separate rows of a 12x5x1 plane.
        let mut pts = Vec::new();
        pts.extend((0..5).map(|x| [x, 0, 0]));
        pts.extend((0..9).map(|x| [x, 2, 0]));
        pts.extend((0..2).map(|x| [x, 4, 0]));
        let m = mask_with([12, 5, 1], &pts);
        let lab = label_components(&m, Connectivity::Full);
        assert_eq!(lab.count(), 3);
        let big = largest_component(&lab).unwrap();
        assert_eq!(big.count(), 9);
        assert!(big.grid().get([8, 2, 0]) == 1);

        // Two size-4 components; the one whose first voxel comes first in
        // raster order (x slowest) gets id 1 and wins.
        let m = mask_with(
            [6, 6, 1],
            &[[0, 4, 0], [0, 5, 0], [1, 4, 0], [1, 5, 0], [3, 0, 0], [3, 1, 0], [4, 0, 0], [4, 1, 0]],
        );
        let lab = label_components(&m, Connectivity::Full);
        assert_eq!(lab.sizes(), &[4, 4]);
        assert_eq!(lab.labels()[4], 1);
        assert_eq!(lab.largest_id(), Some(1));
        let big = largest_component(&lab).unwrap();
        assert_eq!(bbox_of(&big).unwrap().min, [0, 4, 0]);
    }

    #[test]
    fn component_boxes() {
        let cube: Vec<Dims3> = (0..8).map(|i| [i >> 2 & 1, i >> 1 & 1, i & 1]).collect();
        let lab = label_components(&mask_with([4, 4, 4], &cube), Connectivity::Face);
        let boxes = component_bboxes(&lab);
        assert_eq!(boxes, vec![BBox3::new([0, 0, 0], [1, 1, 1]).unwrap()]);

        let mut l_shape: Vec<Dims3> = (0..4).map(|x| [x, 0, 0]).collect();
        l_shape.extend((1..3).map(|y| [0, y, 0]));
        let lab = label_components(&mask_with([5, 5, 5], &l_shape), Connectivity::Face);
        assert_eq!(lab.count(), 1);
        assert_eq!(
            component_bboxes(&lab),
            vec![BBox3::new([0, 0, 0], [3, 2, 0]).unwrap()]
        );
    }

    #[test]
    fn neighbour_counts() {
        assert_eq!(Connectivity::Face.offsets().len(), 6);
        assert_eq!(Connectivity::Full.offsets().len(), 26);
        assert_eq!(Connectivity::Full.backward_offsets().len(), 13);
        assert_eq!(Connectivity::from_neighbors(8), Some(Connectivity::Full));
        assert_eq!(Connectivity::from_neighbors(5), None);
    }
}
