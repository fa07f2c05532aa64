//! Components of every superlevel set `{s ≥ τ}` of a saliency map in one pass.
//!
//! Thresholded sets are nested, so instead of relabeling the volume once per
//! threshold, voxels are inserted from the highest threshold level down and
//! merged into a union-find forest. Each live component carries its size,
//! its first voxel in raster order and its bounding box, which is all the box
//! metrics need. Results at every level are identical to thresholding and
//! calling [`label_components`](super::label_components).

use super::{step, Connectivity};
use crate::error::{Error, Result};
use crate::grid::{BBox3, SaliencyMap, ThresholdGrid};

const ABSENT: u32 = u32::MAX;
const ROOT: u32 = 1 << 31;

#[derive(Clone, Debug)]
struct Component {
    size: u32,
    first: u32,
    bbox: BBox3,
    active_pos: u32,
}

impl Component {
    /// Ordering used to pick the largest component: size, then earliest voxel.
    #[inline]
    fn key(&self) -> (u32, std::cmp::Reverse<u32>) {
        (self.size, std::cmp::Reverse(self.first))
    }
}

/// Components alive at one threshold level.
pub struct LevelComponents<'a> {
    slots: &'a [Component],
    active: &'a [u32],
    largest: Option<u32>,
}

impl LevelComponents<'_> {
    pub fn count(&self) -> usize {
        self.active.len()
    }

    /// Box of the largest component (ties to the earliest in raster order).
    pub fn largest(&self) -> Option<BBox3> {
        self.largest.map(|s| self.slots[s as usize].bbox)
    }

    pub fn largest_size(&self) -> usize {
        self.largest.map_or(0, |s| self.slots[s as usize].size as usize)
    }

    /// Boxes of all components, in no particular order.
    pub fn boxes(&self) -> impl Iterator<Item = BBox3> + '_ {
        self.active.iter().map(|&s| self.slots[s as usize].bbox)
    }
}

struct Forest {
    parent: Vec<u32>,
    slots: Vec<Component>,
    free: Vec<u32>,
    active: Vec<u32>,
    largest: Option<u32>,
}

impl Forest {
    #[inline]
    fn find(&mut self, mut i: u32) -> u32 {
        loop {
            let p = self.parent[i as usize];
            if p & ROOT != 0 {
                return i;
            }
            let gp = self.parent[p as usize];
            if gp & ROOT != 0 {
                return p;
            }
            self.parent[i as usize] = gp;
            i = gp;
        }
    }

    #[inline]
    fn slot_of(&self, root: u32) -> u32 {
        self.parent[root as usize] & !ROOT
    }

    fn offer_largest(&mut self, slot: u32) {
        let better = match self.largest {
            None => true,
            Some(b) => self.slots[slot as usize].key() > self.slots[b as usize].key(),
        };
        if better {
            self.largest = Some(slot);
        }
    }

    fn new_component(&mut self, voxel: u32, p: [usize; 3]) {
        let comp = Component {
            size: 1,
            first: voxel,
            bbox: BBox3::point(p),
            active_pos: self.active.len() as u32,
        };
        let slot = match self.free.pop() {
            Some(s) => {
                self.slots[s as usize] = comp;
                s
            }
            None => {
                self.slots.push(comp);
                (self.slots.len() - 1) as u32
            }
        };
        self.active.push(slot);
        self.parent[voxel as usize] = ROOT | slot;
        self.offer_largest(slot);
    }

    fn attach(&mut self, voxel: u32, p: [usize; 3], root: u32) {
        self.parent[voxel as usize] = root;
        let slot = self.slot_of(root);
        let c = &mut self.slots[slot as usize];
        c.size += 1;
        c.first = c.first.min(voxel);
        c.bbox.include(p);
        self.offer_largest(slot);
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (sa, sb) = (self.slot_of(a), self.slot_of(b));
        let (keep, drop, keep_slot, drop_slot) =
            if self.slots[sa as usize].size >= self.slots[sb as usize].size {
                (a, b, sa, sb)
            } else {
                (b, a, sb, sa)
            };
        let gone = self.slots[drop_slot as usize].clone();
        {
            let c = &mut self.slots[keep_slot as usize];
            c.size += gone.size;
            c.first = c.first.min(gone.first);
            c.bbox.merge(&gone.bbox);
        }
        self.parent[drop as usize] = keep;

        let pos = gone.active_pos as usize;
        self.active.swap_remove(pos);
        if let Some(&moved) = self.active.get(pos) {
            self.slots[moved as usize].active_pos = pos as u32;
        }
        self.free.push(drop_slot);
        if self.largest == Some(drop_slot) {
            self.largest = Some(keep_slot);
        }
        self.offer_largest(keep_slot);
        keep
    }
}

#[inline]
fn coords(i: usize, dims: [usize; 3]) -> [usize; 3] {
    let rest = i / dims[2];
    [rest / dims[1], rest % dims[1], i % dims[2]]
}

fn earlier_masks<T: Copy + Ord + Default>(
    bucket_of: &[T],
    dims: [usize; 3],
    offsets: &[[isize; 3]],
    deltas: &[isize],
) -> Vec<u32> {
    let n = bucket_of.len();
    // Bit k of `earlier[i]` is set when neighbour k is inserted before voxel
    // i: a higher bucket, or the same bucket and earlier in raster order.
    // Computed in one raster pass so the sweep itself touches one word.
    let mut earlier = vec![0u32; n];
    let slow = |i: usize, p: [usize; 3]| {
        let b = bucket_of[i];
        let mut mask = 0u32;
        for (k, o) in offsets.iter().enumerate() {
            if let Some(q) = step(p, *o, dims) {
                let q = (q[0] * dims[1] + q[1]) * dims[2] + q[2];
                let bq = bucket_of[q];
                mask |= u32::from(bq > b || (bq == b && q < i)) << k;
            }
        }
        mask
    };
    for x in 0..dims[0] {
        for y in 0..dims[1] {
            let row = (x * dims[1] + y) * dims[2];
            let inner_row = x > 0 && x + 1 < dims[0] && y > 0 && y + 1 < dims[1];
            for z in 0..dims[2] {
                let i = row + z;
                let b = bucket_of[i];
                if b == T::default() {
                    continue;
                }
                earlier[i] = if inner_row && z > 0 && z + 1 < dims[2] {
                    let mut mask = 0u32;
                    for (k, &d) in deltas.iter().enumerate() {
                        let bq = bucket_of[(i as isize + d) as usize];
                        mask |= u32::from(bq > b || (bq == b && d < 0)) << k;
                    }
                    mask
                } else {
                    slow(i, [x, y, z])
                };
            }
        }
    }
    earlier
}

/// Visits the components of `{map ≥ τ}` for every threshold of `grid`, from
/// the highest threshold down. `visit` receives the threshold index.
pub fn sweep_components(
    map: &SaliencyMap,
    grid: &ThresholdGrid,
    conn: Connectivity,
    mut visit: impl FnMut(usize, &LevelComponents<'_>),
) -> Result<()> {
    let dims = map.dims();
    let n = map.data().len();
    if n >= ROOT as usize {
        return Err(Error::Validation(format!(
            "volume of {n} voxels is too large for the threshold sweep"
        )));
    }
    let levels = grid.len();

    // Counting sort of voxels by the number of thresholds they pass.
    let mut bucket_of = Vec::with_capacity(n);
    let mut counts = vec![0u32; levels + 2];
    for &v in map.data() {
        let b = grid.level_count(v);
        bucket_of.push(b as u32);
        counts[b + 1] += 1;
    }
    for b in 1..counts.len() {
        counts[b] += counts[b - 1];
    }
    let mut order = vec![0u32; n];
    for (i, &b) in bucket_of.iter().enumerate() {
        let slot = &mut counts[b as usize];
        order[*slot as usize] = i as u32;
        *slot += 1;
    }
    // counts[b] is now the end of bucket b.

    let offsets = conn.offsets();
    let deltas: Vec<isize> = offsets
        .iter()
        .map(|o| (o[0] * dims[1] as isize + o[1]) * dims[2] as isize + o[2])
        .collect();
    // Neighbours adjacent to each other are already joined by the time both
    // are present, so a neighbour touching one already looked up is skipped.
    let adjacent: Vec<u32> = offsets
        .iter()
        .map(|a| {
            offsets.iter().enumerate().fold(0u32, |m, (j, b)| {
                let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
                if offsets.contains(&d) {
                    m | 1 << j
                } else {
                    m
                }
            })
        })
        .collect();

    // Narrow bucket ids keep the neighbourhood pass in cache.
    let earlier = if levels < u8::MAX as usize {
        let narrow: Vec<u8> = bucket_of.iter().map(|&b| b as u8).collect();
        drop(bucket_of);
        earlier_masks(&narrow, dims, &offsets, &deltas)
    } else {
        earlier_masks(&bucket_of, dims, &offsets, &deltas)
    };

    let mut forest = Forest {
        parent: vec![ABSENT; n],
        slots: Vec::new(),
        free: Vec::new(),
        active: Vec::new(),
        largest: None,
    };
    let mut roots: Vec<u32> = Vec::with_capacity(offsets.len());

    for level in (0..levels).rev() {
        // Voxels passing exactly `level + 1` thresholds join at this level.
        let bucket = level + 1;
        let (start, end) = (counts[bucket - 1] as usize, counts[bucket] as usize);
        for &voxel in &order[start..end] {
            let i = voxel as usize;
            let p = coords(i, dims);
            let mut left = earlier[i];
            let mut covered = 0u32;
            roots.clear();
            while left != 0 {
                let k = left.trailing_zeros() as usize;
                left &= left - 1;
                let joined = adjacent[k] & covered != 0;
                covered |= 1 << k;
                if joined {
                    continue;
                }
                let r = forest.find((i as isize + deltas[k]) as u32);
                if !roots.contains(&r) {
                    roots.push(r);
                }
            }

            match roots.split_first() {
                None => forest.new_component(voxel, p),
                Some((&first, rest)) => {
                    forest.attach(voxel, p, first);
                    let mut root = first;
                    for &r in rest {
                        root = forest.union(root, r);
                    }
                }
            }
        }
        visit(
            level,
            &LevelComponents {
                slots: &forest.slots,
                active: &forest.active,
                largest: forest.largest,
            },
        );
    }
    Ok(())
}
