use crate::error::{Error, Result};

/// Axis-aligned box in integer voxel coordinates with inclusive bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Aabb<const N: usize> {
    pub min: [usize; N],
    pub max: [usize; N],
}

pub type BBox3 = Aabb<3>;
pub type BBox2 = Aabb<2>;

impl<const N: usize> Aabb<N> {
    pub fn new(min: [usize; N], max: [usize; N]) -> Result<Self> {
        if min.iter().zip(&max).any(|(lo, hi)| lo > hi) {
            return Err(Error::Validation(format!(
                "box min {min:?} exceeds max {max:?}"
            )));
        }
        Ok(Aabb { min, max })
    }

    pub fn point(p: [usize; N]) -> Self {
        Aabb { min: p, max: p }
    }

    #[inline]
    pub fn include(&mut self, p: [usize; N]) {
        for i in 0..N {
            self.min[i] = self.min[i].min(p[i]);
            self.max[i] = self.max[i].max(p[i]);
        }
    }

    #[inline]
    pub fn merge(&mut self, other: &Self) {
        for i in 0..N {
            self.min[i] = self.min[i].min(other.min[i]);
            self.max[i] = self.max[i].max(other.max[i]);
        }
    }

    /// Number of voxels covered.
    pub fn volume(&self) -> u64 {
        (0..N)
            .map(|i| (self.max[i] - self.min[i] + 1) as u64)
            .product()
    }

    pub fn intersection(&self, other: &Self) -> Option<Self> {
        let mut out = *self;
        for i in 0..N {
            out.min[i] = self.min[i].max(other.min[i]);
            out.max[i] = self.max[i].min(other.max[i]);
            if out.min[i] > out.max[i] {
                return None;
            }
        }
        Some(out)
    }

    pub fn contains(&self, p: [usize; N]) -> bool {
        (0..N).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }

    /// Intersection over union counted in whole voxels.
    pub fn iou(&self, other: &Self) -> f64 {
        let inter = self.intersection(other).map_or(0, |b| b.volume());
        let union = self.volume() + other.volume() - inter;
        inter as f64 / union as f64
    }
}

/// IoU where a missing box localizes nothing and scores 0.
pub fn iou<const N: usize>(a: Option<&Aabb<N>>, b: Option<&Aabb<N>>) -> f64 {
    match (a, b) {
        (Some(a), Some(b)) => a.iou(b),
        _ => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Counts shared voxels by enumerating the first box.
    fn enumerated_iou(a: &BBox3, b: &BBox3) -> f64 {
        let mut inter = 0u64;
        for x in a.min[0]..=a.max[0] {
            for y in a.min[1]..=a.max[1] {
                for z in a.min[2]..=a.max[2] {
                    if b.contains([x, y, z]) {
                        inter += 1;
                    }
                }
            }
        }
        inter as f64 / (a.volume() + b.volume() - inter) as f64
    }

    #[test]
    fn identical_boxes() {
        let a = BBox3::new([0, 0, 0], [1, 1, 1]).unwrap();
        assert_eq!(a.iou(&a), 1.0);
    }

    #[test]
    fn corner_touching_cubes() {
        let a = BBox3::new([0, 0, 0], [1, 1, 1]).unwrap();
        let b = BBox3::new([1, 1, 1], [2, 2, 2]).unwrap();
        assert_eq!(enumerated_iou(&a, &b), 1.0 / 15.0);
        assert_eq!(a.iou(&b), 1.0 / 15.0);
    }

    #[test]
    fn half_shifted_slab() {
        let a = BBox3::new([0, 0, 0], [7, 7, 7]).unwrap();
        let b = BBox3::new([4, 0, 0], [11, 7, 7]).unwrap();
        assert_eq!(enumerated_iou(&a, &b), 256.0 / 768.0);
        assert_eq!(a.iou(&b), 1.0 / 3.0);
    }

    #[test]
    fn empty_box_scores_zero() {
        let a = BBox3::new([0, 0, 0], [1, 1, 1]).unwrap();
        assert_eq!(iou(Some(&a), None), 0.0);
        assert_eq!(iou::<3>(None, None), 0.0);
        assert!(BBox3::new([2, 0, 0], [1, 0, 0]).is_err());
    }

    fn arb_box() -> impl Strategy<Value = BBox3> {
        (
            prop::array::uniform3(0usize..6),
            prop::array::uniform3(0usize..4),
        )
            .prop_map(|(min, ext)| BBox3 {
                min,
                max: [min[0] + ext[0], min[1] + ext[1], min[2] + ext[2]],
            })
    }

    proptest! {
        #[test]
        fn iou_matches_enumeration_and_is_symmetric(a in arb_box(), b in arb_box()) {
            let v = a.iou(&b);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, b.iou(&a));
            prop_assert!((v - enumerated_iou(&a, &b)).abs() < 1e-15);
            prop_assert_eq!(v == 1.0, a == b);
        }
    }
}
