//! Voxel-level precision/recall metrics and mass concentration.
//!
//! Per threshold `τ`, `Prec = |{s ≥ τ} ∩ M| / |{s ≥ τ}|` and
//! `Rec = |{s ≥ τ} ∩ M| / |M|`. An empty prediction has precision 1. The
//! precision-recall curve also has an implicit lowest point `τ → 0+` where the
//! prediction is the support `{s > 0}`.
//!
//! AP is the rectangle sum over increasing thresholds where each recall drop
//! `Rec(τ_l) − Rec(τ_{l+1})` is weighted by the precision at the lower
//! threshold `τ_l`; recall above the last threshold is 0.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{maximize, mean, require_samples, EvalSample, F1Result};
use crate::error::{Error, Result};
use crate::grid::{check_axis, SaliencyMap, SegMask, ThresholdGrid};

/// How per-sample precision-recall curves are combined into AP.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApMode {
    /// AP of every sample, averaged.
    #[default]
    PerSample,
    /// AP of the curve obtained by summing voxel counts over all samples.
    Pooled,
}

/// Voxel counts behind a precision-recall curve.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PrCounts {
    /// `|M|`.
    pub gt: u64,
    /// `|{s ≥ τ_l}|` per threshold.
    pub pred: Vec<u64>,
    /// `|{s ≥ τ_l} ∩ M|` per threshold.
    pub tp: Vec<u64>,
    /// `|{s > 0}|`.
    pub support_pred: u64,
    /// `|{s > 0} ∩ M|`.
    pub support_tp: u64,
}

fn ratio(num: u64, den: u64, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        num as f64 / den as f64
    }
}

impl PrCounts {
    fn zeros(levels: usize) -> Self {
        PrCounts {
            pred: vec![0; levels],
            tp: vec![0; levels],
            ..Default::default()
        }
    }

    pub fn levels(&self) -> usize {
        self.pred.len()
    }

    pub fn precision(&self, level: usize) -> f64 {
        ratio(self.tp[level], self.pred[level], 1.0)
    }

    pub fn recall(&self, level: usize) -> f64 {
        ratio(self.tp[level], self.gt, 0.0)
    }

    pub fn f1(&self, level: usize) -> f64 {
        f1(self.precision(level), self.recall(level))
    }

    /// Rectangle-sum average precision, including the `τ → 0+` point.
    /// Recall gains are summed as integer TP gains and divided by `|M|` once,
    /// so a perfectly separating map scores exactly 1.
    pub fn average_precision(&self) -> f64 {
        if self.gt == 0 {
            return 0.0;
        }
        let levels = self.levels();
        let tp = |l: usize| if l < levels { self.tp[l] } else { 0 };
        let mut weighted = ratio(self.support_tp, self.support_pred, 1.0) * (self.support_tp - tp(0)) as f64;
        for l in 0..levels {
            weighted += self.precision(l) * (tp(l) - tp(l + 1)) as f64;
        }
        weighted / self.gt as f64
    }

    fn add(&mut self, other: &PrCounts) {
        self.gt += other.gt;
        self.support_pred += other.support_pred;
        self.support_tp += other.support_tp;
        for (a, b) in self.pred.iter_mut().zip(&other.pred) {
            *a += b;
        }
        for (a, b) in self.tp.iter_mut().zip(&other.tp) {
            *a += b;
        }
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn check_pair(s: &SaliencyMap, m: &SegMask) -> Result<()> {
    if s.dims() != m.dims() {
        return Err(Error::DimensionMismatch {
            expected: m.dims().to_vec(),
            found: s.dims().to_vec(),
        });
    }
    s.ensure_normalized()
}

pub(crate) fn counts_unchecked(s: &[f32], m: &[u8], grid: &ThresholdGrid) -> PrCounts {
    let levels = grid.len();
    // Histogram over "number of thresholds passed", then suffix sums.
    let mut all = vec![0u64; levels + 1];
    let mut hit = vec![0u64; levels + 1];
    let mut out = PrCounts::zeros(levels);
    for (&v, &g) in s.iter().zip(m) {
        let b = grid.level_count(v);
        all[b] += 1;
        let positive = g != 0;
        hit[b] += u64::from(positive);
        out.gt += u64::from(positive);
        if v > 0.0 {
            out.support_pred += 1;
            out.support_tp += u64::from(positive);
        }
    }
    let (mut acc_all, mut acc_hit) = (0u64, 0u64);
    for l in (0..levels).rev() {
        acc_all += all[l + 1];
        acc_hit += hit[l + 1];
        out.pred[l] = acc_all;
        out.tp[l] = acc_hit;
    }
    out
}

/// Precision-recall counts of one sample over `grid`. Errors on an empty
/// ground truth, where recall is undefined.
pub fn pr_counts(s: &SaliencyMap, m: &SegMask, grid: &ThresholdGrid) -> Result<PrCounts> {
    check_pair(s, m)?;
    if m.is_blank() {
        return Err(Error::Validation(
            "precision/recall need a non-empty ground-truth mask".into(),
        ));
    }
    Ok(counts_unchecked(s.data(), m.data(), grid))
}

/// `(precision, recall)` of `{s ≥ τ}` against `m`.
pub fn vx_precision_recall(s: &SaliencyMap, m: &SegMask, tau: f64) -> Result<(f64, f64)> {
    let grid = ThresholdGrid::from_values(vec![tau])?;
    let c = pr_counts(s, m, &grid)?;
    Ok((c.precision(0), c.recall(0)))
}

/// AP over a set of samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApResult {
    pub value: f64,
    pub mode: ApMode,
    /// Per-sample AP of the samples that were scored (empty when pooled).
    pub per_sample: Vec<f64>,
    /// Indices of samples with an empty ground truth.
    pub excluded: Vec<usize>,
}

/// Splits samples into scorable counts and excluded indices.
fn collect_counts(
    samples: &[EvalSample],
    grid: &ThresholdGrid,
) -> Result<(Vec<PrCounts>, Vec<usize>)> {
    require_samples(samples)?;
    let per: Vec<Option<PrCounts>> = samples
        .par_iter()
        .map(|x| {
            x.validate()?;
            Ok((!x.mask.is_blank()).then(|| counts_unchecked(x.saliency.data(), x.mask.data(), grid)))
        })
        .collect::<Result<_>>()?;
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for (i, c) in per.into_iter().enumerate() {
        match c {
            Some(c) => kept.push(c),
            None => excluded.push(i),
        }
    }
    if kept.is_empty() {
        return Err(Error::Empty(
            "every sample has an empty ground-truth mask".into(),
        ));
    }
    Ok((kept, excluded))
}

pub(crate) fn reduce_ap(counts: &[PrCounts], mode: ApMode, excluded: Vec<usize>) -> ApResult {
    match mode {
        ApMode::PerSample => {
            let per_sample: Vec<f64> = counts.iter().map(PrCounts::average_precision).collect();
            ApResult {
                value: mean(per_sample.iter().copied()),
                mode,
                per_sample,
                excluded,
            }
        }
        ApMode::Pooled => {
            let mut total = PrCounts::zeros(counts[0].levels());
            for c in counts {
                total.add(c);
            }
            ApResult {
                value: total.average_precision(),
                mode,
                per_sample: Vec::new(),
                excluded,
            }
        }
    }
}

/// Mean per-sample voxel AP.
pub fn vxap(samples: &[EvalSample], grid: &ThresholdGrid) -> Result<ApResult> {
    vxap_with(samples, grid, ApMode::PerSample)
}

pub fn vxap_with(samples: &[EvalSample], grid: &ThresholdGrid, mode: ApMode) -> Result<ApResult> {
    let (counts, excluded) = collect_counts(samples, grid)?;
    Ok(reduce_ap(&counts, mode, excluded))
}

pub(crate) fn slice_counts(x: &EvalSample, grid: &ThresholdGrid, axis: usize) -> Result<Vec<PrCounts>> {
    check_pair(&x.saliency, &x.mask)?;
    check_axis(axis)?;
    let mut out = Vec::new();
    for i in 0..x.mask.dims()[axis] {
        let m = x.mask.slice(axis, i)?;
        if m.is_blank() {
            continue;
        }
        let s = x.saliency.slice(axis, i)?;
        out.push(counts_unchecked(s.data(), m.data(), grid));
    }
    Ok(out)
}

/// Mean 2D AP over the slices along `axis` that contain ground truth.
pub fn pxap_slicewise(sample: &EvalSample, grid: &ThresholdGrid, axis: usize) -> Result<f64> {
    let counts = slice_counts(sample, grid, axis)?;
    if counts.is_empty() {
        return Err(Error::Empty(
            "no slice along the axis has ground truth".into(),
        ));
    }
    Ok(mean(counts.iter().map(PrCounts::average_precision)))
}

/// Slice-wise PxAP over samples. Per-sample mode averages each volume's
/// slice APs and then the volumes; pooled mode sums the counts of all slices.
pub fn pxap(
    samples: &[EvalSample],
    grid: &ThresholdGrid,
    axis: usize,
    mode: ApMode,
) -> Result<ApResult> {
    require_samples(samples)?;
    let per: Vec<Vec<PrCounts>> = samples
        .par_iter()
        .map(|x| slice_counts(x, grid, axis))
        .collect::<Result<_>>()?;
    reduce_pxap(per, mode)
}

/// Combines the per-slice counts of every sample; samples without any
/// ground-truth slice are excluded.
pub(crate) fn reduce_pxap(per: Vec<Vec<PrCounts>>, mode: ApMode) -> Result<ApResult> {
    let excluded: Vec<usize> = (0..per.len()).filter(|&i| per[i].is_empty()).collect();
    let per: Vec<Vec<PrCounts>> = per.into_iter().filter(|c| !c.is_empty()).collect();
    if per.is_empty() {
        return Err(Error::Empty(
            "no sample has a slice with ground truth".into(),
        ));
    }
    Ok(match mode {
        ApMode::PerSample => {
            let per_sample: Vec<f64> = per
                .iter()
                .map(|c| mean(c.iter().map(PrCounts::average_precision)))
                .collect();
            ApResult {
                value: mean(per_sample.iter().copied()),
                mode,
                per_sample,
                excluded,
            }
        }
        ApMode::Pooled => {
            let flat: Vec<PrCounts> = per.into_iter().flatten().collect();
            reduce_ap(&flat, ApMode::Pooled, excluded)
        }
    })
}

/// Sample-averaged F1 maximized over τ.
pub fn max_f1(samples: &[EvalSample], grid: &ThresholdGrid) -> Result<F1Result> {
    let (counts, excluded) = collect_counts(samples, grid)?;
    Ok(reduce_f1(&counts, grid, excluded))
}

pub(crate) fn reduce_f1(counts: &[PrCounts], grid: &ThresholdGrid, excluded: Vec<usize>) -> F1Result {
    let levels = grid.len();
    let curves: Vec<Vec<f64>> = counts
        .iter()
        .map(|c| (0..levels).map(|l| c.f1(l)).collect())
        .collect();
    let refs: Vec<&[f64]> = curves.iter().map(Vec::as_slice).collect();
    let (best, curve) = maximize(&refs, levels);
    let per_sample_prec: Vec<f64> = counts.iter().map(|c| c.precision(best)).collect();
    let per_sample_rec: Vec<f64> = counts.iter().map(|c| c.recall(best)).collect();
    F1Result {
        max_f1: curve[best],
        tau_f1: grid.values()[best],
        prec_at_f1: mean(per_sample_prec.iter().copied()),
        rec_at_f1: mean(per_sample_rec.iter().copied()),
        per_sample_f1: curves.iter().map(|c| c[best]).collect(),
        per_sample_prec,
        per_sample_rec,
        curve,
        excluded,
    }
}

/// Share of saliency mass inside the slab `[o·L/2, (o+1)·L/2)` along the
/// first axis. `None` when the map has no mass.
pub fn sample_mass_concentration(sample: &EvalSample) -> Result<Option<f64>> {
    let order = sample
        .order
        .ok_or_else(|| Error::Validation("mass concentration needs the sample order".into()))?;
    if order > 1 {
        return Err(Error::Validation(format!("sample order {order} is not 0 or 1")));
    }
    let s = &sample.saliency;
    s.ensure_normalized()?;
    let dims = s.dims();
    if !dims[0].is_multiple_of(2) {
        return Err(Error::Validation(format!(
            "first axis length {} is odd; cannot split into halves",
            dims[0]
        )));
    }
    let half = dims[0] / 2 * dims[1] * dims[2];
    let start = usize::from(order) * half;
    let total = s.total_mass();
    if total == 0.0 {
        return Ok(None);
    }
    let inside: f64 = s.data()[start..start + half].iter().map(|&v| f64::from(v)).sum();
    Ok(Some(inside / total))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub value: f64,
    pub per_sample: Vec<f64>,
    /// Samples whose saliency map has zero total mass.
    pub excluded: Vec<usize>,
}

/// Mean mass concentration over paired samples.
pub fn mass_concentration(samples: &[EvalSample]) -> Result<McResult> {
    require_samples(samples)?;
    let per: Vec<Option<f64>> = samples
        .par_iter()
        .map(sample_mass_concentration)
        .collect::<Result<_>>()?;
    reduce_mc(per)
}

pub(crate) fn reduce_mc(per: Vec<Option<f64>>) -> Result<McResult> {
    let mut per_sample = Vec::new();
    let mut excluded = Vec::new();
    for (i, v) in per.into_iter().enumerate() {
        match v {
            Some(v) => per_sample.push(v),
            None => excluded.push(i),
        }
    }
    if per_sample.is_empty() {
        return Err(Error::Empty("every saliency map has zero mass".into()));
    }
    Ok(McResult {
        value: mean(per_sample.iter().copied()),
        per_sample,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid3;
    use proptest::prelude::*;

    fn mask(dims: [usize; 3], f: impl Fn([usize; 3]) -> bool) -> SegMask {
        SegMask::from_grid(Grid3::from_fn(dims, |p| u8::from(f(p))).unwrap()).unwrap()
    }

    fn constant(dims: [usize; 3], v: f32) -> SaliencyMap {
        SaliencyMap::new(dims, vec![v; dims.iter().product()]).unwrap()
    }

    /// AP by ranking voxels: walk distinct saliency values from the top and
    /// add precision × recall gain at each group. Zero-valued voxels are
    /// never predicted.
    fn ranked_ap(s: &[f32], m: &[u8]) -> f64 {
        let gt = m.iter().filter(|&&g| g != 0).count() as f64;
        let mut order: Vec<usize> = (0..s.len()).filter(|&i| s[i] > 0.0).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
        let (mut seen, mut hits, mut ap) = (0usize, 0usize, 0.0);
        let mut i = 0;
        while i < order.len() {
            let v = s[order[i]];
            let before = hits;
            while i < order.len() && s[order[i]] == v {
                hits += usize::from(m[order[i]] != 0);
                seen += 1;
                i += 1;
            }
            ap += (hits as f64 / seen as f64) * ((hits - before) as f64 / gt);
        }
        ap
    }

    #[test]
    fn precision_recall_examples() {
        let m = mask([4, 4, 4], |p| p[0] == 0);
        assert_eq!(vx_precision_recall(&m.to_saliency(), &m, 0.5).unwrap(), (1.0, 1.0));
        let c = constant([4, 4, 4], 0.5);
        assert_eq!(vx_precision_recall(&c, &m, 0.5).unwrap(), (0.25, 1.0));
        assert_eq!(vx_precision_recall(&c, &m, 0.3).unwrap(), (0.25, 1.0));
        assert_eq!(vx_precision_recall(&c, &m, 0.6).unwrap(), (1.0, 0.0));
        assert!(vx_precision_recall(&c, &SegMask::zeros([4, 4, 4]).unwrap(), 0.5).is_err());
    }

    #[test]
    fn constant_map_scores_gt_fraction() {
        let m = mask([4, 4, 4], |p| p[0] == 0);
        let xs = vec![EvalSample::new(constant([4, 4, 4], 0.5), m)];
        let grid = ThresholdGrid::uniform(101).unwrap();
        assert!((vxap(&xs, &grid).unwrap().value - 0.25).abs() < 1e-12);
        let f = max_f1(&xs, &grid).unwrap();
        assert!((f.max_f1 - 0.4).abs() < 1e-12);
        assert_eq!((f.prec_at_f1, f.rec_at_f1), (0.25, 1.0));
        assert_eq!(f.tau_f1, grid.values()[0]);
    }

    #[test]
    fn perfect_map_scores_one() {
        let m = mask([6, 5, 4], |p| p[0] + p[1] < 4);
        let xs = vec![EvalSample::new(m.to_saliency(), m.clone())];
        let grid = ThresholdGrid::uniform(101).unwrap();
        assert_eq!(vxap(&xs, &grid).unwrap().value, 1.0);
        assert_eq!(vxap_with(&xs, &grid, ApMode::Pooled).unwrap().value, 1.0);
        let f = max_f1(&xs, &grid).unwrap();
        assert_eq!((f.max_f1, f.prec_at_f1, f.rec_at_f1), (1.0, 1.0, 1.0));
        assert_eq!(pxap_slicewise(&xs[0], &grid, 2).unwrap(), 1.0);
    }

    #[test]
    fn empty_ground_truth_is_excluded() {
        let m = mask([3, 3, 3], |p| p == [1, 1, 1]);
        let xs = vec![
            EvalSample::new(m.to_saliency(), m.clone()),
            EvalSample::new(m.to_saliency(), SegMask::zeros([3, 3, 3]).unwrap()),
        ];
        let grid = ThresholdGrid::uniform(10).unwrap();
        let r = vxap(&xs, &grid).unwrap();
        assert_eq!((r.value, r.excluded.clone()), (1.0, vec![1]));
        assert_eq!(max_f1(&xs, &grid).unwrap().excluded, vec![1]);
        assert!(vxap(&xs[1..], &grid).is_err());
        assert!(vxap(&[], &grid).is_err());
    }

    #[test]
    fn slicewise_ap_differs_from_volume_ap_in_general() {
        // Two slices along z; the volume ranking interleaves them.
        let s = SaliencyMap::new([2, 1, 2], vec![0.9, 0.95, 0.8, 0.1]).unwrap();
        let m = SegMask::new([2, 1, 2], vec![1, 0, 0, 1]).unwrap();
        let x = EvalSample::new(s, m);
        let grid = ThresholdGrid::exact_from_maps([&x.saliency]).unwrap();
        let vol = vxap(std::slice::from_ref(&x), &grid).unwrap().value;
        let slices = pxap_slicewise(&x, &grid, 2).unwrap();
        assert!((vol - 0.5).abs() < 1e-12);
        assert!((slices - 0.75).abs() < 1e-12);
        // Pooling the slice counts recovers the volume AP.
        let pooled = pxap(std::slice::from_ref(&x), &grid, 2, ApMode::Pooled).unwrap();
        assert!((pooled.value - vol).abs() < 1e-12);
    }

    #[test]
    fn mass_concentration_examples() {
        let dims = [4, 2, 2];
        let inside = SaliencyMap::from_grid(Grid3::from_fn(dims, |p| if p[0] >= 2 { 0.7 } else { 0.0 }).unwrap());
        let x = EvalSample::new(inside, SegMask::zeros(dims).unwrap()).with_order(1);
        assert_eq!(sample_mass_concentration(&x).unwrap(), Some(1.0));
        let uniform = EvalSample::new(constant(dims, 0.3), SegMask::zeros(dims).unwrap()).with_order(0);
        assert_eq!(sample_mass_concentration(&uniform).unwrap(), Some(0.5));
        let dead = EvalSample::new(constant(dims, 0.0), SegMask::zeros(dims).unwrap()).with_order(0);
        let r = mass_concentration(&[x.clone(), dead]).unwrap();
        assert_eq!((r.value, r.excluded), (1.0, vec![1]));
        let mut unordered = x.clone();
        unordered.order = None;
        assert!(mass_concentration(&[unordered]).is_err());
        let odd = EvalSample::new(constant([3, 2, 2], 0.3), SegMask::zeros([3, 2, 2]).unwrap()).with_order(0);
        assert!(sample_mass_concentration(&odd).is_err());
    }

    fn arb_sample() -> impl Strategy<Value = (Vec<f32>, Vec<u8>, [usize; 3])> {
        prop::array::uniform3(1usize..6).prop_flat_map(|dims| {
            let n = dims.iter().product::<usize>();
            (
                prop::collection::vec((0u8..=10).prop_map(|v| f32::from(v) / 10.0), n),
                prop::collection::vec(0u8..=1, n),
                Just(dims),
            )
        })
    }

    proptest! {
        #[test]
        fn ap_matches_ranking_oracle((s, m, dims) in arb_sample()) {
            prop_assume!(m.iter().any(|&g| g != 0) && s.iter().any(|&v| v > 0.0));
            let x = EvalSample::new(SaliencyMap::new(dims, s.clone()).unwrap(), SegMask::new(dims, m.clone()).unwrap());
            let grid = ThresholdGrid::exact_from_maps([&x.saliency]).unwrap();
            let ap = vxap(std::slice::from_ref(&x), &grid).unwrap().value;
            prop_assert!((ap - ranked_ap(&s, &m)).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&ap));
        }

        #[test]
        fn curves_are_bounded_and_recall_monotone((s, m, dims) in arb_sample()) {
            prop_assume!(m.iter().any(|&g| g != 0));
            let c = pr_counts(&SaliencyMap::new(dims, s).unwrap(), &SegMask::new(dims, m).unwrap(),
                &ThresholdGrid::uniform(13).unwrap()).unwrap();
            for l in 0..c.levels() {
                prop_assert!((0.0..=1.0).contains(&c.precision(l)));
                prop_assert!((0.0..=1.0).contains(&c.recall(l)));
                prop_assert!((0.0..=1.0).contains(&c.f1(l)));
                if l > 0 {
                    prop_assert!(c.recall(l) <= c.recall(l - 1));
                }
            }
            let ap = c.average_precision();
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&ap));
        }

        #[test]
        fn f1_at_optimum_is_consistent((s, m, dims) in arb_sample()) {
            prop_assume!(m.iter().any(|&g| g != 0));
            let x = EvalSample::new(SaliencyMap::new(dims, s).unwrap(), SegMask::new(dims, m).unwrap());
            let r = max_f1(std::slice::from_ref(&x), &ThresholdGrid::uniform(21).unwrap()).unwrap();
            let (p, q) = (r.per_sample_prec[0], r.per_sample_rec[0]);
            prop_assert!((f1(p, q) - r.per_sample_f1[0]).abs() < 1e-12);
            prop_assert!(r.curve.iter().all(|&v| v <= r.max_f1));
        }
    }
}
