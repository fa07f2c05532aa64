//! Box accuracy metrics.
//!
//! `box(s, τ)` is the box around the largest connected component of
//! `{s ≥ τ}` and `B(x)` the box around the largest ground-truth component.
//! The V2 variants accept a sample when any pair of prediction and
//! ground-truth component boxes overlaps by at least δ. The 2D baselines run
//! the same computation independently on every slice along one axis.

use rayon::prelude::*;

use super::{maximize, mean, require_samples, EvalSample, MetricId, WsolResult};
use crate::components::{
    component_bboxes, label_components, largest_component_bbox, sweep_components, Connectivity,
};
use crate::error::{Error, Result};
use crate::grid::{check_axis, iou, threshold, BBox3, IouThresholdSet, SaliencyMap, SegMask, ThresholdGrid};

/// IoU between predicted and ground-truth boxes at every threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeBoxCurve {
    /// `IoU(box(s, τ), B(x))`.
    pub largest_iou: Vec<f64>,
    /// `max_{j,k} IoU(box^j(s, τ), B^k(x))`.
    pub best_pair_iou: Vec<f64>,
}

impl VolumeBoxCurve {
    pub fn indicators(&self, delta: f64) -> Vec<f64> {
        self.largest_iou.iter().map(|&v| indicator(v, delta)).collect()
    }

    /// Pairwise indicator averaged over the δ set.
    pub fn indicators_v2(&self, deltas: &IouThresholdSet) -> Vec<f64> {
        self.best_pair_iou
            .iter()
            .map(|&v| mean(deltas.deltas().iter().map(|&d| indicator(v, d))))
            .collect()
    }
}

#[inline]
fn indicator(iou: f64, delta: f64) -> f64 {
    if iou >= delta {
        1.0
    } else {
        0.0
    }
}

fn best_pair(pred: impl Iterator<Item = BBox3>, gt: &[BBox3]) -> f64 {
    let mut best = 0.0f64;
    for p in pred {
        for g in gt {
            best = best.max(p.iou(g));
        }
        if best == 1.0 {
            break;
        }
    }
    best
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

fn curve_unchecked(
    s: &SaliencyMap,
    m: &SegMask,
    grid: &ThresholdGrid,
    conn: Connectivity,
) -> Result<VolumeBoxCurve> {
    let gt_lab = label_components(m, conn);
    let gt_boxes = component_bboxes(&gt_lab);
    let gt_largest = gt_lab.largest_id().map(|id| gt_boxes[id as usize - 1]);

    let mut largest_iou = vec![0.0; grid.len()];
    let mut best_pair_iou = vec![0.0; grid.len()];
    sweep_components(s, grid, conn, |level, comps| {
        largest_iou[level] = iou(comps.largest().as_ref(), gt_largest.as_ref());
        best_pair_iou[level] = best_pair(comps.boxes(), &gt_boxes);
    })?;
    Ok(VolumeBoxCurve {
        largest_iou,
        best_pair_iou,
    })
}

/// Box IoUs of one volume at every threshold of `grid`.
pub fn volume_box_curve(
    s: &SaliencyMap,
    m: &SegMask,
    grid: &ThresholdGrid,
    conn: Connectivity,
) -> Result<VolumeBoxCurve> {
    check_pair(s, m)?;
    if m.is_blank() {
        return Err(Error::Validation(
            "box metrics need a non-empty ground-truth mask".into(),
        ));
    }
    curve_unchecked(s, m, grid, conn)
}

/// Slice-averaged indicators of one volume for the 2D baselines.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceBoxCurve {
    /// Per-threshold fraction of evaluated slices passing `δ`.
    pub v1: Vec<f64>,
    /// Per-threshold mean over slices and over the δ set.
    pub v2: Vec<f64>,
    pub evaluated_slices: usize,
}

/// Runs the box metrics slice by slice along `axis`, skipping slices with an
/// empty ground truth. `None` when no slice has ground truth.
pub fn slice_box_curve(
    s: &SaliencyMap,
    m: &SegMask,
    grid: &ThresholdGrid,
    conn: Connectivity,
    axis: usize,
    delta: f64,
    deltas: &IouThresholdSet,
) -> Result<Option<SliceBoxCurve>> {
    check_pair(s, m)?;
    check_axis(axis)?;
    let levels = grid.len();
    let mut v1 = vec![0.0; levels];
    let mut v2 = vec![0.0; levels];
    let mut evaluated = 0usize;
    for index in 0..m.dims()[axis] {
        let gt = m.slice(axis, index)?;
        if gt.is_blank() {
            continue;
        }
        let curve = curve_unchecked(&s.slice(axis, index)?, &gt, grid, conn)?;
        for (acc, v) in v1.iter_mut().zip(curve.indicators(delta)) {
            *acc += v;
        }
        for (acc, v) in v2.iter_mut().zip(curve.indicators_v2(deltas)) {
            *acc += v;
        }
        evaluated += 1;
    }
    if evaluated == 0 {
        return Ok(None);
    }
    for v in v1.iter_mut().chain(v2.iter_mut()) {
        *v /= evaluated as f64;
    }
    Ok(Some(SliceBoxCurve {
        v1,
        v2,
        evaluated_slices: evaluated,
    }))
}

/// Reduces per-sample score curves to a [`WsolResult`].
pub fn reduce_curves(
    metric: MetricId,
    curves: &[Vec<f64>],
    grid: &ThresholdGrid,
    deltas: Vec<f64>,
    excluded: Vec<usize>,
) -> Result<WsolResult> {
    if curves.is_empty() {
        return Err(Error::Empty(format!("no samples left to score {metric:?}")));
    }
    let refs: Vec<&[f64]> = curves.iter().map(Vec::as_slice).collect();
    let (best, curve) = maximize(&refs, grid.len());
    let per_sample: Vec<f64> = curves.iter().map(|c| c[best]).collect();
    Ok(WsolResult {
        metric,
        value: mean(per_sample.iter().copied()),
        best_tau: grid.values()[best],
        deltas,
        per_sample,
        curve,
        excluded,
    })
}

fn volume_curves(
    samples: &[EvalSample],
    grid: &ThresholdGrid,
    conn: Connectivity,
) -> Result<Vec<VolumeBoxCurve>> {
    require_samples(samples)?;
    if grid.is_empty() {
        return Err(Error::Empty("threshold grid is empty".into()));
    }
    samples
        .par_iter()
        .map(|x| volume_box_curve(&x.saliency, &x.mask, grid, conn))
        .collect()
}

fn single_threshold_check(samples: &[EvalSample], tau: f64, delta: f64) -> Result<()> {
    require_samples(samples)?;
    IouThresholdSet::single(delta)?;
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Validation(format!("threshold {tau} outside (0, 1]")));
    }
    for x in samples {
        x.validate()?;
        if x.mask.is_blank() {
            return Err(Error::Validation(
                "box metrics need a non-empty ground-truth mask".into(),
            ));
        }
    }
    Ok(())
}

/// Fraction of samples whose largest predicted component box reaches IoU δ
/// with the largest ground-truth component box, at a single threshold.
pub fn box_acc_3d(samples: &[EvalSample], tau: f64, delta: f64, conn: Connectivity) -> Result<f64> {
    single_threshold_check(samples, tau, delta)?;
    let hits = samples.iter().map(|x| {
        let pred = largest_component_bbox(&threshold(&x.saliency, tau)?, conn);
        let gt = largest_component_bbox(&x.mask, conn);
        Ok(indicator(iou(pred.as_ref(), gt.as_ref()), delta))
    });
    Ok(mean(hits.collect::<Result<Vec<_>>>()?))
}

/// Pairwise variant of [`box_acc_3d`] at a single threshold.
pub fn box_acc_3d_v2(samples: &[EvalSample], tau: f64, delta: f64, conn: Connectivity) -> Result<f64> {
    single_threshold_check(samples, tau, delta)?;
    let hits = samples.iter().map(|x| {
        let pred = component_bboxes(&label_components(&threshold(&x.saliency, tau)?, conn));
        let gt = component_bboxes(&label_components(&x.mask, conn));
        Ok(indicator(best_pair(pred.into_iter(), &gt), delta))
    });
    Ok(mean(hits.collect::<Result<Vec<_>>>()?))
}

/// `max_τ 3DBoxAcc(τ, δ)`.
pub fn max_3d_box_acc(
    samples: &[EvalSample],
    grid: &ThresholdGrid,
    delta: f64,
    conn: Connectivity,
) -> Result<WsolResult> {
    IouThresholdSet::single(delta)?;
    let curves: Vec<Vec<f64>> = volume_curves(samples, grid, conn)?
        .iter()
        .map(|c| c.indicators(delta))
        .collect();
    reduce_curves(MetricId::Max3DBoxAcc, &curves, grid, vec![delta], Vec::new())
}

/// `max_τ mean_δ 3DBoxAccV2(τ, δ)`.
pub fn max_3d_box_acc_v2(
    samples: &[EvalSample],
    grid: &ThresholdGrid,
    deltas: &IouThresholdSet,
    conn: Connectivity,
) -> Result<WsolResult> {
    let curves: Vec<Vec<f64>> = volume_curves(samples, grid, conn)?
        .iter()
        .map(|c| c.indicators_v2(deltas))
        .collect();
    reduce_curves(
        MetricId::Max3DBoxAccV2,
        &curves,
        grid,
        deltas.deltas().to_vec(),
        Vec::new(),
    )
}

fn slice_curves(
    samples: &[EvalSample],
    grid: &ThresholdGrid,
    conn: Connectivity,
    axis: usize,
    delta: f64,
    deltas: &IouThresholdSet,
) -> Result<Vec<Option<SliceBoxCurve>>> {
    require_samples(samples)?;
    samples
        .par_iter()
        .map(|x| slice_box_curve(&x.saliency, &x.mask, grid, conn, axis, delta, deltas))
        .collect()
}

fn split_excluded(
    curves: Vec<Option<SliceBoxCurve>>,
    pick: impl Fn(SliceBoxCurve) -> Vec<f64>,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for (i, c) in curves.into_iter().enumerate() {
        match c {
            Some(c) => kept.push(pick(c)),
            None => excluded.push(i),
        }
    }
    (kept, excluded)
}

/// Slice-wise 2D `MaxBoxAcc`, one τ shared by all slices of all volumes.
pub fn max_box_acc_2d(
    samples: &[EvalSample],
    grid: &ThresholdGrid,
    delta: f64,
    conn: Connectivity,
    axis: usize,
) -> Result<WsolResult> {
    let unused = IouThresholdSet::single(delta)?;
    let (curves, excluded) = split_excluded(
        slice_curves(samples, grid, conn, axis, delta, &unused)?,
        |c| c.v1,
    );
    reduce_curves(MetricId::MaxBoxAcc, &curves, grid, vec![delta], excluded)
}

/// Slice-wise 2D `MaxBoxAccV2`.
pub fn max_box_acc_2d_v2(
    samples: &[EvalSample],
    grid: &ThresholdGrid,
    deltas: &IouThresholdSet,
    conn: Connectivity,
    axis: usize,
) -> Result<WsolResult> {
    let (curves, excluded) = split_excluded(
        slice_curves(samples, grid, conn, axis, deltas.deltas()[0], deltas)?,
        |c| c.v2,
    );
    reduce_curves(
        MetricId::MaxBoxAccV2,
        &curves,
        grid,
        deltas.deltas().to_vec(),
        excluded,
    )
}
