//! Dataset-level evaluation: pairing saliency files with ground truth,
//! running every selected metric in one pass per sample, and reporting.

mod report;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{emit_report, MetricReport, MetricResults, ReportFormat};

use crate::components::Connectivity;
use crate::datasets::{Dataset, Exclusion, ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::formats::{read_file, read_sev};
use crate::grid::{IouThresholdSet, SaliencyMap, ThresholdGrid};
use crate::metrics::wsol::{reduce_curves, slice_box_curve, volume_box_curve, SliceBoxCurve, VolumeBoxCurve};
use crate::metrics::wsss::{
    counts_unchecked, reduce_ap, reduce_f1, reduce_mc, reduce_pxap, sample_mass_concentration, slice_counts,
};
use crate::metrics::{ApMode, EvalSample, MetricId, PrCounts};

/// Threshold grid selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauGridSpec {
    /// `τ = k/n` for `k = 1..=n`.
    Uniform(usize),
    /// Every distinct positive saliency value across the evaluated maps.
    Exact,
}

impl Default for TauGridSpec {
    fn default() -> Self {
        TauGridSpec::Uniform(ThresholdGrid::DEFAULT_STEPS)
    }
}

impl TauGridSpec {
    pub fn build<'a>(self, maps: impl IntoIterator<Item = &'a SaliencyMap>) -> Result<ThresholdGrid> {
        match self {
            TauGridSpec::Uniform(n) => ThresholdGrid::uniform(n),
            TauGridSpec::Exact => ThresholdGrid::exact_from_maps(maps),
        }
    }
}

impl fmt::Display for TauGridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauGridSpec::Uniform(n) => write!(f, "uniform:{n}"),
            TauGridSpec::Exact => f.write_str("exact"),
        }
    }
}

impl FromStr for TauGridSpec {
    type Err = Error;

    /// `uniform:N`, `uniform` (101 steps) or `exact`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "exact" => Ok(TauGridSpec::Exact),
            None if s == "uniform" => Ok(TauGridSpec::default()),
            Some(("uniform", n)) => n
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .map(TauGridSpec::Uniform)
                .ok_or_else(|| Error::Validation(format!("bad uniform step count {n:?}"))),
            _ => Err(Error::Validation(format!(
                "threshold grid {s:?} is not uniform:N or exact"
            ))),
        }
    }
}

/// Everything that controls a metric run, independent of where data lives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub metrics: Vec<MetricId>,
    pub tau_grid: TauGridSpec,
    /// δ for `Max3DBoxAcc` and `MaxBoxAcc`.
    pub box_delta: f64,
    /// Δ for the V2 box metrics.
    pub deltas: Vec<f64>,
    pub connectivity: Connectivity,
    /// Slicing axis for the 2D baselines.
    pub slice_axis: usize,
    pub ap_mode: ApMode,
    /// Min-max normalize saliency files per volume when loading them.
    pub normalize: bool,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            metrics: vec![
                MetricId::Max3DBoxAcc,
                MetricId::Max3DBoxAccV2,
                MetricId::VxAP,
                MetricId::MaxF1,
                MetricId::MaxBoxAcc,
                MetricId::MaxBoxAccV2,
            ],
            tau_grid: TauGridSpec::default(),
            box_delta: 0.5,
            deltas: IouThresholdSet::v2_default().deltas().to_vec(),
            connectivity: Connectivity::Full,
            slice_axis: 2,
            ap_mode: ApMode::PerSample,
            normalize: true,
            workers: 0,
        }
    }
}

impl EvalOptions {
    fn wants(&self, m: MetricId) -> bool {
        self.metrics.contains(&m)
    }

    pub fn validate(&self) -> Result<()> {
        IouThresholdSet::single(self.box_delta)?;
        IouThresholdSet::new(self.deltas.clone())?;
        crate::grid::check_axis(self.slice_axis)?;
        Ok(())
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::Validation(format!("cannot start worker pool: {e}")))
    }
}

/// A run over a dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub manifest: PathBuf,
    pub saliency_dir: PathBuf,
    /// Restrict to one split; all samples otherwise.
    pub split: Option<Split>,
    pub options: EvalOptions,
}

/// Saliency maps matched with their ground truth.
#[derive(Debug, Default)]
pub struct PairedInputs {
    pub ids: Vec<String>,
    pub samples: Vec<EvalSample>,
    /// Samples deliberately not evaluated (negatives).
    pub exclusions: Vec<Exclusion>,
    /// Samples that should have been evaluated but failed to load.
    pub errors: Vec<Exclusion>,
}

/// Reads a saliency file as a single-channel map.
pub fn load_saliency(path: &Path, normalize: bool) -> Result<SaliencyMap> {
    let grid = read_sev(&read_file(path)?)?.grid;
    if grid.channels() != 1 {
        return Err(Error::Validation(format!(
            "saliency map {} has {} channels",
            path.display(),
            grid.channels()
        )));
    }
    let map = SaliencyMap::from_grid(grid.channel(0)?);
    if normalize {
        map.normalize()
    } else {
        Ok(map)
    }
}

enum Loaded {
    Pair(EvalSample),
    Negative,
}

fn load_pair(ds: &Dataset, e: &ManifestEntry, saliency_dir: &Path, normalize: bool) -> Result<Loaded> {
    if !e.positive {
        return Ok(Loaded::Negative);
    }
    let mask = ds.load_mask(e)?;
    if mask.is_blank() {
        return Ok(Loaded::Negative);
    }
    let path = saliency_dir.join(format!("{}.sev", e.id));
    if !path.is_file() {
        return Err(Error::Validation(format!("missing saliency file {}", path.display())));
    }
    let saliency = load_saliency(&path, normalize)?;
    if saliency.dims() != mask.dims() {
        return Err(Error::DimensionMismatch {
            expected: mask.dims().to_vec(),
            found: saliency.dims().to_vec(),
        });
    }
    let mut x = EvalSample::new(saliency, mask);
    x.order = e.order;
    Ok(Loaded::Pair(x))
}

/// Pairs every manifest entry with `{saliency_dir}/{id}.sev`.
pub fn pair_inputs(ds: &Dataset, saliency_dir: &Path, split: Option<Split>, normalize: bool) -> PairedInputs {
    let entries: Vec<&ManifestEntry> = ds
        .manifest
        .samples
        .iter()
        .filter(|e| split.is_none_or(|s| e.split == s))
        .collect();
    let loaded: Vec<Result<Loaded>> = entries
        .par_iter()
        .map(|e| load_pair(ds, e, saliency_dir, normalize))
        .collect();
    let mut out = PairedInputs::default();
    for (e, r) in entries.into_iter().zip(loaded) {
        match r {
            Ok(Loaded::Pair(x)) => {
                out.ids.push(e.id.clone());
                out.samples.push(x);
            }
            Ok(Loaded::Negative) => out
                .exclusions
                .push(Exclusion::new(&e.id, "negative sample: empty ground-truth mask")),
            Err(err) => out.errors.push(Exclusion::new(&e.id, err.to_string())),
        }
    }
    out
}

/// Per-sample intermediate results for every selected metric.
#[derive(Default)]
struct SampleWork {
    volume: Option<VolumeBoxCurve>,
    slices: Option<Option<SliceBoxCurve>>,
    counts: Option<PrCounts>,
    slice_counts: Option<Vec<PrCounts>>,
    mass: Option<Option<f64>>,
    seconds: f64,
}

fn sample_work(x: &EvalSample, grid: &ThresholdGrid, opts: &EvalOptions, deltas: &IouThresholdSet) -> Result<SampleWork> {
    let start = Instant::now();
    x.validate()?;
    let mut w = SampleWork::default();
    let conn = opts.connectivity;
    if opts.wants(MetricId::Max3DBoxAcc) || opts.wants(MetricId::Max3DBoxAccV2) {
        w.volume = Some(volume_box_curve(&x.saliency, &x.mask, grid, conn)?);
    }
    if opts.wants(MetricId::MaxBoxAcc) || opts.wants(MetricId::MaxBoxAccV2) {
        w.slices = Some(slice_box_curve(
            &x.saliency,
            &x.mask,
            grid,
            conn,
            opts.slice_axis,
            opts.box_delta,
            deltas,
        )?);
    }
    if opts.wants(MetricId::VxAP) || opts.wants(MetricId::MaxF1) {
        w.counts = Some(counts_unchecked(x.saliency.data(), x.mask.data(), grid));
    }
    if opts.wants(MetricId::PxAP) {
        w.slice_counts = Some(slice_counts(x, grid, opts.slice_axis)?);
    }
    if opts.wants(MetricId::MassConcentration) {
        w.mass = Some(sample_mass_concentration(x)?);
    }
    w.seconds = start.elapsed().as_secs_f64();
    Ok(w)
}

/// Evaluates in-memory samples. Samples with an empty mask are logged as
/// exclusions and not scored. `ids` name the samples in the report.
pub fn evaluate(samples: &[EvalSample], ids: &[String], opts: &EvalOptions) -> Result<MetricReport> {
    opts.validate()?;
    if ids.len() != samples.len() {
        return Err(Error::Validation(format!(
            "{} ids for {} samples",
            ids.len(),
            samples.len()
        )));
    }
    let mut kept_ids = Vec::new();
    let mut kept = Vec::new();
    let mut exclusions = Vec::new();
    for (id, x) in ids.iter().zip(samples) {
        if x.mask.is_blank() {
            exclusions.push(Exclusion::new(id, "negative sample: empty ground-truth mask"));
        } else {
            kept_ids.push(id.clone());
            kept.push(x);
        }
    }
    if kept.is_empty() {
        return Err(Error::Empty("no evaluable samples".into()));
    }
    let grid = opts.tau_grid.build(kept.iter().map(|x| &x.saliency))?;
    let deltas = IouThresholdSet::new(opts.deltas.clone())?;
    let work: Vec<SampleWork> = opts.pool()?.install(|| {
        kept.par_iter()
            .map(|x| sample_work(x, &grid, opts, &deltas))
            .collect::<Result<_>>()
    })?;
    let results = reduce(&work, &grid, opts)?;
    Ok(MetricReport {
        dataset: "memory".into(),
        config: None,
        thresholds: grid.values().to_vec(),
        connectivity: opts.connectivity,
        sample_ids: kept_ids,
        results,
        exclusions,
        errors: Vec::new(),
        seconds_per_sample: work.iter().map(|w| w.seconds).collect(),
    })
}

fn reduce(work: &[SampleWork], grid: &ThresholdGrid, opts: &EvalOptions) -> Result<MetricResults> {
    let mut r = MetricResults::default();
    let deltas = IouThresholdSet::new(opts.deltas.clone())?;
    let volume: Vec<&VolumeBoxCurve> = work.iter().filter_map(|w| w.volume.as_ref()).collect();
    if opts.wants(MetricId::Max3DBoxAcc) {
        let curves: Vec<Vec<f64>> = volume.iter().map(|c| c.indicators(opts.box_delta)).collect();
        r.max_3d_box_acc = Some(reduce_curves(MetricId::Max3DBoxAcc, &curves, grid, vec![opts.box_delta], Vec::new())?);
    }
    if opts.wants(MetricId::Max3DBoxAccV2) {
        let curves: Vec<Vec<f64>> = volume.iter().map(|c| c.indicators_v2(&deltas)).collect();
        r.max_3d_box_acc_v2 = Some(reduce_curves(MetricId::Max3DBoxAccV2, &curves, grid, opts.deltas.clone(), Vec::new())?);
    }
    if opts.wants(MetricId::MaxBoxAcc) || opts.wants(MetricId::MaxBoxAccV2) {
        let mut v1 = Vec::new();
        let mut v2 = Vec::new();
        let mut excluded = Vec::new();
        for (i, w) in work.iter().enumerate() {
            match w.slices.as_ref().expect("slice curves computed") {
                Some(c) => {
                    v1.push(c.v1.clone());
                    v2.push(c.v2.clone());
                }
                None => excluded.push(i),
            }
        }
        if opts.wants(MetricId::MaxBoxAcc) {
            r.max_box_acc = Some(reduce_curves(MetricId::MaxBoxAcc, &v1, grid, vec![opts.box_delta], excluded.clone())?);
        }
        if opts.wants(MetricId::MaxBoxAccV2) {
            r.max_box_acc_v2 = Some(reduce_curves(MetricId::MaxBoxAccV2, &v2, grid, opts.deltas.clone(), excluded)?);
        }
    }
    let counts: Vec<PrCounts> = work.iter().filter_map(|w| w.counts.clone()).collect();
    if opts.wants(MetricId::VxAP) {
        r.vxap = Some(reduce_ap(&counts, opts.ap_mode, Vec::new()));
    }
    if opts.wants(MetricId::MaxF1) {
        r.max_f1 = Some(reduce_f1(&counts, grid, Vec::new()));
    }
    if opts.wants(MetricId::PxAP) {
        let per = work.iter().map(|w| w.slice_counts.clone().expect("slice counts computed")).collect();
        r.pxap = Some(reduce_pxap(per, opts.ap_mode)?);
    }
    if opts.wants(MetricId::MassConcentration) {
        r.mass_concentration = Some(reduce_mc(work.iter().map(|w| w.mass.expect("mass computed")).collect())?);
    }
    Ok(r)
}

/// Loads the dataset, pairs saliency files and evaluates. Per-sample load
/// failures are recorded in `errors`; the run fails only when nothing is
/// left to evaluate.
pub fn run_eval(config: &EvalConfig) -> Result<MetricReport> {
    config.options.validate()?;
    let ds = Dataset::open(&config.manifest)?;
    let paired = config
        .options
        .pool()?
        .install(|| pair_inputs(&ds, &config.saliency_dir, config.split, config.options.normalize));
    for e in &paired.errors {
        log::error!("{}: {}", e.id, e.reason);
    }
    if paired.samples.is_empty() {
        return Err(Error::Empty(format!(
            "no evaluable samples ({} excluded, {} errors)",
            paired.exclusions.len(),
            paired.errors.len()
        )));
    }
    let mut report = evaluate(&paired.samples, &paired.ids, &config.options)?;
    report.dataset = ds.manifest.name.to_string();
    report.config = Some(config.clone());
    report.exclusions.splice(0..0, paired.exclusions);
    report.errors = paired.errors;
    Ok(report)
}
