//! Acceptance criteria, one PASS/FAIL line each. Every criterion runs even
//! when an earlier one fails; the test fails if any of them does.

use std::collections::HashMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use se3d::components::{label_components, Connectivity};
use se3d::datasets::brats::{join_halves, patient_halves};
use se3d::datasets::{
    preprocess_brats, split_halves, write_dataset, BratsOptions, BuiltDataset, DatasetId, DatasetMeta,
    prepare_pairs,
};
use se3d::eval::{evaluate, run_eval, EvalConfig, EvalOptions, TauGridSpec};
use se3d::formats::{read_binvox, read_nifti, read_sev, write_binvox, write_file, write_sev, Binvox};
use se3d::metrics::wsol::volume_box_curve;
use se3d::metrics::{
    box_acc_3d, max_3d_box_acc, max_3d_box_acc_v2, max_f1, pxap_slicewise, sample_mass_concentration, vxap,
    EvalSample, MetricId,
};
use se3d::synth::{from_gt, gaussian_blob, random_blob_mask, DegradationSpec};
use se3d::{Grid3, IouThresholdSet, SaliencyMap, SegMask, ThresholdGrid, VoxelData, VoxelGrid};

// Tolerances and sizes as stated by the criteria.
const IDENTITY_TOL: f64 = 1e-9;
const AP_ORACLE_TOL: f64 = 1e-9;
const MC_UNIFORM_TOL: f64 = 1e-9;
const SIGN_TEST_ALPHA: f64 = 0.01;
const NOISE_AP_TOL: f64 = 0.05;
const PERFECT_BUDGET_S: f64 = 5.0;
const RUNTIME_BUDGET_S: f64 = 1.0;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_dims(r: &mut impl Rng, max: usize) -> [usize; 3] {
    [r.gen_range(1..=max), r.gen_range(1..=max), r.gen_range(1..=max)]
}

fn random_mask(r: &mut impl Rng, dims: [usize; 3], density: f64) -> SegMask {
    let n = dims.iter().product();
    SegMask::new(dims, (0..n).map(|_| u8::from(r.gen_bool(density))).collect()).unwrap()
}

fn uniform_map(r: &mut impl Rng, dims: [usize; 3]) -> SaliencyMap {
    let n = dims.iter().product();
    SaliencyMap::new(dims, (0..n).map(|_| r.gen::<f32>()).collect()).unwrap()
}

// ---------------------------------------------------------------------------

fn perfect_saliency() -> Outcome {
    let mut r = rng(1);
    let samples: Vec<EvalSample> = (0..50)
        .map(|_| {
            let m = random_blob_mask([32, 32, 32], 3, &mut r).unwrap();
            EvalSample::new(m.to_saliency(), m)
        })
        .collect();
    let ids: Vec<String> = (0..50).map(|i| format!("s{i}")).collect();
    let opts = EvalOptions {
        metrics: vec![MetricId::Max3DBoxAcc, MetricId::Max3DBoxAccV2, MetricId::VxAP, MetricId::MaxF1],
        box_delta: 0.5,
        ..Default::default()
    };
    let start = Instant::now();
    let report = evaluate(&samples, &ids, &opts).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let row = report.results.row();
    check(row.len() == 6, format!("expected 6 columns, got {row:?}"))?;
    for (c, v) in &row {
        check(*v == 1.0, format!("{c} = {v}, want exactly 1.0"))?;
    }
    check(secs < PERFECT_BUDGET_S, format!("took {secs:.3} s, budget {PERFECT_BUDGET_S} s"))?;
    Ok(format!("6 aggregates = 1.0 on 50 samples in {secs:.3} s"))
}

/// Cuboid GT that reaches every slice along axis 2, uniform random saliency.
fn volume_vs_slice_identity() -> Outcome {
    let mut r = rng(2);
    let grid = ThresholdGrid::uniform(ThresholdGrid::DEFAULT_STEPS).unwrap();
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..50 {
        let dims = [r.gen_range(4..=12), r.gen_range(4..=12), r.gen_range(2..=8)];
        let (x0, y0) = (r.gen_range(0..dims[0]), r.gen_range(0..dims[1]));
        let (x1, y1) = (r.gen_range(x0..dims[0]), r.gen_range(y0..dims[1]));
        let m = SegMask::from_grid(
            Grid3::from_fn(dims, |p| u8::from((x0..=x1).contains(&p[0]) && (y0..=y1).contains(&p[1]))).unwrap(),
        )
        .unwrap();
        let x = EvalSample::new(uniform_map(&mut r, dims), m);
        let v = vxap(std::slice::from_ref(&x), &grid).map_err(|e| e.to_string())?.value;
        let p = pxap_slicewise(&x, &grid, 2).map_err(|e| e.to_string())?;
        let d = (v - p).abs();
        worst = worst.max(d);
        if d >= IDENTITY_TOL {
            failures += 1;
        }
    }
    check(
        failures == 0,
        format!("{failures}/50 samples differ by ≥ {IDENTITY_TOL:e}; max |vxap − mean slice AP| = {worst:.6}"),
    )?;
    Ok(format!("max difference {worst:e}"))
}

/// Sorted-voxel AP: walk distinct scores from the top, accumulate
/// precision × recall gain at each distinct score.
fn brute_force_ap(s: &[f32], m: &[u8]) -> f64 {
    let gt = m.iter().filter(|&&v| v == 1).count() as f64;
    let mut order: Vec<usize> = (0..s.len()).filter(|&i| s[i] > 0.0).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let (mut tp, mut pred, mut prev_rec, mut ap) = (0.0, 0.0, 0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let v = s[order[i]];
        while i < order.len() && s[order[i]] == v {
            pred += 1.0;
            tp += f64::from(m[order[i]]);
            i += 1;
        }
        let rec = tp / gt;
        ap += (tp / pred) * (rec - prev_rec);
        prev_rec = rec;
    }
    ap
}

fn ap_rank_oracle() -> Outcome {
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for trial in 0..500 {
        let dims = random_dims(&mut r, 6);
        let n: usize = dims.iter().product();
        let density = r.gen_range(0.1..0.7);
        let mut m = random_mask(&mut r, dims, density);
        if m.is_blank() {
            let mut d = m.data().to_vec();
            d[r.gen_range(0..n)] = 1;
            m = SegMask::new(dims, d).unwrap();
        }
        // Coarse levels force ties; zeros are never predicted.
        let levels = r.gen_range(2..=12);
        let mut data: Vec<f32> = (0..n).map(|_| r.gen_range(0..=levels) as f32 / levels as f32).collect();
        data[r.gen_range(0..n)] = 1.0;
        let s = SaliencyMap::new(dims, data).unwrap();
        let grid = ThresholdGrid::exact_from_maps([&s]).map_err(|e| e.to_string())?;
        let want = brute_force_ap(s.data(), m.data());
        let got = vxap(&[EvalSample::new(s, m)], &grid).map_err(|e| e.to_string())?.value;
        let d = (got - want).abs();
        worst = worst.max(d);
        check(d < AP_ORACLE_TOL, format!("trial {trial}: vxap {got} vs oracle {want}"))?;
    }
    Ok(format!("500 volumes, max difference {worst:e}"))
}

/// Union-find over every adjacent foreground pair, checking all 26 or 6
/// neighbours of every voxel.
fn oracle_components(m: &SegMask, conn: Connectivity) -> Vec<usize> {
    let dims = m.dims();
    let n = m.data().len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            i = parent[i];
        }
        i
    }
    let idx = |p: [i64; 3]| (p[0] as usize * dims[1] + p[1] as usize) * dims[2] + p[2] as usize;
    for x in 0..dims[0] as i64 {
        for y in 0..dims[1] as i64 {
            for z in 0..dims[2] as i64 {
                let i = idx([x, y, z]);
                if m.data()[i] == 0 {
                    continue;
                }
                for dx in -1i64..=1 {
                    for dy in -1i64..=1 {
                        for dz in -1i64..=1 {
                            let k = dx.abs() + dy.abs() + dz.abs();
                            if k == 0 || (conn == Connectivity::Face && k > 1) {
                                continue;
                            }
                            let q = [x + dx, y + dy, z + dz];
                            if (0..3).any(|a| q[a] < 0 || q[a] >= dims[a] as i64) {
                                continue;
                            }
                            let j = idx(q);
                            if m.data()[j] == 1 {
                                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                                parent[a.max(b)] = a.min(b);
                            }
                        }
                    }
                }
            }
        }
    }
    (0..n).map(|i| if m.data()[i] == 1 { root(&mut parent, i) + 1 } else { 0 }).collect()
}

fn components_oracle() -> Outcome {
    let mut r = rng(4);
    for trial in 0..1000 {
        let dims = random_dims(&mut r, 8);
        let density = r.gen_range(0.05..0.6);
        let m = random_mask(&mut r, dims, density);
        for conn in [Connectivity::Face, Connectivity::Full] {
            let lab = label_components(&m, conn);
            let want = oracle_components(&m, conn);
            // Same partition: the label maps must be a bijection.
            let mut fwd: HashMap<u32, usize> = HashMap::new();
            let mut back: HashMap<usize, u32> = HashMap::new();
            for (&a, &b) in lab.labels().iter().zip(&want) {
                check((a == 0) == (b == 0), format!("trial {trial}: foreground mismatch"))?;
                if a == 0 {
                    continue;
                }
                check(
                    *fwd.entry(a).or_insert(b) == b && *back.entry(b).or_insert(a) == a,
                    format!("trial {trial} {conn:?}: partitions differ"),
                )?;
            }
            check(lab.count() == back.len(), format!("trial {trial}: component count"))?;
            // Largest: most voxels, ties to the component seen first in raster order.
            let mut sizes: HashMap<usize, usize> = HashMap::new();
            let mut first: Vec<usize> = Vec::new();
            for &b in want.iter().filter(|&&b| b != 0) {
                if !sizes.contains_key(&b) {
                    first.push(b);
                }
                *sizes.entry(b).or_default() += 1;
            }
            let best = first.iter().copied().fold(None, |best: Option<usize>, b| match best {
                Some(c) if sizes[&c] >= sizes[&b] => Some(c),
                _ => Some(b),
            });
            let got = lab.largest_id().map(|id| fwd[&id]);
            check(got == best, format!("trial {trial} {conn:?}: largest {got:?} vs {best:?}"))?;
        }
    }
    Ok("1000 masks × {6, 26}: partitions and largest component agree".into())
}

fn box_iou(a: ([usize; 3], [usize; 3]), b: ([usize; 3], [usize; 3])) -> f64 {
    let vol = |lo: [usize; 3], hi: [usize; 3]| (0..3).map(|i| (hi[i] + 1 - lo[i]) as f64).product::<f64>();
    let lo = [a.0[0].max(b.0[0]), a.0[1].max(b.0[1]), a.0[2].max(b.0[2])];
    let hi = [a.1[0].min(b.1[0]), a.1[1].min(b.1[1]), a.1[2].min(b.1[2])];
    let inter = if (0..3).all(|i| lo[i] <= hi[i]) { vol(lo, hi) } else { 0.0 };
    inter / (vol(a.0, a.1) + vol(b.0, b.1) - inter)
}

fn box_metric_cases() -> Outcome {
    // 4³ cube; prediction shifted 2 voxels along x.
    let gt = ([4, 4, 4], [7, 7, 7]);
    let pred = ([6, 4, 4], [9, 7, 7]);
    let cube = |b: ([usize; 3], [usize; 3])| {
        SegMask::from_grid(Grid3::from_fn([16, 16, 16], |p| u8::from((0..3).all(|i| b.0[i] <= p[i] && p[i] <= b.1[i]))).unwrap())
            .unwrap()
    };
    let iou = box_iou(gt, pred);
    check(iou == 1.0 / 3.0, format!("fixture IoU {iou}, want 1/3"))?;
    let x = EvalSample::new(cube(pred).to_saliency(), cube(gt));
    let xs = std::slice::from_ref(&x);
    let conn = Connectivity::Full;
    let at = |delta| box_acc_3d(xs, 0.5, delta, conn).map_err(|e| e.to_string());
    check(at(0.5)? == 0.0, "δ = 0.5 should give 0")?;
    check(at(0.3)? == 1.0, "δ = 0.3 should give 1")?;
    let grid = ThresholdGrid::uniform(ThresholdGrid::DEFAULT_STEPS).unwrap();
    check(max_3d_box_acc(xs, &grid, 0.5, conn).map_err(|e| e.to_string())?.value == 0.0, "Max3DBoxAcc(0.5) ≠ 0")?;
    check(max_3d_box_acc(xs, &grid, 0.3, conn).map_err(|e| e.to_string())?.value == 1.0, "Max3DBoxAcc(0.3) ≠ 1")?;

    // V2 ≥ V1 with the same δ, at every τ, on multi-component fixtures.
    let mut r = rng(5);
    let grid = ThresholdGrid::uniform(51).unwrap();
    let mut strict = 0;
    for trial in 0..200 {
        let m = random_blob_mask([16, 16, 16], r.gen_range(2..=4), &mut r).unwrap();
        let spec = DegradationSpec {
            alpha: r.gen_range(0.0..0.8),
            offset: [r.gen_range(-2..=2), r.gen_range(-2..=2), 0],
            dilation: r.gen_range(0..=1),
            seed: trial,
        };
        let Ok(s) = from_gt(&m, &spec) else { continue };
        let delta = [0.3, 0.5, 0.7][trial as usize % 3];
        let c = volume_box_curve(&s, &m, &grid, conn).map_err(|e| e.to_string())?;
        let v1 = c.indicators(delta);
        let v2 = c.indicators_v2(&IouThresholdSet::single(delta).unwrap());
        for l in 0..grid.len() {
            check(v2[l] >= v1[l], format!("trial {trial}: V2 {} < V1 {} at τ index {l}", v2[l], v1[l]))?;
        }
        strict += usize::from(v2.iter().zip(&v1).any(|(a, b)| a > b));
    }
    Ok(format!("IoU = 1/3 cases exact; V2 ≥ V1 in 200 trials ({strict} strictly better somewhere)"))
}

fn mass_concentration_cases() -> Outcome {
    // Pairs built by the pairs builder; saliency only on the class object.
    let mut r = rng(6);
    let class: Vec<(String, VoxelGrid, u8)> = (0..10)
        .map(|i| (format!("c{i}"), VoxelGrid::from_mask(&random_blob_mask([16, 16, 16], 2, &mut r).unwrap()), 0))
        .collect();
    let pool: Vec<VoxelGrid> = (0..5).map(|_| VoxelGrid::from_mask(&random_blob_mask([16, 16, 16], 2, &mut r).unwrap())).collect();
    let pairs = prepare_pairs(&class, &pool, 6).map_err(|e| e.to_string())?;
    for s in &pairs.samples {
        let x = EvalSample::new(s.mask.to_saliency(), s.mask.clone()).with_order(s.order.unwrap());
        let mc = sample_mass_concentration(&x).map_err(|e| e.to_string())?;
        check(mc == Some(1.0), format!("{}: all-in-slab MC {mc:?}", s.id))?;
    }

    let dims = [64, 32, 32];
    let m = SegMask::zeros(dims).unwrap();
    for order in [0u8, 1] {
        let uniform = SaliencyMap::new(dims, vec![1.0; 64 * 32 * 32]).unwrap();
        let mc = sample_mass_concentration(&EvalSample::new(uniform, m.clone()).with_order(order))
            .map_err(|e| e.to_string())?
            .unwrap();
        check((mc - 0.5).abs() <= MC_UNIFORM_TOL, format!("uniform map MC {mc}"))?;
    }

    // Slab [o·L/2, (o+1)·L/2) along the first axis, summed by coordinates.
    for trial in 0..20u64 {
        let s = uniform_map(&mut rng(100 + trial), dims);
        let order = (trial % 2) as u8;
        let (mut inside, mut total) = (0.0f64, 0.0f64);
        for x in 0..64 {
            for y in 0..32 {
                for z in 0..32 {
                    let v = f64::from(s.grid().get([x, y, z]));
                    total += v;
                    if x / 32 == usize::from(order) {
                        inside += v;
                    }
                }
            }
        }
        let got = sample_mass_concentration(&EvalSample::new(s, m.clone()).with_order(order))
            .map_err(|e| e.to_string())?
            .unwrap();
        check((got - inside / total).abs() < 1e-9, format!("slab sum {got} vs {}", inside / total))?;
    }
    let half = SaliencyMap::from_grid(Grid3::from_fn(dims, |p| if p[0] < 32 { 1.0 } else { 0.0 }).unwrap());
    for (order, want) in [(0u8, 1.0), (1, 0.0)] {
        let got = sample_mass_concentration(&EvalSample::new(half.clone(), m.clone()).with_order(order))
            .map_err(|e| e.to_string())?;
        check(got == Some(want), format!("front-slab map, order {order}: {got:?}"))?;
    }
    Ok("all-in-slab 1.0, uniform 0.5, 64×32×32 slab sums match".into())
}

/// One-sided sign test: P(X ≥ k) for X ~ Binomial(n, 1/2).
fn sign_test_p(k: usize, n: usize) -> f64 {
    let mut p = 0.0;
    let mut c = 1.0f64; // C(n, 0)
    for i in 0..=n {
        if i >= k {
            p += c;
        }
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    p / 2f64.powi(n as i32)
}

fn degradation_monotonicity() -> Outcome {
    let alphas = [0.0, 0.25, 0.5, 0.75, 1.0];
    let grid = ThresholdGrid::uniform(ThresholdGrid::DEFAULT_STEPS).unwrap();
    // scores[metric][seed][alpha]
    let mut scores = vec![vec![[0.0f64; 5]; 50]; 2];
    let mut gt_fraction = 0.0;
    for seed in 0..50u64 {
        let mut r = rng(1000 + seed);
        let masks: Vec<SegMask> = (0..4).map(|_| random_blob_mask([16, 16, 16], 2, &mut r).unwrap()).collect();
        gt_fraction += masks.iter().map(|m| m.count() as f64 / m.data().len() as f64).sum::<f64>() / 4.0 / 50.0;
        for (a, &alpha) in alphas.iter().enumerate() {
            let xs: Vec<EvalSample> = masks
                .iter()
                .enumerate()
                .map(|(i, m)| EvalSample::new(from_gt(m, &DegradationSpec::blend(alpha, seed * 16 + i as u64)).unwrap(), m.clone()))
                .collect();
            scores[0][seed as usize][a] = vxap(&xs, &grid).map_err(|e| e.to_string())?.value;
            scores[1][seed as usize][a] = max_f1(&xs, &grid).map_err(|e| e.to_string())?.max_f1;
        }
    }
    let mut notes = Vec::new();
    for (name, per_seed) in ["VxAP", "MaxF1"].iter().zip(&scores) {
        let mean = |a: usize| per_seed.iter().map(|s| s[a]).sum::<f64>() / 50.0;
        for a in 0..4 {
            check(mean(a + 1) <= mean(a), format!("{name}: mean rises from α={} to α={}", alphas[a], alphas[a + 1]))?;
            let down = per_seed.iter().filter(|s| s[a + 1] < s[a]).count();
            let up = per_seed.iter().filter(|s| s[a + 1] > s[a]).count();
            if down + up == 0 {
                notes.push(format!("{name} α={}→{} all tied", alphas[a], alphas[a + 1]));
                continue;
            }
            let p = sign_test_p(down, down + up);
            check(
                p < SIGN_TEST_ALPHA,
                format!("{name} α={}→{}: {down} down / {up} up, sign-test p = {p:.4}", alphas[a], alphas[a + 1]),
            )?;
        }
        let down = per_seed.iter().filter(|s| s[4] < s[0]).count();
        let up = per_seed.iter().filter(|s| s[4] > s[0]).count();
        let p = sign_test_p(down, down + up);
        check(p < SIGN_TEST_ALPHA, format!("{name} α=0→1: sign-test p = {p}"))?;
    }
    let noise_ap = scores[0].iter().map(|s| s[4]).sum::<f64>() / 50.0;
    check(
        (noise_ap - gt_fraction).abs() <= NOISE_AP_TOL,
        format!("VxAP at α=1 is {noise_ap:.4}, GT fraction {gt_fraction:.4}"),
    )?;
    let suffix = if notes.is_empty() { String::new() } else { format!("; {}", notes.join(", ")) };
    Ok(format!("VxAP(α=1) = {noise_ap:.4} vs GT fraction {gt_fraction:.4}{suffix}"))
}

fn brats_filter() -> Outcome {
    // Raw [20, 25, 40] rotates to [25, 40, 20]; halves hold 10 000 voxels.
    // Tumor voxels sit at raw x ≥ 10, which lands in the first half.
    let dims = [20, 25, 40];
    let cases = [(0usize, Some(0u8), 0.0), (20, None, 0.002), (31, Some(1), 0.0031)];
    for (k, (tumor, want, t)) in cases.into_iter().enumerate() {
        let scan = VoxelGrid::new(
            dims,
            2,
            VoxelData::F32((0..20 * 25 * 40 * 2).map(|i| ((i * 7919) % 1013) as f32 - 300.0).collect()),
        )
        .unwrap();
        let mut seg = vec![0f32; 20 * 25 * 40];
        let mut placed = 0;
        'fill: for x in 10..20 {
            for y in 0..25 {
                for z in 0..40 {
                    if placed == tumor {
                        break 'fill;
                    }
                    seg[(x * 25 + y) * 40 + z] = [1.0, 2.0, 4.0][placed % 3];
                    placed += 1;
                }
            }
        }
        // Label 3 is not tumor.
        seg[(25 + 3) * 40 + 5] = 3.0;
        let seg = VoxelGrid::new(dims, 1, VoxelData::F32(seg)).unwrap();
        let built = patient_halves(&format!("p{k}"), &scan, &seg, &BratsOptions::default()).map_err(|e| e.to_string())?;
        let h0 = built.samples.iter().find(|s| s.id.ends_with("_h0"));
        match want {
            None => {
                check(h0.is_none() && built.excluded.len() == 1, format!("t = {t}: half not discarded"))?;
            }
            Some(label) => {
                let h0 = h0.ok_or(format!("t = {t}: half discarded"))?;
                check(h0.label == label, format!("t = {t}: label {} want {label}", h0.label))?;
                check(h0.mask.count() == tumor && h0.tumor_fraction == Some(t), format!("t = {t}: fraction {:?}", h0.tumor_fraction))?;
            }
        }
        let h1 = built.samples.iter().find(|s| s.id.ends_with("_h1")).ok_or("clean half missing")?;
        check(h1.label == 0 && h1.mask.is_blank(), "clean half should be kept as no-tumor")?;

        let (volume, mask, axis) = preprocess_brats(&scan, &seg).map_err(|e| e.to_string())?;
        let halves = split_halves(&volume, &mask, axis).map_err(|e| e.to_string())?;
        let (v, m) = join_halves(&halves, axis).map_err(|e| e.to_string())?;
        check(v == volume && m == mask, "halves do not rejoin bit-exactly")?;
        check(write_sev(&v) == write_sev(&volume), "rejoined SEV bytes differ")?;
    }
    Ok("t = 0 kept NT, 0.002 discarded, 0.0031 kept T; halves rejoin exactly".into())
}

/// NIfTI-1 single file assembled field by field.
fn nifti_bytes(dims: [usize; 3], datatype: i16, bitpix: i16, big: bool, payload: &[u8]) -> Vec<u8> {
    let mut h = vec![0u8; 352];
    let put = |h: &mut Vec<u8>, at: usize, b: &[u8]| h[at..at + b.len()].copy_from_slice(b);
    let i16b = |v: i16| if big { v.to_be_bytes() } else { v.to_le_bytes() };
    let i32b = |v: i32| if big { v.to_be_bytes() } else { v.to_le_bytes() };
    let f32b = |v: f32| if big { v.to_be_bytes() } else { v.to_le_bytes() };
    put(&mut h, 0, &i32b(348));
    let dim = [3, dims[0] as i16, dims[1] as i16, dims[2] as i16, 1, 1, 1, 1];
    for (k, d) in dim.iter().enumerate() {
        put(&mut h, 40 + 2 * k, &i16b(*d));
    }
    put(&mut h, 70, &i16b(datatype));
    put(&mut h, 72, &i16b(bitpix));
    for k in 0..8 {
        put(&mut h, 76 + 4 * k, &f32b(1.0));
    }
    put(&mut h, 108, &f32b(352.0));
    put(&mut h, 344, b"n+1\0");
    h.extend_from_slice(payload);
    h
}

fn format_round_trips() -> Outcome {
    let mut r = rng(7);
    for trial in 0..200 {
        let dims = random_dims(&mut r, 16);
        let density = r.gen_range(0.0..1.0);
        let m = random_mask(&mut r, dims, density);
        let b = Binvox { grid: VoxelGrid::from_mask(&m), translate: [r.gen(), r.gen(), r.gen()], scale: r.gen() };
        let back = read_binvox(&write_binvox(&b).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        check(back == b, format!("binvox trial {trial} differs"))?;

        let channels = r.gen_range(1..=3);
        let n = dims.iter().product::<usize>() * channels;
        let data = if r.gen_bool(0.5) {
            VoxelData::U8((0..n).map(|_| r.gen()).collect())
        } else {
            VoxelData::F32((0..n).map(|_| f32::from_bits(r.gen::<u32>() & 0xff7f_ffff)).collect())
        };
        let g = VoxelGrid::new(dims, channels, data).unwrap();
        let bytes = write_sev(&g);
        let back = read_sev(&bytes).map_err(|e| e.to_string())?;
        check(back.to_bytes() == bytes, format!("SEV trial {trial}: bytes differ"))?;
        let same = match (back.grid.data(), g.data()) {
            (VoxelData::F32(a), VoxelData::F32(b)) => a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()),
            (a, b) => a == b,
        };
        check(same && back.grid.dims() == dims, format!("SEV trial {trial}: grid differs"))?;
    }

    let dims = [5, 4, 3];
    let n = 60;
    for big in [false, true] {
        let cases: [(i16, i16, Vec<u8>, f32); 3] = [
            (2, 8, vec![7u8; n], 7.0),
            (4, 16, (0..n).flat_map(|_| if big { (-300i16).to_be_bytes() } else { (-300i16).to_le_bytes() }).collect(), -300.0),
            (16, 32, (0..n).flat_map(|_| if big { 2.5f32.to_be_bytes() } else { 2.5f32.to_le_bytes() }).collect(), 2.5),
        ];
        for (datatype, bitpix, payload, value) in cases {
            let g = read_nifti(&nifti_bytes(dims, datatype, bitpix, big, &payload), false).map_err(|e| e.to_string())?;
            check(g.dims() == dims && g.channels() == 1, format!("NIfTI type {datatype}: shape {:?}", g.dims()))?;
            check(
                (0..n).all(|i| g.data().value(i) == value),
                format!("NIfTI type {datatype} big-endian={big}: not constant {value}"),
            )?;
        }
    }
    Ok("200 binvox + 200 SEV round trips; NIfTI u8/i16/f32 in both byte orders".into())
}

fn runtime_claim() -> Outcome {
    let dims = [240, 120, 155];
    let mut r = rng(8);
    // Smooth blobs plus mild noise, like an upsampled class-activation map.
    let mut s = vec![0f32; 240 * 120 * 155];
    for (center, sigma) in [([80.0, 60.0, 70.0], 18.0), ([170.0, 50.0, 90.0], 12.0), ([120.0, 90.0, 40.0], 25.0)] {
        let b = gaussian_blob(dims, center, sigma).unwrap();
        for (v, w) in s.iter_mut().zip(b.data()) {
            *v += w;
        }
    }
    for v in s.iter_mut() {
        *v += 0.05 * r.gen::<f32>();
    }
    let s = SaliencyMap::new(dims, s).unwrap().normalize().unwrap();
    let m = SegMask::from_grid(
        Grid3::from_fn(dims, |p| {
            let d = (p[0] as f64 - 84.0).powi(2) + (p[1] as f64 - 60.0).powi(2) + (p[2] as f64 - 72.0).powi(2);
            u8::from(d < 20.0f64.powi(2))
        })
        .unwrap(),
    )
    .unwrap();
    let x = [EvalSample::new(s, m)];
    let grid = ThresholdGrid::uniform(ThresholdGrid::DEFAULT_STEPS).unwrap();
    let start = Instant::now();
    let res = max_3d_box_acc_v2(&x, &grid, &IouThresholdSet::v2_default(), Connectivity::Full).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    check(secs < RUNTIME_BUDGET_S, format!("took {secs:.3} s, budget {RUNTIME_BUDGET_S} s"))?;
    Ok(format!("{secs:.3} s for one 240×120×155 volume (value {:.3})", res.value))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut r = rng(9);
    let class: Vec<(String, VoxelGrid, u8)> = (0..12)
        .map(|i| (format!("c{i}"), VoxelGrid::from_mask(&random_blob_mask([12, 10, 8], 2, &mut r).unwrap()), (i % 2) as u8))
        .collect();
    let pool: Vec<VoxelGrid> = (0..4).map(|_| VoxelGrid::from_mask(&random_blob_mask([12, 10, 8], 2, &mut r).unwrap())).collect();
    let pairs = prepare_pairs(&class, &pool, 42).map_err(|e| e.to_string())?;
    check(pairs == prepare_pairs(&class, &pool, 42).map_err(|e| e.to_string())?, "pairs differ for one seed")?;
    let built = BuiltDataset { samples: pairs.samples.clone(), excluded: vec![] };
    let meta = DatasetMeta {
        name: DatasetId::ShapenetPairs,
        classes: ["a".into(), "b".into()],
        seed: 42,
        test_fraction: 0.25,
        flip_augmentation: false,
    };
    let ds = dir.path().join("ds");
    write_dataset(&ds, &built, &meta).map_err(|e| e.to_string())?;
    let sal = dir.path().join("sal");
    for (i, s) in pairs.samples.iter().enumerate() {
        let map = from_gt(&s.mask, &DegradationSpec { alpha: 0.6, offset: [1, 0, 0], dilation: 1, seed: i as u64 })
            .map_err(|e| e.to_string())?;
        write_file(&sal.join(format!("{}.sev", s.id)), &write_sev(&VoxelGrid::from_saliency(&map))).map_err(|e| e.to_string())?;
    }
    let run = |workers| {
        run_eval(&EvalConfig {
            manifest: ds.clone(),
            saliency_dir: sal.clone(),
            split: None,
            options: EvalOptions { metrics: MetricId::ALL.to_vec(), tau_grid: TauGridSpec::Exact, workers, ..Default::default() },
        })
        .map_err(|e| e.to_string())
    };
    let one = run(1)?;
    let eight = run(8)?;
    let again = run(1)?;
    check(one.results == eight.results, "results differ between 1 and 8 workers")?;
    check(one.results == again.results, "results differ between two runs")?;
    check(one.thresholds == eight.thresholds && one.sample_ids == eight.sample_ids, "grid or sample order differs")?;
    check(one.results.row().len() == 10, format!("expected 10 columns, got {}", one.results.row().len()))?;
    // Aggregates are recomputable from the per-sample traces.
    let wsol = one.results.max_3d_box_acc_v2.as_ref().unwrap();
    let mean = wsol.per_sample.iter().sum::<f64>() / wsol.per_sample.len() as f64;
    check((mean - wsol.value).abs() < 1e-12, "V2 aggregate not the mean of its trace")?;
    Ok(format!("{} samples, 10 columns identical for 1 and 8 workers and across runs", one.sample_ids.len()))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("perfect-saliency maximality", perfect_saliency),
        ("VxAP ≡ mean slice PxAP", volume_vs_slice_identity),
        ("AP rank oracle", ap_rank_oracle),
        ("connected-components oracle", components_oracle),
        ("box-metric hand cases", box_metric_cases),
        ("mass-concentration exactness", mass_concentration_cases),
        ("degradation monotonicity", degradation_monotonicity),
        ("BraTS filter rule", brats_filter),
        ("format round trips", format_round_trips),
        ("runtime claim", runtime_claim),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                println!("FAIL  {name}: {why}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
