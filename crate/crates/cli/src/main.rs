use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use se3d::components::Connectivity;
use se3d::datasets::{
    build_brats_halves, build_scannet, build_shapenet_binary, build_shapenet_pairs, write_dataset, BratsOptions,
    BuiltDataset, Dataset, DatasetId, DatasetMeta, ScannetMode, Split, DEFAULT_TEST_FRACTION, MANIFEST_FILE,
};
use se3d::eval::{emit_report, run_eval, EvalConfig, EvalOptions, MetricReport, ReportFormat, TauGridSpec};
use se3d::formats::{read_binvox, read_file, read_ply_vertices, read_volume, write_file, write_sev, FileKind};
use se3d::metrics::{ApMode, MetricId};
use se3d::synth::{from_gt, DegradationSpec};
use se3d::VoxelGrid;

#[derive(Parser, Debug)]
#[command(name = "se3d", version, about = "Benchmark 3D saliency maps against ground-truth segmentations")]
struct Cli {
    /// Seed for every random choice (splits, pairs, synthetic noise)
    #[arg(long, global = true, default_value_t = 0, display_order = 100)]
    seed: u64,
    /// Worker threads; 0 uses every core
    #[arg(long, global = true, default_value_t = 0, display_order = 101)]
    workers: usize,
    /// Log filter (error, warn, info, debug, trace); overrides SE3D_LOG
    #[arg(long, global = true, display_order = 102)]
    log_level: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a benchmark dataset directory from raw data
    Prepare(PrepareArgs),
    /// Score saliency maps against a prepared dataset
    Eval(EvalArgs),
    /// Write synthetic saliency maps derived from the ground truth
    Synth(SynthArgs),
    /// Print header, shape and occupancy of a volume file
    Inspect(InspectArgs),
    /// Transcode a binvox or NIfTI volume to SEV
    Convert(ConvertArgs),
}

#[derive(Args, Debug)]
struct PrepareArgs {
    /// shapenet-binary, shapenet-pairs, scannet-isolated, scannet-crop or brats-halves
    #[arg(long, value_parser = parse_dataset)]
    dataset: DatasetId,
    /// Raw data root (class folders, scene folders or patient folders)
    #[arg(long)]
    input: PathBuf,
    /// Dataset directory to create
    #[arg(long)]
    output: PathBuf,
    /// The two class ids, comma separated [default: per dataset]
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<String>>,
    /// Share of samples assigned to the test split
    #[arg(long, default_value_t = DEFAULT_TEST_FRACTION)]
    test_fraction: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    All,
    Train,
    Test,
}

impl SplitArg {
    fn split(self) -> Option<Split> {
        match self {
            SplitArg::All => None,
            SplitArg::Train => Some(Split::Train),
            SplitArg::Test => Some(Split::Test),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ApModeArg {
    PerSample,
    Pooled,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Dataset directory or its manifest.json
    #[arg(long)]
    input: PathBuf,
    /// Directory holding one {id}.sev saliency map per sample
    #[arg(long)]
    saliency_dir: PathBuf,
    /// Report file
    #[arg(long)]
    output: PathBuf,
    /// Comma-separated metrics: max3dboxacc, max3dboxaccv2, vxap, maxf1, maxboxacc, maxboxaccv2, pxap, mc, all or none
    #[arg(long, value_delimiter = ',', default_value = "max3dboxacc,max3dboxaccv2,vxap,maxf1,maxboxacc,maxboxaccv2")]
    metrics: Vec<String>,
    /// Threshold grid: uniform:N or exact
    #[arg(long, default_value = "uniform:101", value_parser = parse_tau_grid)]
    tau_grid: TauGridSpec,
    /// IoU thresholds for the V2 box metrics, comma separated
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.5,0.7")]
    delta: Vec<f64>,
    /// IoU threshold for Max3DBoxAcc and MaxBoxAcc
    #[arg(long, default_value_t = 0.5)]
    box_delta: f64,
    /// Voxel adjacency for connected components: 6 or 26
    #[arg(long, default_value = "26", value_parser = parse_connectivity)]
    connectivity: Connectivity,
    /// Axis sliced by the 2D box metrics and PxAP
    #[arg(long, default_value_t = 2)]
    slice_axis: usize,
    /// Report file format
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Samples to evaluate
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    split: SplitArg,
    /// Average AP per sample, or pool voxel counts over the dataset
    #[arg(long, value_enum, default_value_t = ApModeArg::PerSample)]
    ap_mode: ApModeArg,
    /// Use saliency values as stored instead of min-max normalizing each map
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Dataset directory or its manifest.json
    #[arg(long)]
    input: PathBuf,
    /// Directory for the {id}.sev saliency maps
    #[arg(long)]
    output: PathBuf,
    /// Blend weight toward uniform noise, in [0, 1]
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Translation in voxels, x,y,z
    #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true, default_value = "0,0,0")]
    offset: Vec<i64>,
    /// Cubic dilation radius in voxels
    #[arg(long, default_value_t = 0)]
    dilation: usize,
    /// Samples to synthesize maps for
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    split: SplitArg,
}

#[derive(Args, Debug)]
struct InspectArgs {
    /// binvox, NIfTI (.nii, .nii.gz), SEV or PLY file
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args, Debug)]
struct ConvertArgs {
    /// binvox, NIfTI or SEV file
    #[arg(long)]
    input: PathBuf,
    /// Destination .sev file
    #[arg(long)]
    output: PathBuf,
}

fn parse_dataset(s: &str) -> Result<DatasetId, String> {
    s.parse().map_err(|e: se3d::Error| e.to_string())
}

fn parse_tau_grid(s: &str) -> Result<TauGridSpec, String> {
    s.parse().map_err(|e: se3d::Error| e.to_string())
}

fn parse_connectivity(s: &str) -> Result<Connectivity, String> {
    match s {
        "6" => Ok(Connectivity::Face),
        "26" => Ok(Connectivity::Full),
        _ => Err(format!("connectivity must be 6 or 26, got {s}")),
    }
}

fn parse_metrics(keys: &[String]) -> anyhow::Result<Vec<MetricId>> {
    let mut out = Vec::new();
    for k in keys.iter().map(|k| k.trim()).filter(|k| !k.is_empty()) {
        match k {
            "all" => out.extend(MetricId::ALL),
            "none" => {}
            _ => out.push(MetricId::from_key(k).with_context(|| format!("unknown metric {k:?}"))?),
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

fn init_logging(level: Option<&str>) {
    let mut builder = env_logger::Builder::from_env(env_logger::Env::new().filter_or("SE3D_LOG", "warn"));
    if let Some(level) = level {
        builder.parse_filters(level);
    }
    builder.format_timestamp(None).init();
}

fn print_config(value: &serde_json::Value) {
    eprintln!("config {value}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.log_level.as_deref());
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<ExitCode> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build_global()
        .context("starting worker pool")?;
    match &cli.command {
        Command::Prepare(a) => prepare(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Synth(a) => synth(cli, a),
        Command::Inspect(a) => inspect(a),
        Command::Convert(a) => convert(a),
    }
}

fn prepare(cli: &Cli, a: &PrepareArgs) -> anyhow::Result<ExitCode> {
    let classes: [String; 2] = match &a.classes {
        Some(c) => c
            .clone()
            .try_into()
            .map_err(|c: Vec<String>| anyhow::anyhow!("--classes needs exactly two ids, got {}", c.len()))?,
        None => a.dataset.default_classes().map(String::from),
    };
    print_config(&json!({
        "command": "prepare",
        "dataset": a.dataset.as_str(),
        "input": a.input,
        "output": a.output,
        "classes": classes,
        "test_fraction": a.test_fraction,
        "seed": cli.seed,
        "workers": cli.workers,
    }));
    if !a.input.is_dir() {
        bail!("input directory {} does not exist", a.input.display());
    }
    let c = [classes[0].as_str(), classes[1].as_str()];
    let built: BuiltDataset = match a.dataset {
        DatasetId::ShapenetBinary => build_shapenet_binary(&a.input, c)?,
        DatasetId::ShapenetPairs => build_shapenet_pairs(&a.input, c, cli.seed)?,
        DatasetId::ScannetIsolated => build_scannet(&a.input, ScannetMode::Isolated, c)?,
        DatasetId::ScannetCrop => build_scannet(&a.input, ScannetMode::Crop, c)?,
        DatasetId::BratsHalves => build_brats_halves(&a.input, &BratsOptions::default())?,
    };
    let meta = DatasetMeta {
        name: a.dataset,
        classes: classes.clone(),
        seed: cli.seed,
        test_fraction: a.test_fraction,
        flip_augmentation: a.dataset == DatasetId::BratsHalves,
    };
    let manifest = write_dataset(&a.output, &built, &meta)?;

    println!(
        "{}: {} samples, {} excluded",
        a.dataset,
        manifest.samples.len(),
        manifest.excluded.len()
    );
    for ((label, split), n) in manifest.summary() {
        let split = match split {
            Split::Train => "train",
            Split::Test => "test",
        };
        println!("  {:<12} {:<5} {n}", classes[usize::from(label)], split);
    }
    if a.dataset == DatasetId::BratsHalves {
        let discarded = manifest
            .excluded
            .iter()
            .filter(|e| e.reason.starts_with("tumor fraction"))
            .count();
        println!("  discarded halves (0 < t < {}): {discarded}", BratsOptions::default().tumor_fraction);
    }
    println!("manifest {}", a.output.join(MANIFEST_FILE).display());
    Ok(ExitCode::SUCCESS)
}

fn eval(cli: &Cli, a: &EvalArgs) -> anyhow::Result<ExitCode> {
    let config = EvalConfig {
        manifest: a.input.clone(),
        saliency_dir: a.saliency_dir.clone(),
        split: a.split.split(),
        options: EvalOptions {
            metrics: parse_metrics(&a.metrics)?,
            tau_grid: a.tau_grid,
            box_delta: a.box_delta,
            deltas: a.delta.clone(),
            connectivity: a.connectivity,
            slice_axis: a.slice_axis,
            ap_mode: match a.ap_mode {
                ApModeArg::PerSample => ApMode::PerSample,
                ApModeArg::Pooled => ApMode::Pooled,
            },
            normalize: !a.no_normalize,
            workers: cli.workers,
        },
    };
    print_config(&json!({ "command": "eval", "seed": cli.seed, "eval": config }));
    let report = run_eval(&config)?;
    let format = match a.format {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Csv => ReportFormat::Csv,
    };
    write_file(&a.output, &emit_report(&report, format)?)?;
    print_row(&report);
    eprintln!(
        "{} evaluated, {} excluded, {} errors; report {}",
        report.sample_ids.len(),
        report.exclusions.len(),
        report.errors.len(),
        a.output.display()
    );
    if !report.errors.is_empty() {
        for e in &report.errors {
            eprintln!("  {}: {}", e.id, e.reason);
        }
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn print_row(report: &MetricReport) {
    let row = report.results.row();
    let width = report.dataset.len().max(7);
    let mut header = format!("{:<width$}", "dataset");
    let mut values = format!("{:<width$}", report.dataset);
    for (c, v) in row {
        let w = c.len().max(6);
        header.push_str(&format!("  {c:>w$}"));
        values.push_str(&format!("  {:>w$}", format!("{v:.4}")));
    }
    println!("{header}");
    println!("{values}");
}

fn synth(cli: &Cli, a: &SynthArgs) -> anyhow::Result<ExitCode> {
    let offset: [i64; 3] = a
        .offset
        .clone()
        .try_into()
        .map_err(|o: Vec<i64>| anyhow::anyhow!("--offset needs three values, got {}", o.len()))?;
    print_config(&json!({
        "command": "synth",
        "input": a.input,
        "output": a.output,
        "alpha": a.alpha,
        "offset": offset,
        "dilation": a.dilation,
        "split": format!("{:?}", a.split).to_lowercase(),
        "seed": cli.seed,
    }));
    let ds = Dataset::open(&a.input)?;
    // One seed per manifest entry, drawn in manifest order regardless of the
    // split filter, so a sample's map never depends on which others are made.
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let mut written = 0;
    for e in &ds.manifest.samples {
        let seed: u64 = rng.gen();
        if a.split.split().is_some_and(|s| s != e.split) {
            continue;
        }
        if !e.positive {
            log::info!("{}: negative sample, no map written", e.id);
            continue;
        }
        let mask = ds.load_mask(e)?;
        let spec = DegradationSpec {
            alpha: a.alpha,
            offset,
            dilation: a.dilation,
            seed,
        };
        let map = from_gt(&mask, &spec).with_context(|| format!("sample {}", e.id))?;
        write_file(
            &a.output.join(format!("{}.sev", e.id)),
            &write_sev(&VoxelGrid::from_saliency(&map)),
        )?;
        written += 1;
    }
    println!("wrote {written} saliency maps to {}", a.output.display());
    Ok(ExitCode::SUCCESS)
}

fn dims_str(d: [usize; 3]) -> String {
    format!("{}×{}×{}", d[0], d[1], d[2])
}

fn inspect(a: &InspectArgs) -> anyhow::Result<ExitCode> {
    let path = &a.input;
    print_config(&json!({ "command": "inspect", "input": path }));
    let kind = FileKind::from_path(path).with_context(|| format!("unsupported file {}", path.display()))?;
    if kind == FileKind::Ply {
        let v = read_ply_vertices(&read_file(path)?)?;
        println!("format ply");
        println!("vertices {}", v.len());
        if let Some(first) = v.first() {
            let (mut lo, mut hi) = (*first, *first);
            for p in &v {
                for i in 0..3 {
                    lo[i] = lo[i].min(p[i]);
                    hi[i] = hi[i].max(p[i]);
                }
            }
            println!("bounds {lo:?} .. {hi:?}");
        }
        return Ok(ExitCode::SUCCESS);
    }
    let grid = read_volume(path)?;
    println!("format {}", kind_name(kind));
    if kind == FileKind::Binvox {
        let b = read_binvox(&read_file(path)?)?;
        println!("translate {:?}, scale {}", b.translate, b.scale);
    }
    println!("dims {}, occupied {}", dims_str(grid.dims()), grid.occupancy().count());
    let data = grid.data();
    let (lo, hi) = (0..data.len())
        .map(|i| data.value(i))
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    println!("channels {}, dtype {:?}, range [{lo}, {hi}]", grid.channels(), grid.dtype());
    Ok(ExitCode::SUCCESS)
}

fn kind_name(kind: FileKind) -> &'static str {
    match kind {
        FileKind::Binvox => "binvox",
        FileKind::Nifti => "nifti",
        FileKind::NiftiGz => "nifti-gz",
        FileKind::Sev => "sev",
        FileKind::Ply => "ply",
    }
}

fn convert(a: &ConvertArgs) -> anyhow::Result<ExitCode> {
    print_config(&json!({ "command": "convert", "input": a.input, "output": a.output }));
    if FileKind::from_path(&a.output) != Some(FileKind::Sev) {
        bail!("output {} must be a .sev file", a.output.display());
    }
    if FileKind::from_path(&a.input) == Some(FileKind::Ply) {
        bail!("PLY point clouds have no voxel grid; use prepare to voxelize scenes");
    }
    let grid = read_volume(&a.input)?;
    write_file(&a.output, &write_sev(&grid))?;
    println!("wrote {} {} to {}", dims_str(grid.dims()), describe(&a.input), a.output.display());
    Ok(ExitCode::SUCCESS)
}

fn describe(p: &Path) -> &'static str {
    FileKind::from_path(p).map(kind_name).unwrap_or("volume")
}
