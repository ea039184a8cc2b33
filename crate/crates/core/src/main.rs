use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stcorr::cycle::{Cycle, MapId, MapSet};
use stcorr::field::{CorrField, Field, Image, OcclusionMap};
use stcorr::io::{self, ConfigFile, DisparityMap, FlowFile};
use stcorr::loss::{LossWeights, TwoWarpVariant};
use stcorr::metrics::{self, Crop};
use stcorr::occlusion::estimate_occlusion;
use stcorr::optimize::{self, Estimate, OptimizerConfig, PairMode};
use stcorr::synth;
use stcorr::{Error, Result};

#[derive(Parser)]
#[command(
    name = "stcorr",
    version,
    about = "Joint stereo and optical flow by cycle-consistent optimization"
)]
struct Cli {
    /// `key = value` file with loss weights and optimizer settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate correspondence fields for a stereo-video cycle or an image pair.
    Optimize(OptimizeArgs),
    /// Score predicted flow or disparity against ground truth.
    Evaluate(EvaluateArgs),
    /// Occlusion mask from a forward/backward flow pair.
    Occlusion(OcclusionArgs),
    /// Render a synthetic cycle with ground truth.
    Synth(SynthArgs),
    /// Color-wheel rendering of a flow file.
    Viz(VizArgs),
}

#[derive(Args)]
struct OptimizeArgs {
    /// Left t, right t, left t+1, right t+1.
    #[arg(long, num_args = 4, value_names = ["LT", "RT", "LT1", "RT1"], conflicts_with = "pair", required_unless_present = "pair")]
    cycle: Option<Vec<PathBuf>>,
    #[arg(long, num_args = 2, value_names = ["A", "B"], requires = "mode")]
    pair: Option<Vec<PathBuf>>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Two-warp composition (1, 2 or 3).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=3))]
    variant: Option<u32>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Flow,
    Stereo,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Flow,
    Depth,
}

#[derive(Clone, Copy, ValueEnum)]
enum CropKind {
    Garg,
    None,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predicted flow (.flo, KITTI .png) or disparity (KITTI .png, .pfm).
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth flow, or ground-truth depth in meters for `--task depth`.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, value_enum)]
    task: Task,
    /// Visibility mask image; dark pixels are occluded.
    #[arg(long)]
    noc_mask: Option<PathBuf>,
    /// Focal length times baseline for disparity-to-depth conversion.
    #[arg(long)]
    fb: Option<f64>,
    #[arg(long, value_enum, default_value = "none")]
    crop: CropKind,
    #[arg(long, default_value = "metrics.csv")]
    csv: PathBuf,
}

#[derive(Args)]
struct OcclusionArgs {
    #[arg(long)]
    forward: PathBuf,
    #[arg(long)]
    backward: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene description file.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct VizArgs {
    #[arg(long)]
    flow: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Magnitude of full saturation (default: 99th percentile).
    #[arg(long)]
    max: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    let config = match &cli.config {
        Some(p) => ConfigFile::read(p)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Optimize(args) => run_optimize(&config, cli.seed, args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Occlusion(args) => run_occlusion(&config, args),
        Command::Synth(args) => run_synth(cli.seed, args),
        Command::Viz(args) => run_viz(args),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn mask_image(mask: &OcclusionMap) -> Image {
    Image::new(mask.as_field().clone()).expect("masks are binary")
}

fn write_maps(
    dir: &Path,
    prefix: &str,
    maps: &MapSet<CorrField>,
    occlusion: &MapSet<OcclusionMap>,
) -> Result<()> {
    for (id, map) in maps.iter() {
        io::write_flow(
            &FlowFile::dense(map.clone()),
            dir.join(format!("{prefix}{}.flo", id.label())),
        )?;
    }
    for (id, mask) in occlusion.iter() {
        io::write_image(
            &mask_image(mask),
            dir.join(format!("occ_{}.png", id.label())),
        )?;
    }
    Ok(())
}

fn run_optimize(config: &ConfigFile, seed: Option<u64>, args: OptimizeArgs) -> Result<()> {
    let (weights, mut opt): (LossWeights, OptimizerConfig) = config.optimization()?;
    if let Some(s) = seed {
        opt.seed = s;
    }
    if let Some(v) = args.variant {
        opt.two_warp_variant = Some(TwoWarpVariant::from_id(v)?);
    }
    let estimate: Estimate = match (&args.cycle, &args.pair) {
        (Some(paths), _) => {
            let imgs = paths
                .iter()
                .map(io::read_image)
                .collect::<Result<Vec<_>>>()?;
            let [lt, rt, lt1, rt1]: [Image; 4] = imgs.try_into().expect("clap enforces four paths");
            optimize::optimize_cycle(&Cycle::new(lt, rt, lt1, rt1)?, &weights, &opt)?
        }
        (None, Some(paths)) => {
            let a = io::read_image(&paths[0])?;
            let b = io::read_image(&paths[1])?;
            let mode = match args.mode.expect("clap requires --mode with --pair") {
                Mode::Flow => PairMode::Flow,
                Mode::Stereo => PairMode::Stereo,
            };
            optimize::optimize_pair(&a, &b, mode, &weights, &opt)?
        }
        (None, None) => unreachable!("clap requires --cycle or --pair"),
    };
    create_dir(&args.out_dir)?;
    write_maps(&args.out_dir, "", &estimate.maps, &estimate.occlusion)?;
    io::write_history(args.out_dir.join("loss_history.csv"), &estimate.history)?;
    let r = &estimate.report;
    println!(
        "final loss {:.6} (rec {:.6}, sm {:.6}, lr {:.6}, twowarp {:.6})",
        r.total, r.rec, r.sm, r.lr, r.two_warp
    );
    Ok(())
}

fn read_mask(path: &Path) -> Result<OcclusionMap> {
    let img = io::read_image(path)?;
    let gray = img.as_field().extract_channel(0);
    OcclusionMap::threshold(&gray, 0.5)
}

fn run_evaluate(args: EvaluateArgs) -> Result<()> {
    let rows: Vec<(&str, String)> = match args.task {
        Task::Flow => {
            let pred = io::read_flow(&args.pred)?;
            let gt = io::read_flow(&args.gt)?;
            let noc = args.noc_mask.as_deref().map(read_mask).transpose()?;
            let e = metrics::flow_metrics(&pred.flow, &gt.flow, &gt.valid, noc.as_ref())?;
            vec![
                ("epe_all", e.epe_all.to_string()),
                ("epe_noc", e.epe_noc.to_string()),
                ("epe_occ", e.epe_occ.to_string()),
                ("fl_all", e.fl_all.to_string()),
                ("fl_noc", e.fl_noc.to_string()),
                ("fl_occ", e.fl_occ.to_string()),
                ("count_all", e.count_all.to_string()),
                ("count_noc", e.count_noc.to_string()),
                ("count_occ", e.count_occ.to_string()),
            ]
        }
        Task::Depth => {
            let fb = args.fb.ok_or_else(|| {
                Error::InvalidArgument("--fb is required for depth evaluation".into())
            })?;
            // estimated stereo maps come out of `optimize` as flow files
            let pred = match args.pred.extension().and_then(|e| e.to_str()) {
                Some("flo") => io::read_flow(&args.pred)?.flow,
                _ => io::read_disparity(&args.pred)?.to_corr(),
            };
            let gt = io::read_disparity(&args.gt)?.disparity;
            let crop = match args.crop {
                CropKind::Garg => Some(Crop::garg(gt.height(), gt.width())),
                CropKind::None => None,
            };
            let e = metrics::depth_metrics(&pred, &gt, fb, crop)?;
            vec![
                ("abs_rel", e.abs_rel.to_string()),
                ("sq_rel", e.sq_rel.to_string()),
                ("rmse", e.rmse.to_string()),
                ("rmse_log", e.rmse_log.to_string()),
                ("delta1", e.delta1.to_string()),
                ("delta2", e.delta2.to_string()),
                ("delta3", e.delta3.to_string()),
                ("count", e.count.to_string()),
            ]
        }
    };
    let mut csv = String::from("metric,value\n");
    for (name, value) in &rows {
        println!("{name:<10} {value}");
        let _ = writeln!(csv, "{name},{value}");
    }
    std::fs::write(&args.csv, csv).map_err(|e| Error::Io {
        path: args.csv.clone(),
        source: e,
    })
}

fn run_occlusion(config: &ConfigFile, args: OcclusionArgs) -> Result<()> {
    let (_, opt) = config.optimization()?;
    let forward = io::read_flow(&args.forward)?.flow;
    let backward = io::read_flow(&args.backward)?.flow;
    let mask = estimate_occlusion(&forward, &backward, opt.occlusion)?;
    io::write_image(&mask_image(&mask), &args.out)
}

fn run_synth(seed: Option<u64>, args: SynthArgs) -> Result<()> {
    let mut spec = ConfigFile::read(&args.spec)?.scene()?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let cycle = synth::render_cycle(&spec)?;
    create_dir(&args.out_dir)?;
    for (name, img) in ["lt", "rt", "lt1", "rt1"].iter().zip(cycle.images()) {
        io::write_image(img, args.out_dir.join(format!("{name}.png")))?;
    }
    let gt = cycle
        .ground_truth
        .as_ref()
        .expect("rendered cycles carry ground truth");
    write_maps(&args.out_dir, "gt_", &gt.maps, &gt.occlusion)?;
    let stereo = gt.maps.require(MapId::parse("lt_to_rt")?)?;
    let disparity = DisparityMap::from_corr(stereo);
    io::write_disparity(&disparity, args.out_dir.join("gt_disparity_lt.pfm"))?;
    let (h, w) = (stereo.height(), stereo.width());
    let depth = Field::from_fn(h, w, 1, |_, y, x| {
        spec.fb / disparity.disparity.get(0, y, x).abs()
    });
    let valid = OcclusionMap::from_fn(h, w, |y, x| depth.get(0, y, x).is_finite());
    io::write_disparity(
        &DisparityMap::new(depth, valid)?,
        args.out_dir.join("gt_depth_lt.pfm"),
    )?;
    println!("wrote {}x{} cycle to {}", h, w, args.out_dir.display());
    Ok(())
}

fn run_viz(args: VizArgs) -> Result<()> {
    let flow = io::read_flow(&args.flow)?;
    io::write_image(&io::flow_to_color(&flow.flow, args.max), &args.out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
