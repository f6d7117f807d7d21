//! The `flowforge` command-line interface.
//!
//! Exit codes: 0 success, 1 user error (bad arguments, unreadable or
//! malformed files), 2 internal invariant violation (a failed gradcheck).
//!
//! `FLOWFORGE_THREADS` caps frame-level parallelism in `animate`
//! (0 or unset = auto); outputs are byte-identical regardless.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use flowforge_core::correlation::non_prior_init;
use flowforge_core::losses::{total_loss, SeededExtractor, TransformSampler};
use flowforge_core::pipeline::{Engine, EngineConfig};
use flowforge_core::prior::{prior_motion, CompositionMask, KeypointSet, StaticPrior};
use flowforge_core::ImageTensor;

use crate::config::load_config;
use crate::error::{FlowForgeError, Result};
use crate::images::{load_image, save_image};
use crate::keypoints::load_keypoints;
use crate::viz::visualize_flow;
use crate::{flo, raster, volume_io};

#[derive(Parser)]
#[command(
    name = "flowforge",
    version,
    about = "Keypoint-driven face animation engine: prior flow, correlation refinement, generation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Fixed prior inputs; when absent the seeded detector runs instead.
#[derive(Args, Default)]
struct PriorArgs {
    /// Keypoint JSON for the source image.
    #[arg(long)]
    source_kp: Option<PathBuf>,
    /// Keypoint JSON for the driving image.
    #[arg(long)]
    driving_kp: Option<PathBuf>,
    /// Composition mask raster (K+1 channels at quarter resolution).
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Occlusion logit raster (1 channel at quarter resolution).
    #[arg(long)]
    occlusion: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the coarse prior flow and write it as a .flo file.
    PriorFlow {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        driving: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        prior: PriorArgs,
        /// Output flow file.
        #[arg(long)]
        out: PathBuf,
        /// Optional occlusion logit raster output.
        #[arg(long)]
        out_occlusion: Option<PathBuf>,
    },
    /// Build the structure correlation volume and write its dump.
    CorrVolume {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        driving: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        prior: PriorArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Soft-argmax initialization flow from a volume dump.
    InitNonprior {
        /// Input volume dump.
        #[arg(long)]
        volume: PathBuf,
        /// Output flow file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the refinement and write per-iteration flows and occlusions.
    Refine {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        driving: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        prior: PriorArgs,
        /// Directory for flow_<i>.flo and occlusion_<i>.raster files.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Generate one animated frame.
    Generate {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        driving: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        prior: PriorArgs,
        /// Output image (png or ppm).
        #[arg(long)]
        out: PathBuf,
    },
    /// Animate a sequence of driving frames.
    Animate {
        #[arg(long)]
        source: PathBuf,
        /// One or more driving frames, in order.
        #[arg(long, num_args = 1.., required = true)]
        driving: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        prior: PriorArgs,
        /// Output directory (frame_<i>.png per driving frame).
        #[arg(long)]
        out_dir: PathBuf,
        /// Also write the final refined flow of each frame as .flo.
        #[arg(long)]
        dump_flows: bool,
    },
    /// Compute the loss report for a target/generated pair (JSON).
    Loss {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Transform sampling seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional output file (defaults to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a .flo file with the flow colorwheel.
    VizFlow {
        #[arg(long)]
        flow: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify analytic derivatives against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
}

/// Parse and execute; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{e}");
            return 1;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_engine_config(path: &Option<PathBuf>) -> Result<EngineConfig> {
    match path {
        Some(p) => load_config(p),
        None => Ok(EngineConfig::default()),
    }
}

/// Build the engine, swapping in a file-backed prior when keypoint files
/// are given.
fn build_engine(config: EngineConfig, prior: &PriorArgs) -> Result<Engine> {
    let mut config = config;
    let static_prior = match (&prior.source_kp, &prior.driving_kp) {
        (None, None) => {
            if prior.mask.is_some() || prior.occlusion.is_some() {
                return Err(FlowForgeError::usage(
                    "--mask/--occlusion require --source-kp and --driving-kp",
                ));
            }
            None
        }
        (Some(s), Some(d)) => {
            let src = load_keypoints(s)?;
            let drv = load_keypoints(d)?;
            // Keypoint files fix K.
            config.keypoints = src.count();
            let mut provider = StaticPrior::new(src, drv).map_err(FlowForgeError::from)?;
            if let Some(m) = &prior.mask {
                let mask = CompositionMask::from_tensor(raster::read_raster(m)?)
                    .map_err(FlowForgeError::from)?;
                provider = provider.with_mask(mask).map_err(FlowForgeError::from)?;
            }
            if let Some(o) = &prior.occlusion {
                provider = provider
                    .with_occlusion_logits(raster::read_raster(o)?)
                    .map_err(FlowForgeError::from)?;
            }
            Some(provider)
        }
        _ => {
            return Err(FlowForgeError::usage(
                "--source-kp and --driving-kp must be given together",
            ))
        }
    };
    let engine = Engine::new(config).map_err(FlowForgeError::from)?;
    Ok(match static_prior {
        Some(p) => engine.with_provider(Box::new(p)),
        None => engine,
    })
}

fn thread_cap() -> usize {
    match std::env::var("FLOWFORGE_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
    {
        Some(0) | None => std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1),
        Some(n) => n,
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| FlowForgeError::io(dir, e))
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::PriorFlow {
            source,
            driving,
            config,
            prior,
            out,
            out_occlusion,
        } => {
            let engine = build_engine(load_engine_config(&config)?, &prior)?;
            let src = load_image(&source)?;
            let drv = load_image(&driving)?;
            let (_, _, output) =
                prior_motion(engine.provider(), &src, &drv).map_err(FlowForgeError::from)?;
            flo::write_flow(&output.flow, &out)?;
            if let Some(p) = out_occlusion {
                raster::write_raster(&output.occlusion_logits, &p)?;
            }
            Ok(0)
        }
        Command::CorrVolume {
            source,
            driving,
            config,
            prior,
            out,
        } => {
            let engine = build_engine(load_engine_config(&config)?, &prior)?;
            let src = load_image(&source)?;
            let drv = load_image(&driving)?;
            let volume = engine
                .correlation_volume(&src, &drv)
                .map_err(FlowForgeError::from)?;
            volume_io::write_volume(&volume, &out)?;
            Ok(0)
        }
        Command::InitNonprior { volume, out } => {
            let vol = volume_io::read_volume(&volume)?;
            flo::write_flow(&non_prior_init(&vol), &out)?;
            Ok(0)
        }
        Command::Refine {
            source,
            driving,
            config,
            prior,
            out_dir,
        } => {
            let engine = build_engine(load_engine_config(&config)?, &prior)?;
            let src = load_image(&source)?;
            let drv = load_image(&driving)?;
            let frame = engine.animate_frame(&src, &drv).map_err(FlowForgeError::from)?;
            ensure_dir(&out_dir)?;
            for (i, (flow, occ)) in frame.refined.iter().enumerate() {
                flo::write_flow(flow, &out_dir.join(format!("flow_{i}.flo")))?;
                raster::write_raster(occ.tensor(), &out_dir.join(format!("occlusion_{i}.raster")))?;
            }
            Ok(0)
        }
        Command::Generate {
            source,
            driving,
            config,
            prior,
            out,
        } => {
            let engine = build_engine(load_engine_config(&config)?, &prior)?;
            let src = load_image(&source)?;
            let drv = load_image(&driving)?;
            let frame = engine.animate_frame(&src, &drv).map_err(FlowForgeError::from)?;
            save_image(&frame.image, &out)?;
            Ok(0)
        }
        Command::Animate {
            source,
            driving,
            config,
            prior,
            out_dir,
            dump_flows,
        } => {
            let engine = build_engine(load_engine_config(&config)?, &prior)?;
            let src = load_image(&source)?;
            let frames: Vec<ImageTensor> =
                driving.iter().map(|p| load_image(p)).collect::<Result<_>>()?;
            let outputs = animate_frames(&engine, &src, &frames)?;
            ensure_dir(&out_dir)?;
            for (i, frame) in outputs.iter().enumerate() {
                save_image(&frame.image, &out_dir.join(format!("frame_{i:04}.png")))?;
                if dump_flows {
                    let (flow, _) = frame.refined.last().expect("at least one iteration");
                    flo::write_flow(flow, &out_dir.join(format!("frame_{i:04}.flo")))?;
                }
            }
            Ok(0)
        }
        Command::Loss {
            target,
            generated,
            config,
            seed,
            out,
        } => {
            let cfg = load_engine_config(&config)?;
            let extractor = SeededExtractor::new(cfg.seeds.extractor);
            let engine = Engine::new(cfg).map_err(FlowForgeError::from)?;
            let tgt = load_image(&target)?;
            let gen = load_image(&generated)?;
            let report = total_loss(
                &tgt,
                &gen,
                engine.provider(),
                &extractor,
                &TransformSampler::default(),
                seed,
            )
            .map_err(FlowForgeError::from)?;
            let json = serde_json::json!({
                "perceptual": report.perceptual,
                "equivariance": report.equivariance,
                "total": report.total,
            });
            let text = serde_json::to_string_pretty(&json).expect("report serializes");
            match out {
                Some(p) => {
                    std::fs::write(&p, text + "\n").map_err(|e| FlowForgeError::io(&p, e))?
                }
                None => println!("{text}"),
            }
            Ok(0)
        }
        Command::VizFlow { flow, out } => {
            let f = flo::read_flow(&flow)?;
            save_image(&visualize_flow(&f), &out)?;
            Ok(0)
        }
        Command::Gradcheck { seed } => {
            let reports = flowforge_core::gradcheck::run_all(seed);
            let mut ok = true;
            for r in &reports {
                let status = if r.passed { "PASS" } else { "FAIL" };
                println!(
                    "[{status}] {}: max relative error {:.3e} over {} cases (tolerance {:.0e})",
                    r.name, r.max_rel_err, r.cases, r.tolerance
                );
                ok &= r.passed;
            }
            Ok(if ok { 0 } else { 2 })
        }
    }
}

/// Run frames through the engine, in parallel when FLOWFORGE_THREADS
/// allows. Outputs are ordered by frame index and byte-identical to the
/// sequential run.
fn animate_frames(
    engine: &Engine,
    source: &ImageTensor,
    frames: &[ImageTensor],
) -> Result<Vec<flowforge_core::pipeline::FrameOutput>> {
    let cache = engine.prepare_source(source).map_err(FlowForgeError::from)?;
    let relative = if engine.config().relative_motion {
        match frames.first() {
            Some(first) => Some(
                engine
                    .provider()
                    .driving_keypoints(first)
                    .map_err(FlowForgeError::from)?,
            ),
            None => None,
        }
    } else {
        None
    };
    let workers = thread_cap().min(frames.len().max(1));
    if workers <= 1 || frames.len() <= 1 {
        return frames
            .iter()
            .enumerate()
            .map(|(i, f)| {
                engine
                    .frame_with_cache(&cache, source, f, relative.as_ref())
                    .map_err(|e| FlowForgeError::from(e.at_stage(format!("frame {i}"))))
            })
            .collect();
    }

    let next = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<Mutex<Option<flowforge_core::Result<flowforge_core::pipeline::FrameOutput>>>> =
        (0..frames.len()).map(|_| Mutex::new(None)).collect();
    let relative_ref: Option<&KeypointSet> = relative.as_ref();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= frames.len() {
                    break;
                }
                let r = engine.frame_with_cache(&cache, source, &frames[i], relative_ref);
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });
    results
        .into_iter()
        .enumerate()
        .map(|(i, slot)| {
            slot.into_inner()
                .unwrap()
                .expect("worker filled every slot")
                .map_err(|e| FlowForgeError::from(e.at_stage(format!("frame {i}"))))
        })
        .collect()
}
