use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::builder::PossibleValuesParser;
use clap::{Args, Parser, Subcommand};
use log::error;

use pseudomask::error::{Error, ErrorClass};
use pseudomask::pipeline::{self, PipelineConfig};

/// Unsupervised instance pseudo-masks for triangle meshes.
///
/// Settings come from an optional TOML config and are overridden by flags.
/// Path templates may use `{scene}`; pass `--scenes list.txt` to run many
/// scenes in a worker pool.
#[derive(Parser, Debug)]
#[command(name = "pseudomask", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    global: GlobalArgs,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Mesh -> segment labels and adjacency sidecar.
    Oversegment,
    /// Segments + features -> pseudo-mask JSON and benchmark export.
    Pseudomask,
    /// Add novel candidate masks to an existing pseudo-mask set.
    Merge,
    /// Score benchmark exports against ground truth.
    Eval,
    /// Write the mesh coloured by pseudo-mask.
    Export,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Scene name substituted for `{scene}`.
    #[arg(long, global = true, conflicts_with = "scenes")]
    scene: Option<String>,
    /// File listing one scene name per line.
    #[arg(long, global = true)]
    scenes: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[arg(long, global = true)]
    mesh: Option<String>,
    #[arg(long = "features-2d", global = true)]
    features_2d: Option<String>,
    #[arg(long = "features-3d", global = true)]
    features_3d: Option<String>,
    #[arg(long, global = true)]
    gt: Option<String>,
    #[arg(long, global = true)]
    candidates: Option<String>,
    #[arg(long, global = true)]
    predictions: Option<String>,
    #[arg(long = "out-dir", global = true)]
    out_dir: Option<String>,

    #[arg(long, global = true)]
    k: Option<f64>,
    #[arg(long = "min-size", global = true)]
    min_size: Option<usize>,
    #[arg(long = "color-weight", global = true)]
    color_weight: Option<f64>,
    #[arg(long = "tau-cut", global = true)]
    tau_cut: Option<f64>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true, value_parser = PossibleValuesParser::new(["max", "avg", "largest", "none"]))]
    separation: Option<String>,
    #[arg(long = "min-foreground", global = true)]
    min_foreground: Option<usize>,
    #[arg(long = "max-instances", global = true)]
    max_instances: Option<usize>,
    #[arg(long, global = true)]
    w2d: Option<f64>,
    #[arg(long, global = true, value_parser = PossibleValuesParser::new(["ncut", "freemask"]))]
    generator: Option<String>,
    #[arg(long, global = true, value_parser = PossibleValuesParser::new(["3d", "2d", "fused"]))]
    modality: Option<String>,
    #[arg(long = "n-seeds", global = true)]
    n_seeds: Option<usize>,
    #[arg(long = "tau-sim", global = true)]
    tau_sim: Option<f64>,
    #[arg(long = "nms-iou", global = true)]
    nms_iou: Option<f64>,
    #[arg(long = "max-kept", global = true)]
    max_kept: Option<usize>,
    #[arg(long = "top-k", global = true)]
    top_k: Option<usize>,
    #[arg(long = "novelty-iou", global = true)]
    novelty_iou: Option<f64>,
    #[arg(long, global = true)]
    cycle: Option<usize>,
    #[arg(long = "eval-mode", global = true, value_parser = PossibleValuesParser::new(["pooled", "per-scene"]))]
    eval_mode: Option<String>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn build_config(g: &GlobalArgs) -> Result<PipelineConfig, Error> {
    let mut cfg = match &g.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let p = &mut cfg.paths;
    for (slot, flag) in [
        (&mut p.mesh, &g.mesh),
        (&mut p.features_2d, &g.features_2d),
        (&mut p.features_3d, &g.features_3d),
        (&mut p.gt, &g.gt),
        (&mut p.candidates, &g.candidates),
        (&mut p.predictions, &g.predictions),
        (&mut p.output_dir, &g.out_dir),
    ] {
        if flag.is_some() {
            *slot = flag.clone();
        }
    }
    set(&mut cfg.overseg.k, g.k);
    set(&mut cfg.overseg.min_size, g.min_size);
    set(&mut cfg.overseg.color_weight, g.color_weight);
    set(&mut cfg.ncut.tau_cut, g.tau_cut);
    set(&mut cfg.ncut.epsilon, g.epsilon);
    set(&mut cfg.ncut.separation, g.separation.as_deref().map(str::parse).transpose()?);
    set(&mut cfg.ncut.min_foreground_segments, g.min_foreground);
    set(&mut cfg.ncut.max_instances, g.max_instances);
    set(&mut cfg.w2d, g.w2d);
    set(&mut cfg.generator, g.generator.as_deref().map(str::parse).transpose()?);
    set(&mut cfg.modality, g.modality.as_deref().map(str::parse).transpose()?);
    set(&mut cfg.freemask.n_seeds, g.n_seeds);
    set(&mut cfg.freemask.tau_sim, g.tau_sim);
    set(&mut cfg.freemask.nms_iou, g.nms_iou);
    set(&mut cfg.freemask.max_kept, g.max_kept);
    set(&mut cfg.merge.top_k, g.top_k);
    set(&mut cfg.merge.min_novelty_iou, g.novelty_iou);
    set(&mut cfg.merge.cycle, g.cycle);
    if let Some(mode) = g.eval_mode.as_deref() {
        cfg.eval.mode = match mode {
            "per-scene" => pseudomask::eval::EvalMode::PerScene,
            _ => pseudomask::eval::EvalMode::Pooled,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn scene_names(g: &GlobalArgs, cfg: &PipelineConfig) -> Result<Vec<String>, Error> {
    if let Some(list) = &g.scenes {
        return pipeline::read_scene_list(list);
    }
    if let Some(s) = &g.scene {
        return Ok(vec![s.clone()]);
    }
    // a single literal mesh path names its own scene
    match cfg.paths.mesh.as_deref() {
        Some(m) if !m.contains("{scene}") => Path::new(m)
            .file_stem()
            .map(|s| vec![s.to_string_lossy().into_owned()])
            .ok_or_else(|| Error::Config(format!("cannot derive a scene name from '{m}'"))),
        _ => Err(Error::Config("pass --scene or --scenes".into())),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = if cli.global.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let prepared = build_config(&cli.global).and_then(|cfg| scene_names(&cli.global, &cfg).map(|s| (cfg, s)));
    let (cfg, scenes) = match prepared {
        Ok(v) => v,
        Err(e) => {
            error!("{e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let jobs = cli.global.jobs;

    if cli.command == Command::Eval {
        return match pipeline::cmd_eval(&cfg, &scenes, jobs) {
            Ok(summary) => {
                print!("{}", pseudomask::eval::format_table(&summary));
                ExitCode::SUCCESS
            }
            Err(e) => {
                error!("{e}");
                ExitCode::from(exit_code(&e))
            }
        };
    }

    let report = pipeline::run_batch(&scenes, jobs, |scene| match cli.command {
        Command::Oversegment => pipeline::cmd_oversegment(&cfg, scene).map(drop),
        Command::Pseudomask => pipeline::cmd_pseudomask(&cfg, scene).map(drop),
        Command::Merge => pipeline::cmd_merge(&cfg, scene).map(drop),
        Command::Export => pipeline::cmd_export_colored(&cfg, scene).map(drop),
        Command::Eval => unreachable!(),
    });
    match report {
        Ok(report) => {
            if scenes.len() > 1 || !report.failed.is_empty() {
                eprintln!(
                    "{} of {} scenes succeeded",
                    report.succeeded.len(),
                    scenes.len()
                );
            }
            for (scene, e) in &report.failed {
                eprintln!("failed: {scene}: {e}");
            }
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
