//! `activeseg`: run campaigns and experiment grids, generate worlds,
//! re-evaluate checkpoints and export figure tables.

use activeseg_core::mission::{
    evaluate_model, evaluation_poses, export_plots, patch, run_grid, write_grid_summaries, Campaign, GridSpec,
    RunDir, RUN_DIR_ENV,
};
use activeseg_core::world::{generate_world, save_world, Layout, WorldSpec};
use activeseg_core::{Error, MissionConfig, Oracle, SurrogateModel};
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "activeseg", version, about = "Active learning of aerial semantic segmentation with informative path planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one campaign and persist it under the run-directory root.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        root: RootArg,
        /// Print the resolved configuration and exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Run every point of an experiment grid for every seed.
    Grid {
        /// Grid description (TOML with `seeds`, `[axes]` and `[base]`).
        spec: PathBuf,
        #[command(flatten)]
        root: RootArg,
        /// Output directory; defaults to `<root>/grid-<spec name>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Campaigns run concurrently.
        #[arg(long, short, default_value_t = 1)]
        jobs: usize,
        /// Keep only the grid summaries, not one run directory per campaign.
        #[arg(long)]
        summaries_only: bool,
    },
    /// Generate a procedural world and write it to disk.
    GenWorld {
        #[command(flatten)]
        world: WorldArgs,
        /// Target directory for `world.txt` and its rasters.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score checkpoints on the held-out views of a configuration's world.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Checkpoint files to score.
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
    },
    /// Write per-figure CSVs (mIoU against human-labelled pixels) from a grid.
    ExportPlots {
        /// Directory written by `grid`.
        grid: PathBuf,
        /// Defaults to `<grid>/plots`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RootArg {
    /// Root under which run directories are created.
    #[arg(long = "run-root", env = RUN_DIR_ENV, default_value = "runs")]
    run_root: PathBuf,
}

/// Mission configuration: a base (defaults, `--desk` or `--config`), then
/// the individual flags, then `--set` overrides in order.
#[derive(Args)]
struct ConfigArgs {
    /// Mission configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the small desk-scale preset instead of the defaults.
    #[arg(long, conflicts_with = "config")]
    desk: bool,
    /// Override any configuration key, e.g. `--set train.max_epochs=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,

    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    missions: Option<u64>,
    /// Flight-time budget per mission, seconds.
    #[arg(long)]
    budget: Option<f64>,
    /// Flight speed, m/s.
    #[arg(long)]
    speed: Option<f64>,
    /// Human labels per image: a pixel count or a percentage such as `0.6%`.
    #[arg(long)]
    alpha: Option<String>,
    /// Percent bound of the selection pools.
    #[arg(long)]
    beta: Option<f64>,
    /// Region impurity radius.
    #[arg(long)]
    radius: Option<u64>,
    /// `frontier` or `coverage`.
    #[arg(long)]
    planner: Option<String>,
    /// `ours`, `random`, `unc_rand`, `rand_unc`, `reg_imp_greedy` or `dense`.
    #[arg(long)]
    human: Option<String>,
    /// `ours`, `random`, `dist_align`, `none` or `dense`.
    #[arg(long)]
    pseudo: Option<String>,
    #[arg(long)]
    pseudo_spacing: Option<f64>,
    #[arg(long)]
    sensor_noise: Option<f64>,
    #[arg(long)]
    voxel_size: Option<f64>,
    #[arg(long)]
    init_checkpoint: Option<PathBuf>,
    /// Load the world from a directory written by `gen-world`.
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long)]
    world_seed: Option<u64>,
    #[arg(long)]
    mc_samples: Option<u64>,
    #[arg(long)]
    max_epochs: Option<u64>,
}

impl ConfigArgs {
    fn overrides(&self) -> Result<Vec<(String, toml::Value)>> {
        use toml::Value as V;
        let mut out: Vec<(String, V)> = Vec::new();
        let mut int = |k: &str, v: Option<u64>| {
            if let Some(v) = v {
                out.push((k.into(), V::Integer(v as i64)));
            }
        };
        int("seed", self.seed);
        int("missions", self.missions);
        int("radius", self.radius);
        int("world.seed", self.world_seed);
        int("model.mc_samples", self.mc_samples);
        int("train.max_epochs", self.max_epochs);
        for (k, v) in [
            ("budget", self.budget),
            ("speed", self.speed),
            ("beta", self.beta),
            ("pseudo_spacing", self.pseudo_spacing),
            ("sensor_noise", self.sensor_noise),
            ("voxel_size", self.voxel_size),
        ] {
            if let Some(v) = v {
                out.push((k.into(), V::Float(v)));
            }
        }
        if let Some(a) = &self.alpha {
            let v = a.parse::<i64>().map(V::Integer).unwrap_or_else(|_| V::String(a.clone()));
            out.push(("alpha".into(), v));
        }
        for (k, v) in [("planner", &self.planner), ("human", &self.human), ("pseudo", &self.pseudo)] {
            if let Some(v) = v {
                out.push((k.into(), V::String(v.clone())));
            }
        }
        for (k, v) in [("init_checkpoint", &self.init_checkpoint), ("world.path", &self.world)] {
            if let Some(p) = v {
                out.push((k.into(), V::String(p.display().to_string())));
            }
        }
        for s in &self.sets {
            let (k, raw) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("`--set {s}` is not KEY=VALUE")))?;
            out.push((k.trim().to_string(), parse_value(raw.trim())));
        }
        Ok(out)
    }

    fn resolve(&self) -> Result<MissionConfig> {
        let base = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                MissionConfig::from_toml(&text)?
            }
            None if self.desk => MissionConfig::desk(),
            None => MissionConfig::default(),
        };
        let mut value = toml::Value::try_from(&base).map_err(Error::from)?;
        for (k, v) in self.overrides()? {
            patch(&mut value, &k, v)?;
        }
        let cfg: MissionConfig = value
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A TOML literal if it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[derive(Args)]
struct WorldArgs {
    /// Take the `[world]` table of a mission configuration as the base.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    cell_size: Option<f64>,
    #[arg(long)]
    classes: Option<usize>,
    /// `urban` or `patches`.
    #[arg(long)]
    layout: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    variation: Option<f64>,
}

impl WorldArgs {
    fn resolve(&self) -> Result<WorldSpec> {
        let mut spec = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                MissionConfig::from_toml(&text)?.world
            }
            None => WorldSpec::default(),
        };
        spec.path = None;
        if let Some(v) = self.width {
            spec.width = v;
        }
        if let Some(v) = self.length {
            spec.length = v;
        }
        if let Some(v) = self.cell_size {
            spec.cell_size = v;
        }
        if let Some(v) = self.classes {
            spec.classes = v;
        }
        if let Some(v) = self.seed {
            spec.seed = v;
        }
        if let Some(v) = self.variation {
            spec.variation = v;
        }
        if let Some(l) = &self.layout {
            spec.layout = toml::Value::String(l.clone())
                .try_into::<Layout>()
                .map_err(|_| Error::Config(format!("unknown layout `{l}`")))?;
        }
        Ok(spec)
    }
}

fn cmd_run(config: &ConfigArgs, root: &Path, dry_run: bool) -> Result<()> {
    let cfg = config.resolve()?;
    if dry_run {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    let dir = RunDir::create(root, &cfg)?;
    log::info!("run directory {}", dir.path().display());
    let mut campaign = Campaign::new(cfg.clone())?;
    println!("mission\thuman_pixels\tbudget_spent\tmiou\taccuracy");
    for _ in 0..cfg.missions {
        let step = campaign.run_mission(Some(&dir));
        if let Err(e) = step {
            dir.write_record(campaign.record(), campaign.world().num_classes())?;
            return Err(e.into());
        }
        let m = campaign.record().metrics.last().expect("mission recorded");
        println!(
            "{}\t{}\t{:.1}\t{:.4}\t{:.4}",
            m.mission, m.human_pixels, m.budget_spent, m.miou, m.accuracy
        );
    }
    println!("{}", dir.path().display());
    Ok(())
}

fn cmd_grid(spec_path: &Path, root: &Path, out: Option<PathBuf>, jobs: usize, summaries_only: bool) -> Result<()> {
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", spec_path.display())))?;
    let spec = GridSpec::from_toml(&text)?;
    let out = out.unwrap_or_else(|| {
        let stem = spec_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        root.join(format!("grid-{stem}"))
    });
    let runs_root = out.join("runs");
    let n = spec.points()?.len() * spec.seeds.len();
    log::info!("{n} campaigns, {jobs} at a time, into {}", out.display());
    let progress = |s: &str| log::info!("start {s}");
    let (points, runs) = run_grid(&spec, (!summaries_only).then_some(runs_root.as_path()), jobs, &progress)?;
    write_grid_summaries(&out, &spec, &points, &runs)?;
    println!("{}", out.display());
    Ok(())
}

fn cmd_gen_world(args: &WorldArgs, out: &Path) -> Result<()> {
    let spec = args.resolve()?;
    let world = generate_world(&spec)?;
    save_world(&world, out)?;
    let (w, l) = world.cells();
    println!("{w}x{l} cells, {} classes -> {}", world.num_classes(), out.display());
    Ok(())
}

fn cmd_eval(config: &ConfigArgs, checkpoints: &[PathBuf]) -> Result<()> {
    let cfg = config.resolve()?;
    let world = generate_world(&cfg.world)?;
    let oracle = Oracle::new();
    let cam = cfg.camera;
    let poses = evaluation_poses(&world, cam.altitude, cfg.eval.views_per_side, cfg.eval.jitter, cfg.world.seed);
    let k = world.num_classes();
    let iou_cols: Vec<String> = (1..=k).map(|c| format!("iou_{c}")).collect();
    println!("checkpoint,miou,accuracy,{}", iou_cols.join(","));
    for path in checkpoints {
        let model = SurrogateModel::load(path).with_context(|| format!("loading {}", path.display()))?;
        if model.classes() != k {
            return Err(Error::Config(format!("{} predicts {} classes, the world has {k}", path.display(), model.classes())).into());
        }
        let cm = evaluate_model(&model, &world, &oracle, &cam, &poses)?;
        let ious: Vec<String> = cm
            .per_class_iou()
            .iter()
            .map(|v| v.map(|x| format!("{x:.4}")).unwrap_or_default())
            .collect();
        println!("{},{:.4},{:.4},{}", path.display(), cm.miou()?, cm.accuracy()?, ious.join(","));
    }
    Ok(())
}

fn cmd_export_plots(grid: &Path, out: Option<PathBuf>) -> Result<()> {
    let out = out.unwrap_or_else(|| grid.join("plots"));
    for p in export_plots(grid, &out)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, root, dry_run } => cmd_run(&config, &root.run_root, dry_run),
        Command::Grid {
            spec,
            root,
            out,
            jobs,
            summaries_only,
        } => cmd_grid(&spec, &root.run_root, out, jobs, summaries_only),
        Command::GenWorld { world, out } => cmd_gen_world(&world, &out),
        Command::Eval { config, checkpoints } => cmd_eval(&config, &checkpoints),
        Command::ExportPlots { grid, out } => cmd_export_plots(&grid, out),
    }
}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain()
        .any(|c| c.downcast_ref::<Error>().is_some_and(Error::is_config))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_config_error(&e) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
