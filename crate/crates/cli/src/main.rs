mod config;

use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use edgesplat::ablation::{run_ablation, AblationMode, AblationReport};
use edgesplat::checkpoint;
use edgesplat::imageio::{self, BitDepth};
use edgesplat::metrics::{self, MetricReport};
use edgesplat::render::render;
use edgesplat::synth::{self, Rig, Scene, SynthSpec};
use edgesplat::train::{MetricsRow, Trainer, METRICS_HEADER};
use edgesplat::Cloud;

use config::{extract_overrides, RunConfig};

const RUN_ROOT_ENV: &str = "EDGESPLAT_RUN_ROOT";
const FINAL_CHECKPOINT: &str = "final.ckpt";

#[derive(Parser)]
#[command(name = "edgesplat", version, about = "CPU gaussian splatting with edge and appearance attention")]
struct Cli {
    /// Worker threads for rendering (1 = single-threaded).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene directory.
    Synth(SynthArgs),
    /// Train on a scene; `--section.key value` overrides any config field.
    Train(TrainArgs),
    /// Render views of a checkpoint.
    Render(RenderArgs),
    /// PSNR/SSIM of a checkpoint on the held-out views.
    Eval(EvalArgs),
    /// Train the four ablation arms from one shared initialization.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    gaussians: usize,
    #[arg(long, default_value_t = 24)]
    cameras: usize,
    #[arg(long, default_value_t = 128)]
    resolution: usize,
    /// orbit or grid
    #[arg(long, default_value = "orbit")]
    rig: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50.0)]
    fov: f64,
    #[arg(long, default_value_t = 4.0)]
    distance: f64,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// baseline, geo, geo+opacity or full
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Run directory; defaults to a name under $EDGESPLAT_RUN_ROOT (or ./runs).
    #[arg(long)]
    run_dir: Option<PathBuf>,
    /// Resume from a checkpoint written by an earlier run (its `.state` file must sit beside it).
    #[arg(long)]
    resume: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    /// test, train, all, or comma-separated camera indices.
    #[arg(long, default_value = "test")]
    views: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    bits: u8,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Run directory holding final.ckpt.
    #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
    run: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Where to write eval.csv (defaults to the run directory, if any).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds; results are averaged.
    #[arg(long, default_value = "0")]
    seeds: String,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Bad input from the user (exit code 2) as opposed to a failed run (exit code 1).
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(e: impl std::fmt::Display) -> anyhow::Error {
    UsageError(e.to_string()).into()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let (args, overrides) = match extract_overrides(std::env::args().collect()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli, overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.is::<UsageError>() { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli, overrides: Vec<(String, String)>) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let takes_overrides = matches!(cli.command, Command::Train(_) | Command::Ablate(_));
    if !overrides.is_empty() && !takes_overrides {
        return Err(usage(format!("config overrides such as --{} only apply to train and ablate", overrides[0].0)));
    }
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a, &overrides),
        Command::Render(a) => cmd_render(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablate(a) => cmd_ablate(a, &overrides),
    }
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        n_gaussians: a.gaussians,
        rig: a.rig.parse::<Rig>().map_err(usage)?,
        n_cameras: a.cameras,
        resolution: a.resolution,
        seed: a.seed,
        fov_degrees: a.fov,
        camera_distance: a.distance,
        ..Default::default()
    };
    spec.validate().map_err(usage)?;
    let m = synth::generate_scene(&spec, &a.out)?;
    println!(
        "scene {} : {} gaussians, {} {} cameras ({} train / {} test), {}x{}",
        a.out.display(),
        spec.n_gaussians,
        m.cameras.len(),
        m.rig.as_str(),
        m.train_indices().len(),
        m.test_indices().len(),
        m.width,
        m.height
    );
    Ok(())
}

fn load_config(path: Option<&Path>, overrides: &[(String, String)], mode: Option<&str>) -> Result<RunConfig> {
    let text = match path {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    RunConfig::from_toml(&text, overrides, mode).map_err(|e| usage(format!("{e:#}")))
}

fn load_scene(dir: &Path) -> Result<Scene<f64>> {
    synth::load_scene(dir).with_context(|| format!("loading scene {}", dir.display()))
}

fn run_root() -> PathBuf {
    std::env::var_os(RUN_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

fn version_string() -> String {
    format!("edgesplat {}\n", env!("CARGO_PKG_VERSION"))
}

fn state_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("state")
}

fn write_checkpoint(dir: &Path, name: &str, trainer: &Trainer<'_, f64>) -> Result<PathBuf> {
    let path = dir.join(name);
    checkpoint::save_cloud(&path, &trainer.cloud)?;
    checkpoint::save_state(&state_path(&path), &trainer.state())?;
    Ok(path)
}

/// Rows of an existing metrics file up to and including `iteration`.
fn metrics_prefix(path: &Path, iteration: usize) -> Result<Vec<String>> {
    let Ok(f) = File::open(path) else {
        return Ok(Vec::new());
    };
    let mut keep = Vec::new();
    for line in BufReader::new(f).lines().skip(1) {
        let line = line?;
        let row = MetricsRow::parse_csv_line(&line).ok_or_else(|| anyhow!("malformed line in {}", path.display()))?;
        if row.iter <= iteration {
            keep.push(line);
        }
    }
    Ok(keep)
}

fn cmd_train(a: TrainArgs, overrides: &[(String, String)]) -> Result<()> {
    let cfg = load_config(a.config.config.as_deref(), overrides, a.config.mode.as_deref())?;
    let train_cfg = cfg.to_train().map_err(usage)?;
    let scene = load_scene(&a.scene)?;
    let run_dir = a.run_dir.unwrap_or_else(|| {
        run_root().join(format!("{}-{}-seed{}", scene_name(&a.scene), cfg.mode, train_cfg.seed))
    });
    fs::create_dir_all(run_dir.join("checkpoints")).with_context(|| format!("creating {}", run_dir.display()))?;
    fs::write(run_dir.join("config.toml"), cfg.to_toml())?;
    fs::write(run_dir.join("VERSION"), version_string())?;

    let mut trainer = match &a.resume {
        Some(ckpt) => {
            let cloud: Cloud = checkpoint::load_cloud(ckpt)?;
            let state = checkpoint::load_state(&state_path(ckpt), train_cfg.adam)?;
            Trainer::resume(&scene, train_cfg.clone(), cloud, state)?
        }
        None => Trainer::from_slv(&scene, train_cfg.clone())?,
    };
    log::info!(
        "training {} for {} iterations from iteration {} ({} gaussians, mode {})",
        a.scene.display(),
        train_cfg.total_iters,
        trainer.iteration,
        trainer.cloud.len(),
        cfg.mode
    );

    let metrics_path = run_dir.join("metrics.csv");
    let kept = if a.resume.is_some() {
        metrics_prefix(&metrics_path, trainer.iteration)?
    } else {
        Vec::new()
    };
    let mut metrics_file = File::create(&metrics_path)?;
    writeln!(metrics_file, "{METRICS_HEADER}")?;
    for line in kept {
        writeln!(metrics_file, "{line}")?;
    }
    let ckpt_dir = run_dir.join("checkpoints");
    let checkpoint_iters = cfg.train.checkpoint_iters.clone();
    let mut events_seen = trainer.events.len();
    let mut events_log = fs::OpenOptions::new().create(true).append(true).open(run_dir.join("events.log"))?;
    trainer.run_to::<anyhow::Error>(
        train_cfg.total_iters,
        |row| {
            writeln!(metrics_file, "{}", row.to_csv_line())?;
            metrics_file.flush()?;
            if let (Some(tr), Some(te)) = (row.train_psnr, row.test_psnr) {
                log::info!("iter {} loss {:.5} size {} train {:.2} dB test {:.2} dB", row.iter, row.loss, row.cloud_size, tr, te);
            }
            Ok(())
        },
        |t| {
            for e in &t.events[events_seen..] {
                writeln!(events_log, "{e}")?;
            }
            events_seen = t.events.len();
            if checkpoint_iters.contains(&t.iteration) {
                write_checkpoint(&ckpt_dir, &format!("iter_{:06}.ckpt", t.iteration), t)?;
            }
            Ok(())
        },
    )?;
    write_checkpoint(&run_dir, FINAL_CHECKPOINT, &trainer)?;

    let report = evaluate(&scene, &trainer.cloud, &scene.manifest.test_indices(), Some(&run_dir.join("renders")))?;
    fs::write(run_dir.join("eval.csv"), report.to_csv())?;
    print!("{}", report.to_table());
    println!("run directory: {}", run_dir.display());
    Ok(())
}

fn scene_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "scene".into())
}

fn evaluate(scene: &Scene<f64>, cloud: &Cloud, views: &[usize], renders: Option<&Path>) -> Result<MetricReport> {
    if let Some(dir) = renders {
        fs::create_dir_all(dir)?;
    }
    let bg = scene.background();
    let mut report = MetricReport::default();
    for &v in views {
        let img = render(cloud, &scene.cameras[v], bg)?.clamped();
        let name = format!("cam_{v:04}");
        if let Some(dir) = renders {
            imageio::write_ppm(&dir.join(format!("{name}.ppm")), &img, BitDepth::Sixteen)?;
        }
        report.push(
            name,
            metrics::psnr(&img, &scene.images[v])?,
            metrics::ssim(&img, &scene.images[v])?,
        );
    }
    Ok(report)
}

fn parse_views(sel: &str, scene: &Scene<f64>) -> Result<Vec<usize>> {
    let m = &scene.manifest;
    Ok(match sel {
        "test" => m.test_indices(),
        "train" => m.train_indices(),
        "all" => (0..m.cameras.len()).collect(),
        list => {
            let mut out = Vec::new();
            for part in list.split(',') {
                let i: usize = part.trim().parse().map_err(|_| usage(format!("bad camera index {part:?}")))?;
                if i >= m.cameras.len() {
                    return Err(usage(format!("unknown camera {i}: scene has {} cameras", m.cameras.len())));
                }
                out.push(i);
            }
            out
        }
    })
}

fn cmd_render(a: RenderArgs) -> Result<()> {
    let depth = match a.bits {
        8 => BitDepth::Eight,
        16 => BitDepth::Sixteen,
        b => return Err(usage(format!("--bits must be 8 or 16, got {b}"))),
    };
    let scene = load_scene(&a.scene)?;
    let views = parse_views(&a.views, &scene)?;
    let cloud: Cloud = checkpoint::load_cloud(&a.checkpoint)?;
    fs::create_dir_all(&a.out)?;
    for v in views {
        let img = render(&cloud, &scene.cameras[v], scene.background())?.clamped();
        let path = a.out.join(format!("cam_{v:04}.ppm"));
        imageio::write_ppm(&path, &img, depth)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let scene = load_scene(&a.scene)?;
    let ckpt = match (&a.run, &a.checkpoint) {
        (Some(run), _) => run.join(FINAL_CHECKPOINT),
        (None, Some(c)) => c.clone(),
        (None, None) => bail!(usage("need --run or --checkpoint")),
    };
    let cloud: Cloud = checkpoint::load_cloud(&ckpt)?;
    let report = evaluate(&scene, &cloud, &scene.manifest.test_indices(), None)?;
    if let Some(dir) = a.out.as_ref().or(a.run.as_ref()) {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("eval.csv"), report.to_csv())?;
    }
    print!("{}", report.to_table());
    Ok(())
}

fn cmd_ablate(a: AblateArgs, overrides: &[(String, String)]) -> Result<()> {
    let cfg = load_config(a.config.as_deref(), overrides, None)?;
    let base = cfg.to_train().map_err(usage)?;
    let seeds: Vec<u64> = a
        .seeds
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| usage(format!("bad seed {s:?}"))))
        .collect::<Result<_>>()?;
    let scene = load_scene(&a.scene)?;
    let out = a.out.unwrap_or_else(|| run_root().join(format!("{}-ablate", scene_name(&a.scene))));
    fs::create_dir_all(&out)?;
    fs::write(out.join("config.toml"), cfg.to_toml())?;
    fs::write(out.join("VERSION"), version_string())?;

    let mut reports = Vec::new();
    for &seed in &seeds {
        let mut c = base.clone();
        c.seed = seed;
        let report = run_ablation(&scene, &c, &AblationMode::ALL, |mode, outcome| {
            log::info!("seed {seed} {mode}: {} gaussians", outcome.cloud.len());
            let path = out.join(format!("seed{seed}-{}.ckpt", mode.as_str().replace('+', "-")));
            checkpoint::save_cloud(&path, &outcome.cloud)
        })?;
        log::info!("seed {seed}: shared initialization hash {:016x}", report.init_hash);
        fs::write(out.join(format!("seed{seed}.csv")), report.to_csv())?;
        reports.push(report);
    }
    let mean = mean_report(&reports);
    fs::write(out.join("ablation.csv"), mean.to_csv())?;
    print!("{}", mean.to_table());
    Ok(())
}

fn mean_report(reports: &[AblationReport]) -> AblationReport {
    let mut rows = reports[0].rows.clone();
    let n = reports.len() as f64;
    for (k, row) in rows.iter_mut().enumerate() {
        row.test_psnr = reports.iter().map(|r| r.rows[k].test_psnr).sum::<f64>() / n;
        row.test_ssim = reports.iter().map(|r| r.rows[k].test_ssim).sum::<f64>() / n;
        row.train_psnr = reports.iter().map(|r| r.rows[k].train_psnr).sum::<f64>() / n;
        row.final_size = (reports.iter().map(|r| r.rows[k].final_size).sum::<usize>() as f64 / n).round() as usize;
    }
    AblationReport {
        init_hash: reports[0].init_hash,
        rows,
    }
}
