use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use fsnav_core::cone::ConeMapFile;
use fsnav_core::cone_map::{build_boundary_grid, infer_start_pose, ConeRegistry, BOUNDARY_RESOLUTION};
use fsnav_core::geometry::Pose2D;
use fsnav_core::harness::bench::{evaluate_run_dir, metrics_row, write_bench, write_run_artifacts, RUN_COLUMNS};
use fsnav_core::harness::{run_bench, run_on_track, ExperimentConfig, Suite};
use fsnav_core::par::{threads_from_env, with_threads, Execution};
use fsnav_core::planners::{plan_midline, plan_racing_line, PlannerParams};
use fsnav_core::track::{generate_track, Track, TrackSpec};

#[derive(Parser)]
#[command(name = "fsnav", version, about = "Cone-track navigation simulator and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlannerArg {
    Midline,
    HybridAstar,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a track from a spec JSON.
    GenTrack {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one mission on a track and write its artifacts.
    Simulate {
        #[arg(long)]
        track: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Plan a path on a cone list.
    Plan {
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "hybrid-astar")]
        planner: PlannerArg,
        /// Start pose as x,y,theta; inferred from the orange cones when absent.
        #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
        start: Option<Pose2D>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute run metrics from a run directory.
    Evaluate {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a suite of experiments.
    Bench {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        sequential: bool,
    },
}

struct CliError {
    kind: &'static str,
    message: String,
}

impl CliError {
    fn new(kind: &'static str, message: impl ToString) -> Self {
        Self { kind, message: message.to_string() }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn parse_pose(s: &str) -> std::result::Result<Pose2D, String> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|e| e.to_string())?;
    match v.as_slice() {
        [x, y, th] => Ok(Pose2D::new(*x, *y, *th)),
        _ => Err("expected x,y,theta".into()),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::new("io", format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::new("parse", format!("{}: {e}", path.display())))
}

fn load_track(path: &Path) -> Result<Track> {
    let t = Track::from_json(&read(path)?).map_err(|e| CliError::new("parse", format!("{}: {e}", path.display())))?;
    t.validate().map_err(|e| CliError::new("invalid_input", format!("{}: {e}", path.display())))?;
    Ok(t)
}

fn gen_track(spec: Option<&Path>, seed: u64, out: &Path) -> Result<()> {
    let spec: TrackSpec = match spec {
        Some(p) => parse_json(p)?,
        None => TrackSpec::default(),
    };
    let t = generate_track(&TrackSpec { seed, ..spec }).map_err(|e| CliError::new("invalid_input", e))?;
    write(out, &t.to_json())
}

fn simulate(track: &Path, config: Option<&Path>, seed: Option<u64>, out_dir: &Path) -> Result<()> {
    let track = load_track(track)?;
    let cfg: ExperimentConfig = match config {
        Some(p) => parse_json(p)?,
        None => ExperimentConfig::default(),
    };
    let seed = seed.or_else(|| cfg.seeds.first().copied()).unwrap_or(0);
    let run = run_on_track(&cfg, track, seed).map_err(|e| CliError::new("run", e))?;
    write_run_artifacts(out_dir, &run).map_err(|e| CliError::new("io", format!("{}: {e}", out_dir.display())))
}

fn plan(registry: &Path, params: Option<&Path>, planner: PlannerArg, start: Option<Pose2D>, out: &Path) -> Result<()> {
    let file = ConeMapFile::from_json(&read(registry)?).map_err(|e| CliError::new("parse", format!("{}: {e}", registry.display())))?;
    let reg = ConeRegistry::from_cones(&file.cones);
    let params: PlannerParams = match params {
        Some(p) => parse_json(p)?,
        None => PlannerParams::default(),
    };
    let start = match start.or_else(|| infer_start_pose(&reg)) {
        Some(s) => s,
        None => return Err(CliError::new("invalid_input", "no start pose given and none can be inferred from orange cones")),
    };
    let path = match planner {
        PlannerArg::Midline => plan_midline(&reg, &start),
        PlannerArg::HybridAstar => {
            let grid = build_boundary_grid(&reg, BOUNDARY_RESOLUTION, &start).map_err(|e| CliError::new("plan", e))?;
            plan_racing_line(&reg, &grid, &params, &start)
        }
    }
    .map_err(|e| CliError::new("plan", e))?;
    write(out, &path.to_csv())
}

fn evaluate(run_dir: &Path, gt: &Path, out: &Path) -> Result<()> {
    let track = load_track(gt)?;
    let m = evaluate_run_dir(run_dir, &track).map_err(|e| CliError::new("evaluate", e))?;
    // bench layout is runs/<config>/<seed>
    let name = |p: Option<&Path>| p.and_then(|p| p.file_name()).map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let leaf = name(Some(run_dir));
    let (id, seed) = match leaf.parse::<u64>() {
        Ok(seed) => (name(run_dir.parent()), seed),
        Err(_) => (leaf, 0),
    };
    write(out, &format!("{RUN_COLUMNS}\n{}\n", metrics_row(&id, seed, &Ok(m))))
}

fn bench(suite: &Path, out_dir: &Path, sequential: bool) -> Result<()> {
    let suite = Suite::from_json(&read(suite)?).map_err(|e| CliError::new("invalid_input", format!("{}: {e}", suite.display())))?;
    let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
    let out = with_threads(threads_from_env(), || run_bench(&suite.configs, exec));
    write_bench(out_dir, &suite.configs, &out).map_err(|e| CliError::new("io", format!("{}: {e}", out_dir.display())))?;
    let failed = out.records.iter().filter(|r| r.outcome.is_err()).count();
    eprintln!("{} runs, {failed} failed; results in {}", out.records.len(), out_dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenTrack { spec, seed, out } => gen_track(spec.as_deref(), seed, &out),
        Cmd::Simulate { track, config, seed, out_dir } => simulate(&track, config.as_deref(), seed, &out_dir),
        Cmd::Plan { registry, params, planner, start, out } => plan(&registry, params.as_deref(), planner, start, &out),
        Cmd::Evaluate { run_dir, gt, out } => evaluate(&run_dir, &gt, &out),
        Cmd::Bench { suite, out_dir, sequential } => bench(&suite, &out_dir, sequential),
    }
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": e.kind, "message": e.message } }));
    ExitCode::from(if e.kind == "usage" { 2 } else { 1 })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(CliError::new("usage", e.to_string().trim_end())),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
