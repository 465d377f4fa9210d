//! Command-line front end: fit meshes to depth maps, generate synthetic
//! scenes, score estimates, run the Steiner ablation and time the solver.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use meshfit::config::RunConfig;
use meshfit::depthio::{self, DepthKind, MeshKind};
use meshfit::eval::{self, Accuracy, AccuracyReport, FitRequest, REPORT_FORMAT_VERSION};
use meshfit::synth::{generate, SceneSpec};
use meshfit::Error;

#[derive(Parser, Debug)]
#[command(name = "meshfit", version, about = "Fit smooth triangle meshes to inverse-depth maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a mesh to one depth map and print the run report.
    Fit(FitArgs),
    /// Generate a synthetic scene: observed depth, ground truth and landmarks.
    Synth(SynthArgs),
    /// Score estimated depth maps against ground truth.
    Eval(EvalArgs),
    /// Fit one synthetic scene with several Steiner spacings.
    Ablate(AblateArgs),
    /// Time a fixed-budget solve on a synthetic scene.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct SolverOverrides {
    /// Data-term weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Iteration budget.
    #[arg(long)]
    iters: Option<usize>,
}

impl SolverOverrides {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if let Some(l) = self.lambda {
            cfg.solver.lambda = l;
        }
        if let Some(n) = self.iters {
            cfg.solver.max_iters = n;
        }
        cfg.solver.validate()?;
        Ok(())
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Depth map (.pfm, .pgm with a .scale sidecar, or .csv), metric depth.
    #[arg(long)]
    depth: PathBuf,
    /// Landmark CSV `u1,u2[,depth_m]`.
    #[arg(long)]
    landmarks: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ground-truth depth map; adds accuracy to the report.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Mesh output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Mesh format; defaults to the extension of `--out`, else obj.
    #[arg(long)]
    format: Option<MeshFormat>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the mesh rendered back to a depth map.
    #[arg(long)]
    render: Option<PathBuf>,
    /// Steiner spacing in pixels; 0 disables the grid.
    #[arg(long)]
    steiner: Option<usize>,
    #[command(flatten)]
    solver: SolverOverrides,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Config holding the scene keys; a noisy 128x128 bowl when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = DepthFormat::Pfm)]
    format: DepthFormat,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Estimated depth map; repeat for several frames.
    #[arg(long, required = true)]
    depth: Vec<PathBuf>,
    /// Ground truth, one per `--depth`, in the same order.
    #[arg(long, required = true)]
    truth: Vec<PathBuf>,
    /// Config supplying `rel_tol`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Per-pixel residual CSV (single frame only).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AblateArgs {
    /// Config holding the scene and solver keys; a 160x120 bowl when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated Steiner spacings.
    #[arg(long, default_value = "100,50,10")]
    steiner: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Solves per spacing; the fastest is reported.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, value_enum, default_value_t = TableFormat::Toml)]
    format: TableFormat,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverOverrides,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Config holding the scene and solver keys; a 640x480 bowl when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    steiner: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverOverrides,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MeshFormat {
    Obj,
    Ply,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DepthFormat {
    Pfm,
    Pgm,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TableFormat {
    Toml,
    Csv,
}

enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_io() => 2,
            CliError::Core(_) => 1,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

fn emit(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?,
        None => print!("{text}"),
    }
    Ok(())
}

fn scene_or(cfg: &RunConfig, fallback: SceneSpec, seed: Option<u64>) -> SceneSpec {
    let mut spec = cfg.scene.clone().unwrap_or(fallback);
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec
}

fn noisy(mut spec: SceneSpec) -> SceneSpec {
    spec.noise_sigma = 0.003;
    spec
}

fn fit(args: &FitArgs) -> CliResult<()> {
    let mut config = load_config(args.config.as_deref())?;
    args.solver.apply(&mut config)?;
    if let Some(s) = args.steiner {
        config.steiner = Some(s).filter(|&s| s > 0);
    }
    let mesh_kind = match (args.format, &args.out) {
        (Some(MeshFormat::Obj), _) => MeshKind::Obj,
        (Some(MeshFormat::Ply), _) => MeshKind::Ply,
        (None, Some(p)) => MeshKind::from_path(p).unwrap_or(MeshKind::Obj),
        (None, None) => MeshKind::Obj,
    };
    let req = FitRequest {
        depth: args.depth.clone(),
        landmarks: args.landmarks.clone(),
        truth: args.truth.clone(),
        config,
        mesh_out: args.out.clone(),
        mesh_kind,
    };
    let (fit, report) = eval::run_fit(&req)?;
    if let Some(p) = &args.render {
        let grid = eval::render_grid(&fit.mesh)?;
        depthio::write_depth(&grid, p, DepthKind::from_path(p)?)?;
    }
    emit(&report.to_toml(), args.report.as_deref())
}

fn synth(args: &SynthArgs) -> CliResult<()> {
    let cfg = load_config(args.config.as_deref())?;
    let spec = scene_or(&cfg, noisy(SceneSpec::bowl(128, 128)), args.seed);
    let scene = generate::<f64>(&spec)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    let kind = match args.format {
        DepthFormat::Pfm => DepthKind::Pfm,
        DepthFormat::Pgm => DepthKind::Pgm16,
        DepthFormat::Csv => DepthKind::Csv,
    };
    let ext = kind.extension();
    depthio::write_depth(&scene.observed, &args.out.join(format!("observed.{ext}")), kind)?;
    depthio::write_depth(&scene.truth, &args.out.join(format!("truth.{ext}")), kind)?;
    depthio::write_landmarks(&args.out.join("landmarks.csv"), &scene.landmarks)?;
    let scene_cfg = RunConfig {
        scene: Some(spec),
        ..cfg
    };
    emit(&scene_cfg.to_config_string(), Some(&args.out.join("scene.cfg")))
}

fn evaluate(args: &EvalArgs) -> CliResult<()> {
    if args.depth.len() != args.truth.len() {
        return Err(CliError::Usage(format!(
            "{} --depth files but {} --truth files",
            args.depth.len(),
            args.truth.len()
        )));
    }
    if args.out.is_some() && args.depth.len() != 1 {
        return Err(CliError::Usage("--out takes a single frame".into()));
    }
    let cfg = load_config(args.config.as_deref())?;
    let mut per_frame = Vec::with_capacity(args.depth.len());
    for (d, t) in args.depth.iter().zip(&args.truth) {
        let est = depthio::read_depth::<f64>(d, DepthKind::from_path(d)?)?;
        let truth = depthio::read_depth::<f64>(t, DepthKind::from_path(t)?)?;
        if (est.width(), est.height()) != (truth.width(), truth.height()) {
            return Err(Error::InvalidInput(format!("{} and {} differ in size", d.display(), t.display())).into());
        }
        let values: Vec<f64> = (0..est.len()).map(|k| est.get(k).unwrap_or(f64::NAN)).collect();
        let r = eval::residuals(&values, &truth)?;
        per_frame.push(eval::density_from_residuals(&r, cfg.rel_tol)?);
        if let Some(out) = &args.out {
            eval::write_residuals(out, &r)?;
        }
    }
    let report = AccuracyReport {
        format_version: REPORT_FORMAT_VERSION,
        accuracy: Accuracy::from_frames(cfg.rel_tol, per_frame),
    };
    let text = report.to_toml();
    emit(&text, None)
}

fn ablate(args: &AblateArgs) -> CliResult<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    args.solver.apply(&mut cfg)?;
    let spacings = args
        .steiner
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("bad Steiner spacing {s:?}")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let spec = scene_or(&cfg, noisy(SceneSpec::bowl(160, 120)), args.seed);
    let table = eval::run_ablation(&spec, &spacings, &cfg, args.repeats)?;
    let text = match args.format {
        TableFormat::Toml => table.to_toml(),
        TableFormat::Csv => table.to_csv(),
    };
    emit(&text, args.out.as_deref())
}

fn bench(args: &BenchArgs) -> CliResult<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    args.solver.apply(&mut cfg)?;
    let spec = scene_or(&cfg, noisy(SceneSpec::bowl(640, 480)), args.seed);
    let report = eval::run_bench(&spec, args.steiner, &cfg.solver)?;
    emit(&report.to_toml(), args.out.as_deref())
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Fit(a) => fit(a),
        Command::Synth(a) => synth(a),
        Command::Eval(a) => evaluate(a),
        Command::Ablate(a) => ablate(a),
        Command::Bench(a) => bench(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("meshfit: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
