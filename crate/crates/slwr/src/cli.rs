//! Argument parsing and subcommand dispatch.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;
use slwr_core::fpe::{mollified_delta, solve_fpe, Closure, DensityMesh, FpeSettings, TabulatedDrift};
use slwr_core::inference::{congestion_risk, flow_pushforward, recover_density, summary_stats};
use slwr_core::model::TrafficModel;
use slwr_core::net::{learn_noise, train};
use slwr_core::pfode::{assemble_velocity, check_boundary_compatibility, sample_particles, TabulatedScore};
use slwr_core::spde::{deterministic_lwr, estimate_conditional_drift, Ensemble, SpaceTimeGrid};

use crate::config::{ModelConfig, TrainConfigFile};
use crate::error::{CliError, EXIT_CONFIG, EXIT_OK, EXIT_VALIDATION};
use crate::io::{read_checkpoint, read_ensemble, tables, write_checkpoint, write_ensemble};
use crate::manifest::ManifestBuilder;
use crate::parallel;
use crate::triangle::{run_triangle, TriangleSettings};

#[derive(Debug, Parser)]
#[command(name = "slwr", version, about = "Stochastic LWR distributional pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the standing assumptions of a model configuration.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Monte Carlo ensemble of the SPDE.
    Simulate(SimulateArgs),
    /// One-point Fokker–Planck solve at a fixed position.
    SolveFpe(SolveFpeArgs),
    /// Probability-flow transport of particles drawn from a density grid.
    Pfode(PfodeArgs),
    /// Physics-informed score training.
    Train(TrainArgs),
    /// Density recovery, summary statistics and flow pushforward.
    Infer(InferArgs),
    /// Monte Carlo against Fokker–Planck against probability flow.
    Triangle(TriangleArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub nx: usize,
    #[arg(long)]
    pub nt: usize,
    #[arg(long)]
    pub nreal: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub store_every: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ClosureArgs {
    /// `zero`, `oracle:<ensemble.bin>`, `meanfield` or `meanfield:<ensemble.bin>`.
    #[arg(long, default_value = "zero")]
    pub closure: String,
    /// Drift bins for the oracle closure.
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    /// Spatial cells of the deterministic run behind `meanfield`.
    #[arg(long, default_value_t = 256)]
    pub lwr_nx: usize,
}

#[derive(Debug, Args)]
pub struct SolveFpeArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub closure: ClosureArgs,
    #[arg(long)]
    pub x: f64,
    #[arg(long)]
    pub ncells: usize,
    #[arg(long)]
    pub dt: f64,
    #[arg(long)]
    pub tmax: f64,
    /// Width of the mollified initial delta; defaults to four cells.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub store_every: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PfodeArgs {
    #[arg(long)]
    pub pgrid: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub closure: ClosureArgs,
    #[arg(long)]
    pub x: f64,
    #[arg(long)]
    pub t0: f64,
    #[arg(long)]
    pub t1: f64,
    #[arg(long)]
    pub nparticles: usize,
    #[arg(long)]
    pub seed: u64,
    /// RK4 step; defaults to the spacing of the stored grid times.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub obs: PathBuf,
    #[arg(long)]
    pub train_config: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub x: f64,
    #[arg(long)]
    pub t: f64,
    #[arg(long)]
    pub rho_c: f64,
    #[arg(long, default_value_t = 64)]
    pub nq: usize,
    /// Anchor of the score integration; defaults to half the jam density.
    #[arg(long)]
    pub rho_star: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional flow-density table.
    #[arg(long)]
    pub flow: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    pub nq_flow: usize,
}

#[derive(Debug, Args)]
pub struct TriangleArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub nreal: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub nx: usize,
    #[arg(long, default_value_t = 128)]
    pub nt: usize,
    #[arg(long, default_value_t = 10_000)]
    pub nparticles: usize,
    #[arg(long, default_value_t = 1600)]
    pub ncells: usize,
    /// FPE steps between the initial time and the particle start.
    #[arg(long, default_value_t = 10)]
    pub t0_steps: usize,
    /// Initial mollifier width relative to the jam density.
    #[arg(long, default_value_t = 0.01)]
    pub mollifier: f64,
    #[arg(long, default_value_t = 16)]
    pub fpe_store_every: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Errors are reported on standard error.
pub fn dispatch<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match run(cli.command, &args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

fn run(command: Command, args: &[String]) -> Result<u8, CliError> {
    match command {
        Command::Validate { config } => validate(&config),
        Command::Simulate(a) => simulate(a, args),
        Command::SolveFpe(a) => solve(a, args),
        Command::Pfode(a) => pfode(a, args),
        Command::Train(a) => train_cmd(a, args),
        Command::Infer(a) => infer(a, args),
        Command::Triangle(a) => triangle(a, args),
    }
}

fn load(path: &Path) -> Result<(ModelConfig, TrafficModel), CliError> {
    let cfg = ModelConfig::load(path)?;
    let model = cfg.traffic_model()?;
    Ok((cfg, model))
}

fn validate(config: &Path) -> Result<u8, CliError> {
    let (_, model) = load(config)?;
    let report = model.validate_assumptions(1000);
    let mut out = std::io::stdout().lock();
    for c in &report.checks {
        let status = match (c.passed, c.advisory) {
            (true, _) => "pass",
            (false, true) => "advisory",
            (false, false) => "FAIL",
        };
        let _ = write!(out, "{:<26} {status:<8} {}", c.assumption.name(), c.detail);
        if let Some(v) = c.violation {
            let _ = write!(out, " (rho = {}, x = {}, value = {})", v.rho, v.x, v.value);
        }
        let _ = writeln!(out);
    }
    Ok(if report.passed() { EXIT_OK } else { EXIT_VALIDATION })
}

fn simulate(a: SimulateArgs, args: &[String]) -> Result<u8, CliError> {
    let (cfg, model) = load(&a.config)?;
    let grid = SpaceTimeGrid::new(&model, a.nx, a.nt, cfg.boundary())?;
    let pool = parallel::pool(a.threads)?;
    let ens = parallel::simulate_ensemble(&pool, &model, &grid, a.nreal, a.seed, a.store_every)?;
    write_ensemble(&a.out, &ens)?;
    info!("wrote {} realisations x {} snapshots to {}", ens.n_real, ens.n_times(), a.out.display());
    let mut m = ManifestBuilder::new("simulate", args);
    m.config(&a.config).seed(a.seed).output(&a.out);
    m.finish()?;
    Ok(EXIT_OK)
}

fn nearest_cell(ens: &Ensemble, x: f64) -> usize {
    ((x / ens.dx - 0.5).round().max(0.0) as usize).min(ens.nx - 1)
}

fn build_closure(
    c: &ClosureArgs,
    cfg: &ModelConfig,
    model: &TrafficModel,
    x: f64,
    manifest: &mut ManifestBuilder,
) -> Result<Closure, CliError> {
    let choice = c.closure.as_str();
    let (kind, path) = match choice.split_once(':') {
        Some((k, p)) => (k, Some(PathBuf::from(p))),
        None => (choice, None),
    };
    let ensemble = |p: &Path| read_ensemble(p, model.rho_max(), cfg.boundary());
    match (kind, path) {
        ("zero", None) => Ok(Closure::Zero),
        ("oracle", Some(p)) => {
            let ens = ensemble(&p)?;
            manifest.config(&p);
            let xi = nearest_cell(&ens, x);
            let oracles = (0..ens.n_times())
                .map(|k| estimate_conditional_drift(&ens, model, xi, k, c.bins))
                .collect::<slwr_core::Result<Vec<_>>>()?;
            let empty: usize = oracles.iter().map(|o| o.b_hat.iter().filter(|b| b.is_none()).count()).sum();
            if empty > 0 {
                warn!("{empty} empty drift bins filled by interpolation");
            }
            Ok(Closure::OracleTabulated(TabulatedDrift::from_oracles(&oracles)?))
        }
        ("meanfield", Some(p)) => {
            let ens = ensemble(&p)?;
            manifest.config(&p);
            let gradient = ens.mean_gradient(nearest_cell(&ens, x))?;
            Ok(Closure::MeanField {
                times: ens.times.clone(),
                gradient,
            })
        }
        ("meanfield", None) => {
            let nx = c.lwr_nx;
            let dx = model.length / nx as f64;
            let nt = (model.horizon * model.flux.max_abs_prime() / (0.5 * dx)).ceil().max(1.0) as usize;
            let grid = SpaceTimeGrid::new(model, nx, nt, cfg.boundary())?;
            let ens = deterministic_lwr(model, &grid, 1)?;
            let gradient = ens.mean_gradient(nearest_cell(&ens, x))?;
            Ok(Closure::MeanField {
                times: ens.times.clone(),
                gradient,
            })
        }
        _ => Err(CliError::config(format!(
            "unknown closure {choice:?}; expected zero, oracle:<file>, meanfield or meanfield:<file>"
        ))),
    }
}

fn solve(a: SolveFpeArgs, args: &[String]) -> Result<u8, CliError> {
    let (cfg, model) = load(&a.config)?;
    let mut m = ManifestBuilder::new("solve-fpe", args);
    m.config(&a.config);
    let closure = build_closure(&a.closure, &cfg, &model, a.x, &mut m)?;
    let mesh = DensityMesh::new(a.ncells, model.rho_max())?;
    let eps = a.eps.unwrap_or(4.0 * mesh.h);
    let init = mollified_delta(&mesh, model.initial_density(a.x), eps)?;
    let settings = FpeSettings {
        t_start: 0.0,
        t_end: a.tmax,
        dt: a.dt,
        store_every: a.store_every,
    };
    let grid = solve_fpe(&model, &closure, a.x, &mesh, settings, &init)?;
    tables::write_pgrid(&a.out, &grid)?;
    m.output(&a.out);
    m.finish()?;
    Ok(EXIT_OK)
}

fn pfode(a: PfodeArgs, args: &[String]) -> Result<u8, CliError> {
    let (cfg, model) = load(&a.config)?;
    let mut m = ManifestBuilder::new("pfode", args);
    m.config(&a.config).config(&a.pgrid).seed(a.seed);
    let grid = tables::read_pgrid(&a.pgrid, a.x)?;
    if (grid.mesh.rho_max - model.rho_max()).abs() > 1e-9 * model.rho_max() {
        return Err(CliError::config(format!(
            "density grid spans [0, {}] but the model jam density is {}",
            grid.mesh.rho_max,
            model.rho_max()
        )));
    }
    let k0 = grid
        .time_index(a.t0)
        .ok_or_else(|| CliError::config(format!("t0 = {} is not a stored time of {}", a.t0, a.pgrid.display())))?;
    let closure = build_closure(&a.closure, &cfg, &model, a.x, &mut m)?;
    let score = TabulatedScore::from_grid(&grid)?;
    let field = assemble_velocity(&closure, &model, &score, a.x);
    let dt = match a.dt {
        Some(dt) => dt,
        None if grid.times.len() > 1 => grid.times[1] - grid.times[0],
        None => return Err(CliError::config("the density grid has a single time; pass --dt")),
    };
    let times: Vec<f64> = grid.times.iter().copied().filter(|&t| t >= a.t0 && t <= a.t1).collect();
    let report = check_boundary_compatibility(&field, &times, grid.mesh.h)?;
    let start = sample_particles(&grid, k0, a.nparticles, a.seed)?;
    let pool = parallel::pool(a.threads)?;
    let end = parallel::transport_particles(&pool, &field, &start, a.t1, dt)?;
    tables::write_particles(&a.out, end.t, &end.positions)?;

    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "boundary_check passed={} margin={}", report.passed(), report.margin);
    for c in &report.checks {
        let _ = writeln!(
            out,
            "t={} v_left={} left_ok={} v_right={} right_ok={}",
            c.t, c.v_left, c.left_ok, c.v_right, c.right_ok
        );
    }
    let _ = writeln!(out, "score_extrapolations={}", score.extrapolations());
    m.output(&a.out);
    m.finish()?;
    Ok(EXIT_OK)
}

fn train_cmd(a: TrainArgs, args: &[String]) -> Result<u8, CliError> {
    let (_, model) = load(&a.config)?;
    let mut m = ManifestBuilder::new("train", args);
    m.config(&a.config).config(&a.obs).seed(a.seed);
    let file = match &a.train_config {
        Some(p) => {
            m.config(p);
            TrainConfigFile::load(p)?
        }
        None => TrainConfigFile::default(),
    };
    let mut config = file.resolve(model.rho_max());
    config.seed = a.seed;
    let obs = tables::read_observations(&a.obs, &model.flux)?;
    let (models, log) = match &file.learn_noise_init {
        Some(init) => learn_noise(&obs, &model, &config, init, false)?,
        None => train(&obs, &model, &config)?,
    };
    write_checkpoint(&a.out, &models)?;
    m.output(&a.out);
    if let Some(p) = &a.log {
        tables::write_train_log(p, &log)?;
        m.output(p);
    }
    m.finish()?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct Summary {
    x: f64,
    t: f64,
    mean: f64,
    std: f64,
    ci_lo: f64,
    ci_hi: f64,
    congestion_risk: f64,
    rho_c: f64,
    log_norm: f64,
}

fn infer(a: InferArgs, args: &[String]) -> Result<u8, CliError> {
    let (_, model) = load(&a.config)?;
    let models = read_checkpoint(&a.ckpt)?;
    let mut m = ManifestBuilder::new("infer", args);
    m.config(&a.config).config(&a.ckpt);
    let rho_max = model.rho_max();
    let score = models.score.at(a.x);
    let d = recover_density(&score, rho_max, a.x, a.t, a.rho_star.unwrap_or(0.5 * rho_max), a.nq)?;
    let s = summary_stats(&d);
    let summary = Summary {
        x: a.x,
        t: a.t,
        mean: s.mean,
        std: s.std,
        ci_lo: s.ci_lo,
        ci_hi: s.ci_hi,
        congestion_risk: congestion_risk(&d, a.rho_c)?,
        rho_c: a.rho_c,
        log_norm: d.log_norm,
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serialises");
    std::fs::write(&a.out, text).map_err(|e| CliError::io("cannot write", &a.out, e))?;
    m.output(&a.out);
    if let Some(p) = &a.flow {
        let flow = flow_pushforward(&d, &model.flux, a.nq_flow)?;
        tables::write_flow(p, &flow)?;
        m.output(p);
    }
    m.finish()?;
    Ok(EXIT_OK)
}

fn triangle(a: TriangleArgs, args: &[String]) -> Result<u8, CliError> {
    let (cfg, model) = load(&a.config)?;
    let pool = parallel::pool(a.threads)?;
    let mut s = TriangleSettings::new(a.nreal, a.seed);
    s.nx = a.nx;
    s.nt = a.nt;
    s.n_particles = a.nparticles;
    s.n_cells = a.ncells;
    s.t0_steps = a.t0_steps;
    s.mollifier = a.mollifier;
    s.fpe_store_every = a.fpe_store_every;
    let report = run_triangle(&pool, &model, cfg.boundary(), s)?;
    let text = serde_json::to_string_pretty(&report).expect("report serialises");
    println!("{text}");
    if let Some(p) = &a.out {
        std::fs::write(p, &text).map_err(|e| CliError::io("cannot write", p, e))?;
        let mut m = ManifestBuilder::new("triangle", args);
        m.config(&a.config).seed(a.seed).output(p);
        m.finish()?;
    }
    Ok(if report.passed { EXIT_OK } else { EXIT_VALIDATION })
}
