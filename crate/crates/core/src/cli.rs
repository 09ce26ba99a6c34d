//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{ScenarioConfig, DEFAULT_GRAVITY};
use crate::error::Error;
use crate::integrator::{simulate, IntegratorConfig, Trajectory};
use crate::io::{self, IoError};
use crate::model::{dimensionalize, HybridState, NondimParams};
use crate::poincare::{fit_linear_map, phase_metrics, section_samples, FixedPointEstimate, PoincareSample};
use crate::sweep::{count_regions, run_sweep, select_best, SweepCell};

pub const EXIT_OK: i32 = 0;
pub const EXIT_STRICT: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_RANK: i32 = 4;

/// Grid samples kept per logged sample for the best-cell trajectories of a sweep.
const BEST_CELL_STRIDE: usize = 50;

#[derive(Debug, Parser)]
#[command(name = "coupled-rimless", version, about = "Coupled rimless wheel simulation and coupler design")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate every seed of a scenario and write trajectories, events and gait phase.
    Simulate(SimulateArgs),
    /// Sweep coupler stiffness and damping and pick the fastest-converging pair.
    Sweep(SweepArgs),
    /// Fit the linear return map to simulated trajectories.
    Fit(FitArgs),
    /// Summarize a sweep CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario file (TOML); built-in sweep defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Exit with status 1 when any trial stalls, rolls back or chatters.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct Units {
    /// Wheel mass [kg] for dimensional coupler values.
    #[arg(long)]
    pub mass: Option<f64>,
    /// Spoke length [m] for dimensional coupler values.
    #[arg(long)]
    pub length: Option<f64>,
    #[arg(long)]
    pub gravity: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub units: Units,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub k_min: Option<f64>,
    #[arg(long)]
    pub k_max: Option<f64>,
    #[arg(long)]
    pub nk: Option<usize>,
    #[arg(long)]
    pub b_min: Option<f64>,
    #[arg(long)]
    pub b_max: Option<f64>,
    #[arg(long)]
    pub nb: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Directories written by `simulate`.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// Fit document path.
    #[arg(long, default_value = "fit.json")]
    pub out: PathBuf,
    /// Fixed-point estimate: affine, terminal or origin.
    #[arg(long, default_value = "affine", value_parser = parse_estimate)]
    pub fixed_point: FixedPointEstimate,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Sweep CSV.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub units: Units,
}

fn parse_estimate(s: &str) -> Result<FixedPointEstimate, String> {
    FixedPointEstimate::parse(s).ok_or_else(|| format!("unknown fixed-point estimate {s:?}"))
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError { code: EXIT_CONFIG, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_) | Error::MismatchedParams => EXIT_CONFIG,
            Error::RankDeficient(_) | Error::InsufficientData(_) => EXIT_RANK,
            Error::DegenerateGeometry(_)
            | Error::ImpactPrecondition { .. }
            | Error::NoCrossing
            | Error::NonFinite(_)
            | Error::EigenNonConvergence
            | Error::NoValidCell => EXIT_NUMERIC,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::config(e.to_string())
    }
}

/// Parse arguments, run the command, and return the process exit status.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Fit(args) => cmd_fit(&args),
        Command::Report(args) => cmd_report(&args),
    }
}

fn load_config(common: &Common) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => ScenarioConfig::load(path).map_err(CliError::config)?,
        None => ScenarioConfig::default(),
    };
    if let Some(t) = common.t_max {
        cfg.integrator.t_max = t;
    }
    if let Some(dt) = common.dt {
        cfg.integrator.dt = dt;
    }
    Ok(cfg)
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Record written next to simulation outputs so fits can check provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: Option<String>,
    pub params: NondimParams,
    pub integrator: IntegratorConfig,
    pub seeds: Vec<HybridState>,
}

fn trial_files(dir: &Path, i: usize) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join(format!("trajectory_{i:02}.csv")),
        dir.join(format!("events_{i:02}.csv")),
        dir.join(format!("phase_{i:02}.csv")),
    )
}

fn write_trials(dir: &Path, trajectories: &[Trajectory]) -> Result<(), CliError> {
    create_dir(dir)?;
    for (i, traj) in trajectories.iter().enumerate() {
        let (tp, ep, pp) = trial_files(dir, i);
        io::write_trajectory(&tp, traj)?;
        io::write_events(&ep, traj)?;
        io::write_phase(&pp, &phase_metrics(traj))?;
    }
    Ok(())
}

fn simulate_all(p: &NondimParams, seeds: &[HybridState], cfg: &IntegratorConfig) -> Result<Vec<Trajectory>, CliError> {
    seeds.iter().map(|s| simulate(s, p, cfg).map_err(CliError::from)).collect()
}

fn report_failures(trajectories: &[Trajectory]) -> usize {
    let mut failed = 0;
    for (i, t) in trajectories.iter().enumerate() {
        if let Some(e) = t.failure() {
            eprintln!("trial {i}: {} at tau = {:.6}", e.kind.as_str(), e.tau);
            failed += 1;
        }
    }
    failed
}

fn cmd_simulate(args: &SimulateArgs) -> Result<i32, CliError> {
    let scenario = load_config(&args.common)?.resolve()?;
    let seeds = scenario.seeds()?;
    let trajectories = simulate_all(&scenario.params, &seeds, &scenario.integrator)?;

    let out = &args.common.out;
    write_trials(out, &trajectories)?;
    let record = RunRecord {
        name: scenario.name.clone(),
        params: scenario.params,
        integrator: scenario.integrator,
        seeds: seeds.clone(),
    };
    io::write_json(&out.join("scenario.json"), &record)?;

    for (i, t) in trajectories.iter().enumerate() {
        let steps = t.impacts_of(crate::model::Wheel::One).count();
        println!("trial {i}: {steps} wheel-1 steps, final tau {:.6}, {}", t.final_tau(), terminal_kind(t));
    }
    let failed = report_failures(&trajectories);
    Ok(if args.common.strict && failed > 0 { EXIT_STRICT } else { EXIT_OK })
}

fn terminal_kind(t: &Trajectory) -> &'static str {
    t.terminal().map_or("running", |e| e.kind.as_str())
}

/// Best-cell summary written by `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestCellReport {
    pub k_hat: f64,
    pub b_hat: f64,
    pub dominant_abs: f64,
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub valid_cells: usize,
    pub total_cells: usize,
    pub regions: usize,
    pub dimensional: Option<DimensionalCoupler>,
    pub fit: Option<crate::poincare::ReturnMapFit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionalCoupler {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    /// Stiffness [N/m].
    pub k: f64,
    /// Damping [N s/m].
    pub b: f64,
}

fn dimensional(units: &Units, physical_scale: Option<(f64, f64, f64)>, k_hat: f64, b_hat: f64) -> Result<Option<DimensionalCoupler>, CliError> {
    let (mass, length, gravity) = match (units.mass, units.length, physical_scale) {
        (Some(m), Some(l), _) => (m, l, units.gravity.unwrap_or(DEFAULT_GRAVITY)),
        (m, l, Some((pm, pl, pg))) => (m.unwrap_or(pm), l.unwrap_or(pl), units.gravity.unwrap_or(pg)),
        (None, None, None) => return Ok(None),
        _ => return Err(CliError::config("--mass and --length must be given together")),
    };
    let np = NondimParams { gamma: 0.0, alpha: 0.1, k_hat, b_hat, d0_hat: 1.0, s0_hat: 0.0 };
    let (k, b) = dimensionalize(&np, mass, length, gravity)?;
    Ok(Some(DimensionalCoupler { mass, length, gravity, k, b }))
}

fn print_best(best: &BestCellReport) {
    println!("valid cells: {} of {}", best.valid_cells, best.total_cells);
    println!("valid regions: {}", best.regions);
    println!("best k_hat: {:.6e}", best.k_hat);
    println!("best b_hat: {:.6e}", best.b_hat);
    println!("dominant |lambda|: {:.6}", best.dominant_abs);
    println!("dominant lambda: {:.6} {:+.6}i", best.lambda_re, best.lambda_im);
    if let Some(d) = best.dimensional {
        println!("k: {:.6} N/m (m = {} kg, l = {} m, g = {} m/s^2)", d.k, d.mass, d.length, d.gravity);
        println!("b: {:.6} N s/m", d.b);
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<i32, CliError> {
    let mut cfg = load_config(&args.common)?;
    let s = &mut cfg.sweep;
    let overrides = [
        (&mut s.k_min, args.k_min),
        (&mut s.k_max, args.k_max),
        (&mut s.b_min, args.b_min),
        (&mut s.b_max, args.b_max),
    ];
    for (slot, value) in overrides {
        if let Some(v) = value {
            *slot = v;
        }
    }
    if let Some(n) = args.nk {
        s.nk = n;
    }
    if let Some(n) = args.nb {
        s.nb = n;
    }
    if args.workers.is_some() {
        s.workers = args.workers;
    }
    let scenario = cfg.resolve()?;
    let grid = scenario.grid()?;
    let seeds = scenario.seeds()?;
    let workers = scenario.sweep.workers.unwrap_or_else(default_workers);
    let cells = run_sweep(&grid, &seeds, &scenario.integrator, workers)?;

    let out = &args.common.out;
    create_dir(out)?;
    io::write_sweep(&out.join("sweep.csv"), &cells)?;

    let valid: Vec<bool> = cells.iter().map(|c| c.valid).collect();
    let valid_cells = valid.iter().filter(|v| **v).count();
    let regions = count_regions(&valid, grid.k_hat_values.len(), grid.b_hat_values.len());
    let best = match select_best(&cells) {
        Ok(best) => best,
        Err(Error::NoValidCell) => {
            println!("valid cells: 0 of {}", cells.len());
            return Ok(if args.common.strict { EXIT_STRICT } else { EXIT_OK });
        }
        Err(e) => return Err(e.into()),
    };
    let physical_scale = scenario.physical.map(|p| (p.m, p.ell, p.g));
    let report = best_report(best, valid_cells, cells.len(), regions, dimensional(&args.units, physical_scale, best.k_hat, best.b_hat)?);
    io::write_json(&out.join("best.json"), &report)?;

    // trajectories of the chosen coupler, for convergence plots
    let p = scenario.params.with_coupler(best.k_hat, best.b_hat);
    let icfg = IntegratorConfig { sample_stride: BEST_CELL_STRIDE, ..scenario.integrator };
    let trajectories = simulate_all(&p, &seeds, &icfg)?;
    write_trials(&out.join("best"), &trajectories)?;
    io::write_json(
        &out.join("best").join("scenario.json"),
        &RunRecord { name: scenario.name.clone(), params: p, integrator: icfg, seeds },
    )?;

    print_best(&report);
    Ok(EXIT_OK)
}

fn best_report(best: &SweepCell, valid_cells: usize, total_cells: usize, regions: usize, dimensional: Option<DimensionalCoupler>) -> BestCellReport {
    let lambda = best.dominant.unwrap_or_default();
    BestCellReport {
        k_hat: best.k_hat,
        b_hat: best.b_hat,
        dominant_abs: best.dominant_abs.unwrap_or(f64::NAN),
        lambda_re: lambda.re,
        lambda_im: lambda.im,
        valid_cells,
        total_cells,
        regions,
        dimensional,
        fit: best.fit.clone(),
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn trajectory_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::config(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("trajectory_") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn read_record(dir: &Path) -> Result<Option<RunRecord>, CliError> {
    let path = dir.join("scenario.json");
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map(Some).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Section samples of every non-failed trial in the given simulate output
/// directories.
pub fn load_trials(dirs: &[PathBuf]) -> Result<Vec<Vec<PoincareSample>>, CliError> {
    let mut params: Option<NondimParams> = None;
    let mut trials = Vec::new();
    for dir in dirs {
        if let Some(record) = read_record(dir)? {
            match params {
                Some(p) if p != record.params => return Err(Error::MismatchedParams.into()),
                _ => params = Some(record.params),
            }
        }
        let files = trajectory_files(dir)?;
        if files.is_empty() {
            return Err(CliError::config(format!("{}: no trajectory CSV files", dir.display())));
        }
        for path in files {
            let events_path = path.with_file_name(
                path.file_name().and_then(|n| n.to_str()).unwrap_or_default().replacen("trajectory_", "events_", 1),
            );
            if events_path.exists() && io::read_events(&events_path)?.iter().any(|e| e.kind.is_failure()) {
                eprintln!("skipping failed trial {}", path.display());
                continue;
            }
            let samples = io::read_section_samples(&path, trials.len())?;
            trials.push(samples);
        }
    }
    Ok(trials)
}

/// Section samples of every non-failed trajectory, numbered as `load_trials` would.
pub fn trials_in_memory(trajectories: &[Trajectory]) -> Vec<Vec<PoincareSample>> {
    trajectories
        .iter()
        .filter(|t| !t.is_failed())
        .enumerate()
        .map(|(i, t)| section_samples(t, i))
        .collect()
}

fn cmd_fit(args: &FitArgs) -> Result<i32, CliError> {
    let trials = load_trials(&args.inputs)?;
    let fit = fit_linear_map(&trials, args.fixed_point)?;
    io::write_json(&args.out, &fit)?;
    println!("trials: {}, transitions: {}", fit.n_trials, fit.n_transitions);
    println!("residual rms: {:.3e}", fit.residual_rms);
    for (i, l) in fit.eigenvalues.iter().enumerate() {
        println!("lambda_{}: {:.9} {:+.9}i  |{:.9}|", i + 1, l.re, l.im, l.norm());
    }
    println!("dominant |lambda|: {:.9}", fit.dominant_abs);
    Ok(EXIT_OK)
}

fn cmd_report(args: &ReportArgs) -> Result<i32, CliError> {
    let rows = io::read_sweep(&args.input)?;
    let mut ks: Vec<f64> = rows.iter().map(|r| r.k_hat).collect();
    let mut bs: Vec<f64> = rows.iter().map(|r| r.b_hat).collect();
    for v in [&mut ks, &mut bs] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    let valid_cells = rows.iter().filter(|r| r.valid).count();
    let regions = if ks.len() * bs.len() == rows.len() {
        let mut mask = vec![false; rows.len()];
        for r in &rows {
            let i = ks.iter().position(|k| *k == r.k_hat).unwrap_or(0);
            let j = bs.iter().position(|b| *b == r.b_hat).unwrap_or(0);
            mask[i * bs.len() + j] = r.valid;
        }
        count_regions(&mask, ks.len(), bs.len())
    } else {
        return Err(CliError::config(format!("{}: rows do not form a full grid", args.input.display())));
    };
    let cells: Vec<SweepCell> = rows
        .iter()
        .map(|r| SweepCell {
            k_hat: r.k_hat,
            b_hat: r.b_hat,
            valid: r.valid,
            dominant_abs: r.dominant_abs,
            dominant: r.dominant,
            n_converged: r.n_converged,
            n_failed: r.n_failed,
            fit: None,
            fit_error: None,
        })
        .collect();
    match select_best(&cells) {
        Ok(best) => {
            let report = best_report(best, valid_cells, rows.len(), regions, dimensional(&args.units, None, best.k_hat, best.b_hat)?);
            print_best(&report);
        }
        Err(Error::NoValidCell) => {
            println!("valid cells: 0 of {}", rows.len());
        }
        Err(e) => return Err(e.into()),
    }
    Ok(EXIT_OK)
}
