//! `preshock`: batch driver for simulations, sweeps, offline analysis and the Puiseux demo.

mod config;
mod reports;
mod store;
mod sweep;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use preshock_core::initial_data::{self, DataError, DataSpec};
use preshock_core::solver::{self, evolve_with, SolverError, Trajectory};

use config::{Mode, Overrides, RunConfig};
use reports::{Outcome, SCHEMA_VERSION};

#[derive(Parser)]
#[command(name = "preshock", version, about = "Pre-shock formation laboratory for azimuthal 2D Euler")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build data, integrate to the stop threshold and write all reports.
    Simulate,
    /// Run one simulation per ε concurrently and fit the blowup scaling laws.
    Sweep {
        /// Comma-separated ε values (at least three).
        #[arg(long = "eps-list", value_delimiter = ',', required = true)]
        eps_list: Vec<f64>,
    },
    /// Re-run analysis and diagnostics on a finished run directory.
    Analyze {
        dir: PathBuf,
        /// Cusp window radius in the label.
        #[arg(long)]
        window: Option<f64>,
        #[arg(long = "fit-degree")]
        fit_degree: Option<usize>,
        /// Evaluate every transport identity.
        #[arg(long = "all-identities")]
        all_identities: bool,
    },
    /// Build (or load) initial data and print the constraint report.
    ValidateData {
        /// Stem of an exported data file to check instead of the canonical family.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Print Puiseux coefficients and sample quartic inversions.
    PuiseuxDemo,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(o) => ExitCode::from(o as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(Outcome::Failure as u8)
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Simulate => {
            let cfg = RunConfig::resolve(&cli.overrides)?;
            if cfg.mode == Mode::PuiseuxDemo {
                return puiseux_demo(&cfg);
            }
            let s = simulate(&cfg)?;
            Ok(s.outcome)
        }
        Command::Sweep { eps_list } => {
            let cfg = RunConfig::resolve(&cli.overrides)?;
            sweep::run(&cfg, &eps_list)
        }
        Command::Analyze { dir, window, fit_degree, all_identities } => analyze(&dir, window, fit_degree, all_identities),
        Command::ValidateData { data } => {
            let mut cfg = RunConfig::resolve(&cli.overrides)?;
            if data.is_some() {
                cfg.data_file = data;
                cfg.check()?;
            }
            validate_data(&cfg)
        }
        Command::PuiseuxDemo => puiseux_demo(&RunConfig::resolve(&cli.overrides)?),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub eps: f64,
    pub outcome: Outcome,
    pub t_stop: Option<f64>,
    pub t_star: Option<f64>,
    pub x_star: Option<f64>,
    pub lines: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    tool_version: &'a str,
    config: &'a RunConfig,
    outcome: Outcome,
    error: Option<String>,
    t_stop: Option<f64>,
    snapshots: usize,
    steps: usize,
    summary: &'a [String],
    analyses: Vec<preshock_core::analysis::AnalysisConfig>,
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<()> {
    fs::write(dir.join(store::MANIFEST), serde_json::to_string_pretty(m)? + "\n")?;
    Ok(())
}

fn build_data(cfg: &RunConfig) -> Result<(preshock_core::euler_core::StateField, preshock_core::euler_core::Params), DataError> {
    match cfg.mode {
        Mode::Burgers => {
            let p = cfg.params().map_err(|e| DataError::BadFamily(e.to_string()))?;
            Ok((initial_data::burgers_sine(p.n_grid, 0.0, cfg.burgers_shift), p))
        }
        _ => {
            let (data, p) = match &cfg.data_file {
                Some(stem) => {
                    let (data, p) = initial_data::import_data(stem)?;
                    let report = initial_data::validate(&data, &p);
                    if !report.valid {
                        return Err(DataError::Invalid(Box::new(report)));
                    }
                    (data, p)
                }
                None => {
                    let p = cfg.params().map_err(|e| DataError::BadFamily(e.to_string()))?;
                    let spec = DataSpec { rng_seed: cfg.seed, ..DataSpec::new(p) };
                    (initial_data::build_canonical(&spec)?, p)
                }
            };
            let data = if cfg.perturb > 0.0 { initial_data::perturb(&data, cfg.perturb * p.eps, cfg.seed) } else { data };
            Ok((data, p))
        }
    }
}

fn monitors_csv(traj: &Trajectory) -> String {
    let mut s = String::from("t,dt,min_eta_x,argmin_label,w_theta_max,z_theta_max,k_theta_max,a_theta_max,min_c,max_z_minus_min_w\n");
    for m in &traj.monitors {
        let _ = writeln!(
            s,
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            m.t, m.dt, m.min_eta_x, m.argmin_label, m.w_theta_max, m.z_theta_max, m.k_theta_max, m.a_theta_max, m.min_c, m.max_z_minus_min_w
        );
    }
    s
}

fn eulerian_csv(traj: &Trajectory) -> String {
    let f = solver::eulerian(&traj.last().state);
    let mut s = String::from("theta,w,z,k,a\n");
    for (i, th) in f.theta().iter().enumerate() {
        let _ = writeln!(s, "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}", th, f.w[i], f.z[i], f.k[i], f.a[i]);
    }
    s
}

/// One simulation into `cfg.out`.
pub fn simulate(cfg: &RunConfig) -> Result<RunSummary> {
    let dir = &cfg.out;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(store::CONFIG), toml::to_string(cfg)?)?;
    let tool_version = env!("CARGO_PKG_VERSION");
    let mut summary = RunSummary { eps: cfg.eps, outcome: Outcome::Clean, t_stop: None, t_star: None, x_star: None, lines: Vec::new() };
    let fail = |summary: &mut RunSummary, outcome: Outcome, msg: String| -> Result<()> {
        summary.outcome = outcome;
        summary.lines.push(msg.clone());
        eprintln!("{msg}");
        write_manifest(
            dir,
            &Manifest {
                schema_version: SCHEMA_VERSION,
                tool_version,
                config: cfg,
                outcome,
                error: Some(msg),
                t_stop: None,
                snapshots: 0,
                steps: 0,
                summary: &summary.lines,
                analyses: Vec::new(),
            },
        )
    };

    let (data, params) = match build_data(cfg) {
        Ok(d) => d,
        Err(DataError::Invalid(report)) => {
            fs::write(dir.join("validation.json"), serde_json::to_string_pretty(&report)? + "\n")?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            fail(&mut summary, Outcome::Failure, format!("invalid initial data: {}", report.failures().join(", ")))?;
            return Ok(summary);
        }
        Err(e) => {
            fail(&mut summary, Outcome::Failure, format!("initial data: {e}"))?;
            return Ok(summary);
        }
    };
    initial_data::export_data(&data, &params, &dir.join("data"))?;

    let traj = match evolve_with(&data, &params, &cfg.solver(), &cfg.stop()) {
        Ok(t) => t,
        Err(e @ SolverError::EstimateViolation { .. }) => {
            fail(&mut summary, Outcome::EstimateViolation, e.to_string())?;
            return Ok(summary);
        }
        Err(e) => {
            fail(&mut summary, Outcome::Failure, format!("solver: {e}"))?;
            return Ok(summary);
        }
    };
    store::save_trajectory(dir, &traj)?;
    fs::write(dir.join("monitors.csv"), monitors_csv(&traj))?;
    fs::write(dir.join("final_eulerian.csv"), eulerian_csv(&traj))?;

    let (outcome, lines) = reports::write_all(dir, &traj, cfg)?;
    summary.outcome = outcome;
    summary.t_stop = Some(traj.t_stop());
    if let Ok(b) = preshock_core::analysis::detect_blowup(&traj, &cfg.analysis()) {
        summary.t_star = Some(b.t_star);
        summary.x_star = Some(b.x_star);
    }
    summary.lines = lines;
    for l in &summary.lines {
        println!("[eps={}] {l}", cfg.eps);
    }
    write_manifest(
        dir,
        &Manifest {
            schema_version: SCHEMA_VERSION,
            tool_version,
            config: cfg,
            outcome,
            error: None,
            t_stop: summary.t_stop,
            snapshots: traj.snapshots.len(),
            steps: traj.monitors.len().saturating_sub(1),
            summary: &summary.lines,
            analyses: vec![cfg.analysis()],
        },
    )?;
    Ok(summary)
}

fn analyze(dir: &Path, window: Option<f64>, fit_degree: Option<usize>, all_identities: bool) -> Result<Outcome> {
    let missing = store::missing_files(dir);
    if !missing.is_empty() {
        anyhow::bail!("{} is not a complete run directory; missing: {}", dir.display(), missing.join(", "));
    }
    let mut cfg = RunConfig::from_file(&dir.join(store::CONFIG))?;
    if window.is_some() {
        cfg.window = window;
    }
    if let Some(d) = fit_degree {
        cfg.fit_degree = d;
    }
    cfg.all_identities |= all_identities;
    cfg.check()?;
    let traj = store::load_trajectory(dir)?;
    let (outcome, lines) = reports::write_all(dir, &traj, &cfg)?;
    for l in &lines {
        println!("{l}");
    }
    let mpath = dir.join(store::MANIFEST);
    if let Ok(text) = fs::read_to_string(&mpath) {
        let mut m: serde_json::Value = serde_json::from_str(&text).context("parsing manifest")?;
        let entry = serde_json::to_value(cfg.analysis())?;
        if let Some(list) = m.get_mut("analyses").and_then(|a| a.as_array_mut()) {
            if !list.contains(&entry) {
                list.push(entry);
            }
        }
        fs::write(&mpath, serde_json::to_string_pretty(&m)? + "\n")?;
    }
    Ok(outcome)
}

fn validate_data(cfg: &RunConfig) -> Result<Outcome> {
    let (data, params) = match &cfg.data_file {
        Some(stem) => initial_data::import_data(stem)?,
        None => {
            let p = cfg.params()?;
            (initial_data::build_unchecked(&DataSpec { rng_seed: cfg.seed, ..DataSpec::new(p) })?, p)
        }
    };
    let report = initial_data::validate(&data, &params);
    println!("{}", serde_json::to_string_pretty(&report)?);
    if report.valid {
        Ok(Outcome::Clean)
    } else {
        eprintln!("invalid initial data: {}", report.failures().join(", "));
        Ok(Outcome::Failure)
    }
}

#[derive(Serialize)]
struct PuiseuxDemo {
    schema_version: u32,
    order: usize,
    exact: Vec<String>,
    coefficients: Vec<f64>,
    radius_est: f64,
    samples: Vec<PuiseuxSample>,
}

#[derive(Serialize)]
struct PuiseuxSample {
    a3: f64,
    a4: f64,
    x: f64,
    y: f64,
    residual: f64,
}

fn puiseux_demo(cfg: &RunConfig) -> Result<Outcome> {
    use preshock_puiseux as pz;
    let order = cfg.puiseux_order.min(pz::MAX_ORDER);
    let exact: Vec<String> = pz::exact_coefficients(order.min(pz::EXACT_ORDER)).iter().map(|c| c.to_string()).collect();
    let mut samples = Vec::new();
    for (a3, a4) in [(1.0, 1.0), (2.0, -1.0), (0.5, 3.0)] {
        for x in [1e-6, 1e-4, -1e-3] {
            if let Ok(y) = pz::invert_quartic(a3, a4, x, order) {
                samples.push(PuiseuxSample { a3, a4, x, y, residual: -x + a3 * y.powi(3) + a4 * y.powi(4) });
            }
        }
    }
    let demo = PuiseuxDemo {
        schema_version: SCHEMA_VERSION,
        order,
        exact,
        coefficients: pz::coefficients(order)?,
        radius_est: pz::radius_estimate(),
        samples,
    };
    for (n, c) in demo.exact.iter().enumerate() {
        println!("c_{n} = {c}");
    }
    println!("radius estimate {:.6}", demo.radius_est);
    for s in &demo.samples {
        println!("a3 = {}, a4 = {}, x = {:e}: y = {:.15e}, residual {:.2e}", s.a3, s.a4, s.x, s.y, s.residual);
    }
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("puiseux.json"), serde_json::to_string_pretty(&demo)? + "\n")?;
    Ok(Outcome::Clean)
}
