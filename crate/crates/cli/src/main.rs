//! `chorin`: command-line driver for the discrete Chorin scheme.

mod commands;
mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use chorin::harness::Scaling;
use chorin::periodic_orbit::Acceleration;
use chorin::stepper::InitialSpec;
use chorin::DomainSpec;
use config::ConfigFile;
use manifest::Recorder;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<chorin::Error> for CliError {
    fn from(e: chorin::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<chorin::stepper::RunFailure> for CliError {
    fn from(e: chorin::stepper::RunFailure) -> Self {
        let numerical = e.error.is_numerical();
        let msg = e.to_string();
        if numerical {
            CliError::Numerical(msg)
        } else {
            CliError::Config(msg)
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "chorin", version, about = "Fully discrete Chorin projection scheme for 3D Navier–Stokes")]
struct Cli {
    /// JSON configuration file (`schema_version` plus one section per subcommand).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "chorin-out")]
    out: PathBuf,
    /// Seed for random initial data and random test fields.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (falls back to CHORIN_GRID_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Solver tolerance: pressure solves (run, convergence, hodge) or the fixed-point residual (periodic).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Single worker thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Initial-value simulation: energy ledger CSV and VTK dumps.
    Run {
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        t_final: Option<f64>,
        #[arg(long)]
        h: Option<f64>,
        /// Torus points per axis.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        output_every: Option<usize>,
    },
    /// Fixed point of the time-1 map: periodic orbit and report.
    Periodic {
        #[arg(long)]
        steps_per_period: Option<usize>,
        #[arg(long)]
        forcing_scale: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Anderson mixing depth (0: Picard).
        #[arg(long)]
        anderson: Option<usize>,
    },
    /// Verifies the discrete Hodge decomposition on random fields.
    Hodge {
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Convergence study against a manufactured solution.
    Convergence {
        #[arg(long, value_enum)]
        bc: Option<Bc>,
        /// Torus sizes N, or mesh sizes h on the ball.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        #[arg(long, value_enum)]
        scaling: Option<ScalingArg>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        t_final: Option<f64>,
    },
    /// Estimates the discrete Poincaré constants Â and Ã.
    Poincare {
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Builds a grid and exports it with its boundary gap report.
    Grid {
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Re-runs a manifest sequentially into --out and compares output hashes.
    Replay {
        manifest: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Bc {
    Torus,
    Ball,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScalingArg {
    H2,
    H34,
}

fn resolve_threads(flag: Option<usize>, sequential: bool) -> Result<usize, CliError> {
    if sequential {
        return Ok(1);
    }
    if let Some(t) = flag {
        return if t == 0 {
            Err(CliError::Config("--threads: must be positive".into()))
        } else {
            Ok(t)
        };
    }
    match std::env::var("CHORIN_GRID_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .ok_or_else(|| CliError::Config(format!("CHORIN_GRID_THREADS: expected a positive integer, got {v:?}"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn with_grid(domain: &mut DomainSpec, h: &mut Option<f64>, new_h: Option<f64>, n: Option<usize>) {
    if let Some(n) = n {
        *domain = DomainSpec::Torus { n };
        *h = None;
    }
    if let Some(v) = new_h {
        *h = Some(v);
    }
}

fn set_tol(tol: Option<f64>, solver: &mut chorin::stepper::SolverSettings) {
    if let Some(t) = tol {
        solver.hodge_tol = t;
    }
}

/// The resolved configuration section of `command` after flag overrides.
fn resolve(cli: &Cli, file: &ConfigFile) -> Result<(&'static str, serde_json::Value), CliError> {
    fn value<S: Serialize>(s: &S) -> serde_json::Value {
        serde_json::to_value(s).expect("serialisable")
    }
    Ok(match &cli.command {
        Command::Run {
            steps,
            t_final,
            h,
            n,
            nu,
            output_every,
        } => {
            let mut c = file.run.clone().unwrap_or_else(config::default_run);
            with_grid(&mut c.domain, &mut c.h, *h, *n);
            if steps.is_some() {
                c.steps = *steps;
                c.t_final = None;
            }
            if t_final.is_some() {
                c.t_final = *t_final;
                c.steps = None;
            }
            if let Some(v) = nu {
                c.nu = *v;
            }
            if let Some(v) = output_every {
                c.output_every = *v;
            }
            set_tol(cli.tol, &mut c.solver);
            if let (Some(s), InitialSpec::RandomModes { seed, .. }) = (cli.seed, &mut c.initial) {
                *seed = s;
            }
            ("run", value(&c))
        }
        Command::Periodic {
            steps_per_period,
            forcing_scale,
            max_iter,
            anderson,
        } => {
            let mut c = file.periodic.clone().unwrap_or_default();
            if let Some(v) = steps_per_period {
                c.steps_per_period = *v;
            }
            if let Some(v) = forcing_scale {
                c.forcing_scale = *v;
            }
            if let Some(v) = max_iter {
                c.fixed_point.max_iter = *v;
            }
            match anderson {
                Some(0) => c.fixed_point.acceleration = Acceleration::Picard,
                Some(m) => c.fixed_point.acceleration = Acceleration::Anderson { m: *m },
                None => {}
            }
            if let Some(t) = cli.tol {
                c.fixed_point.tol = t;
            }
            ("periodic", value(&c))
        }
        Command::Hodge { samples, h, n } => {
            let mut c = file.hodge.clone().unwrap_or_default();
            with_grid(&mut c.domain, &mut c.h, *h, *n);
            if let Some(v) = samples {
                c.samples = *v;
            }
            if let Some(s) = cli.seed {
                c.seed = s;
            }
            if let Some(t) = cli.tol {
                c.tol = t;
            }
            ("hodge", value(&c))
        }
        Command::Convergence {
            bc,
            levels,
            scaling,
            theta,
            t_final,
        } => {
            let mut c = match (bc, &file.convergence) {
                (Some(Bc::Torus), _) => config::default_study(),
                (Some(Bc::Ball), _) => config::ball_study(&[0.12, 0.08, 0.053]),
                (None, Some(c)) => c.clone(),
                (None, None) => config::default_study(),
            };
            if let (Some(Bc::Torus), Some(f)) = (bc, &file.convergence) {
                if f.domain.is_torus() {
                    c = f.clone();
                }
            }
            if let (Some(Bc::Ball), Some(f)) = (bc, &file.convergence) {
                if !f.domain.is_torus() {
                    c = f.clone();
                }
            }
            if let Some(l) = levels {
                c.levels = if c.domain.is_torus() {
                    l.iter().map(|&n| 1.0 / n).collect()
                } else {
                    l.clone()
                };
                if let DomainSpec::Torus { n } = &mut c.domain {
                    *n = l.first().map_or(*n, |&v| v as usize);
                }
            }
            let th = theta.unwrap_or(match c.scaling {
                Scaling::ThetaH2 { theta } | Scaling::ThetaH34 { theta } => theta,
                Scaling::Explicit { .. } => 1.0,
            });
            match scaling {
                Some(ScalingArg::H2) => c.scaling = Scaling::ThetaH2 { theta: th },
                Some(ScalingArg::H34) => c.scaling = Scaling::ThetaH34 { theta: th },
                None => {
                    if let Scaling::ThetaH2 { theta } | Scaling::ThetaH34 { theta } = &mut c.scaling {
                        *theta = th;
                    }
                }
            }
            if let Some(t) = t_final {
                c.t_final = *t;
            }
            set_tol(cli.tol, &mut c.solver);
            ("convergence", value(&c))
        }
        Command::Poincare { h, n } => {
            let mut c = file.poincare.clone().unwrap_or_default();
            with_grid(&mut c.domain, &mut c.h, *h, *n);
            ("poincare", value(&c))
        }
        Command::Grid { h, n } => {
            let mut c = file.grid.clone().unwrap_or_default();
            with_grid(&mut c.domain, &mut c.h, *h, *n);
            ("grid", value(&c))
        }
        Command::Replay { .. } => unreachable!("replay is resolved from its manifest"),
    })
}

fn parse_section<T: serde::de::DeserializeOwned>(command: &str, v: &serde_json::Value) -> Result<T, CliError> {
    serde_json::from_value(v.clone()).map_err(|e| CliError::Config(format!("{command}: {e}")))
}

/// Executes `command` with its resolved configuration, recording into `out`.
fn execute(
    command: &str,
    section: serde_json::Value,
    out: &Path,
    threads: usize,
    sequential: bool,
) -> Result<(), CliError> {
    let mut rec = Recorder::start(out, command, section.clone(), threads, sequential)?;
    let outcome = (|| match command {
        "run" => commands::run(&parse_section(command, &section)?, &mut rec),
        "periodic" => commands::periodic(&parse_section(command, &section)?, &mut rec),
        "hodge" => commands::hodge(&parse_section(command, &section)?, &mut rec),
        "convergence" => commands::convergence(&parse_section(command, &section)?, &mut rec),
        "poincare" => commands::poincare(&parse_section(command, &section)?, &mut rec),
        "grid" => commands::grid(&parse_section(command, &section)?, &mut rec),
        other => Err(CliError::Config(format!("unknown command {other:?}"))),
    })();
    rec.finish(&outcome)?;
    outcome
}

fn replay(path: &Path, out: &Path) -> Result<(), CliError> {
    let m = manifest::load(path)?;
    if m.schema_version != config::SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "manifest schema_version {} is not {}",
            m.schema_version,
            config::SCHEMA_VERSION
        )));
    }
    let src = path.parent().unwrap_or(Path::new("."));
    if std::fs::canonicalize(src).ok() == std::fs::canonicalize(out).ok() {
        return Err(CliError::Config("--out must differ from the manifest's directory".into()));
    }
    execute(&m.command, m.config.clone(), out, 1, true)?;
    let fresh = manifest::load(&out.join(manifest::MANIFEST_NAME))?;
    let mut mismatches = Vec::new();
    for o in &m.outputs {
        match fresh.outputs.iter().find(|f| f.path == o.path) {
            Some(f) if f.sha256 == o.sha256 => {}
            Some(_) => mismatches.push(format!("{} differs", o.path)),
            None => mismatches.push(format!("{} missing", o.path)),
        }
    }
    for f in &fresh.outputs {
        if !m.outputs.iter().any(|o| o.path == f.path) {
            mismatches.push(format!("{} is new", f.path));
        }
    }
    if mismatches.is_empty() {
        println!("replay: {} outputs identical", m.outputs.len());
        Ok(())
    } else {
        Err(CliError::Numerical(format!("replay mismatch: {}", mismatches.join(", "))))
    }
}

fn main_inner(cli: Cli) -> Result<(), CliError> {
    let threads = resolve_threads(cli.threads, cli.sequential)?;
    // A second initialisation (e.g. in tests) keeps the existing pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    if let Command::Replay { manifest } = &cli.command {
        return replay(manifest, &cli.out);
    }
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile {
            schema_version: config::SCHEMA_VERSION,
            ..Default::default()
        },
    };
    let (command, section) = resolve(&cli, &file)?;
    execute(command, section, &cli.out, threads, cli.sequential)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("chorin: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
