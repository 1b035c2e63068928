//! Command dispatch and CSV emission.
//!
//! Four subcommands: `theory` (exact curves), `shots` (sampled experiment),
//! `calibrate` (readout-error estimation), `lindblad-check` (continuum-limit
//! convergence). Output is RFC-4180-style CSV with floats printed at 17
//! significant digits, so identical inputs give byte-identical files.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::battery;
use crate::collision::{self, NoiseParams};
use crate::config::{parse_config, ConfigError, RunConfig};
use crate::protocol::{self, ModelTag};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("cannot read config {path}: {source}")]
    ConfigIo {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Collision(#[from] collision::CollisionError),
    #[error(transparent)]
    Protocol(#[from] protocol::ProtocolError),
}

impl CliError {
    /// 1 for configuration problems, 2 for runtime/model errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::ConfigIo { .. } => 1,
            _ => 2,
        }
    }
}

/// Rectangular numeric table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

/// One CSV cell; integers print plain, floats at full precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Float(v) => write!(f, "{v:.16e}"),
        }
    }
}

impl OutputTable {
    fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| (*s).to_owned()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(Cell::to_string).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn write_csv(table: &OutputTable, path: Option<&Path>) -> Result<(), CliError> {
    let bytes = table.to_csv();
    match path {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().write_all(bytes.as_bytes())?,
    }
    Ok(())
}

fn trajectories_for(
    model: &collision::ModelParams<f64>,
    noise: &NoiseParams<f64>,
    prune_threshold: f64,
) -> Result<Vec<collision::TrajectoryNode<f64>>, CliError> {
    if prune_threshold > 0.0 {
        Ok(collision::enumerate_trajectories_pruned(model, noise, prune_threshold)?.0)
    } else {
        Ok(collision::enumerate_trajectories(model, noise)?)
    }
}

/// Exact theory curves, one row per step 0..=n.
///
/// Columns: unconditional energy/ergotropy under the configured device
/// model, ideal-model daemonic ergotropy, noisy daemonic ergotropy (only
/// when noise is configured), and the exact extracted work of the
/// ideal-table and noisy-table strategies on the device model.
pub fn cmd_theory(cfg: &RunConfig) -> Result<OutputTable, CliError> {
    let model = cfg.model()?;
    let noise = cfg.noise();
    let h = model.hamiltonian();
    let mut table = if noise.enabled {
        OutputTable::new(&[
            "step",
            "uncond_energy",
            "uncond_ergotropy",
            "daemonic_ergotropy_ideal",
            "daemonic_ergotropy_noisy",
            "exact_work_ideal_table",
            "exact_work_noisy_table",
        ])
    } else {
        OutputTable::new(&[
            "step",
            "uncond_energy",
            "uncond_ergotropy",
            "daemonic_ergotropy_ideal",
            "exact_work_ideal_table",
            "exact_work_noisy_table",
        ])
    };
    let uncond = collision::evolve_uncond(&model, &noise)?;
    for step in 0..=model.steps {
        let sub = collision::ModelParams { steps: step, ..model };
        let ideal_trajs = trajectories_for(&sub, &NoiseParams::off(), cfg.prune_threshold)?;
        let device_trajs = trajectories_for(&sub, &noise, cfg.prune_threshold)?;
        let ideal_table = protocol::build_feedback_table(&sub, None)?;
        let noisy_table = protocol::build_feedback_table(&sub, Some(&noise))?;

        let rho = &uncond[step as usize];
        let mut row = vec![
            Cell::Int(u64::from(step)),
            Cell::Float(battery::energy(rho, &h)),
            Cell::Float(battery::ergotropy(rho, &h).ergotropy),
            Cell::Float(collision::daemonic_ergotropy(&ideal_trajs, &h)),
        ];
        if noise.enabled {
            row.push(Cell::Float(collision::daemonic_ergotropy(&device_trajs, &h)));
        }
        row.push(Cell::Float(collision::daemonic_work_exact(
            &device_trajs,
            &ideal_table,
            &h,
        )?));
        row.push(Cell::Float(collision::daemonic_work_exact(
            &device_trajs,
            &noisy_table,
            &h,
        )?));
        table.push(row);
    }
    Ok(table)
}

/// Shot-sampled extracted work per step, with the exact value and z-score.
pub fn cmd_shots(cfg: &RunConfig) -> Result<OutputTable, CliError> {
    let model = cfg.model()?;
    let noise = cfg.noise();
    let h = model.hamiltonian();
    let table_noise = match cfg.table_model {
        ModelTag::Ideal => None,
        ModelTag::Noisy => Some(&noise),
    };
    let sweep =
        protocol::run_shot_sweep(&model, &noise, table_noise, cfg.shots, cfg.seed)?;
    let mut out = OutputTable::new(&[
        "step",
        "work_mean",
        "work_stderr",
        "theory_daemonic_work",
        "z_score",
    ]);
    for record in &sweep.records {
        let sub = collision::ModelParams { steps: record.step, ..model };
        let trajs = trajectories_for(&sub, &noise, cfg.prune_threshold)?;
        let feedback = protocol::build_feedback_table(&sub, table_noise)?;
        let exact = collision::daemonic_work_exact(&trajs, &feedback, &h)?;
        let z = if record.std_error > 0.0 {
            (record.mean_extracted_work - exact) / record.std_error
        } else {
            0.0
        };
        out.push(vec![
            Cell::Int(u64::from(record.step)),
            Cell::Float(record.mean_extracted_work),
            Cell::Float(record.std_error),
            Cell::Float(exact),
            Cell::Float(z),
        ]);
    }
    Ok(out)
}

/// Readout-error calibration from the two preparation circuits.
pub fn cmd_calibrate(cfg: &RunConfig) -> Result<OutputTable, CliError> {
    let noise = cfg.noise();
    let cal = protocol::calibrate_readout(&noise, cfg.shots, cfg.seed)?;
    let mut out = OutputTable::new(&["p01_est", "p10_est", "shots"]);
    out.push(vec![
        Cell::Float(cal.p01_est),
        Cell::Float(cal.p10_est),
        Cell::Int(cal.shots),
    ]);
    Ok(out)
}

/// Continuum-limit convergence of the collision model against the Lindblad
/// reference, at successively halved step sizes.
pub fn cmd_lindblad_check(cfg: &RunConfig) -> Result<OutputTable, CliError> {
    let alpha = cfg.alpha.ok_or(ConfigError::MissingKey { key: "alpha" })?;
    let kappa = cfg.kappa.ok_or(ConfigError::MissingKey { key: "kappa" })?;
    let mut out = OutputTable::new(&["dt", "error", "ratio_to_previous"]);
    let mut prev: Option<f64> = None;
    let mut dt = cfg.dt_start;
    for _ in 0..=cfg.halvings {
        let err = collision::cm_continuum_check(alpha, kappa, cfg.t_final, dt)?;
        let ratio = prev.map_or(0.0, |p| p / err);
        out.push(vec![Cell::Float(dt), Cell::Float(err), Cell::Float(ratio)]);
        prev = Some(err);
        dt /= 2.0;
    }
    Ok(out)
}

#[derive(Parser)]
#[command(name = "qbattery", about = "Collisional-model quantum battery simulator", version)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact theory curves (energies, ergotropies, extractable work)
    Theory(CommonArgs),
    /// Shot-sampled feedback experiment
    Shots(CommonArgs),
    /// Readout-error calibration circuits
    Calibrate(CommonArgs),
    /// Collision-model vs Lindblad continuum-limit check
    LindbladCheck(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Path to the run configuration file
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path (default: stdout, or output_path from the config)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the seed from the config file
    #[arg(long)]
    seed: Option<u64>,
}

fn load(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|source| CliError::ConfigIo {
        path: args.config.clone(),
        source,
    })?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn dispatch(args: &CommonArgs, run: impl Fn(&RunConfig) -> Result<OutputTable, CliError>)
    -> Result<(), CliError>
{
    let cfg = load(args)?;
    let table = run(&cfg)?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_path.as_ref().map(PathBuf::from));
    write_csv(&table, out.as_deref())
}

/// Runs the parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Theory(args) => dispatch(args, cmd_theory),
        Command::Shots(args) => dispatch(args, cmd_shots),
        Command::Calibrate(args) => dispatch(args, cmd_calibrate),
        Command::LindbladCheck(args) => dispatch(args, cmd_lindblad_check),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}
