//! The `semifluxon` command line.
//!
//! Every subcommand writes one self-describing file (or stdout): CSV for
//! curves, JSON for structured records. Exit codes are 0 on success, 2 for
//! usage errors, 3 for numerical precondition failures and 4 when a solver
//! does not converge.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::boundary::{area_perimeter, check_admissible};
use crate::circle::{circle_levels, Parity, DEFAULT_TRUNCATION};
use crate::degeneracy::{catalog, codimension, track_collision, CollisionOutcome, KWindow, ShapeFamily, ToyCounter};
use crate::error::Error;
use crate::nodal_force::{force, trace_nodal};
use crate::spectral::{find_levels, mode_coefficients};
use crate::weyl;
use config::{FileConfig, Overrides, RunConfig};
use output::{emit, sig, RunInfo};

#[derive(Debug, Parser)]
#[command(name = "semifluxon", version, about = "Levels, degeneracies and flux forces of semifluxon billiards")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML file with [shape], [flux], [solver] and [degeneracy] tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Named shape: circle, reference, table or africa.
    #[arg(long, global = true)]
    pub shape: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub a2: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub a3: Option<f64>,
    /// Radians, or text such as pi/3.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub sigma: Option<String>,
    /// Flux X.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub x: Option<f64>,
    /// Flux Y.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub y: Option<f64>,
    /// Collocation truncation N (2N boundary points).
    #[arg(long, short = 'n', global = true)]
    pub truncation: Option<usize>,
    /// Minimum flux clearance from the boundary.
    #[arg(long, global = true)]
    pub margin: Option<f64>,
    #[arg(long, global = true)]
    pub k_min: Option<f64>,
    #[arg(long, global = true)]
    pub k_max: Option<f64>,
    /// Root-scan grid step in k.
    #[arg(long, global = true)]
    pub k_step: Option<f64>,
    /// Worker threads (0 = all cores).
    #[arg(long, short = 'j', global = true)]
    pub workers: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, short = 'o', global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Circle levels against flux displacement R (CSV: R, parity, level_index, k).
    CircleSpectrum(CircleSpectrumArgs),
    /// Levels at one flux position (CSV: index, k, E, sigma_min).
    Levels,
    /// Degeneracy catalogue (JSON).
    Degeneracies(DegeneraciesArgs),
    /// Bisect the parameter at which a degeneracy count changes (JSON).
    Collide(CollideArgs),
    /// Nodal line from the flux (CSV) and the force on the flux (JSON).
    Nodal(NodalArgs),
    /// Level staircase against the smoothed Weyl curve (CSV).
    Staircase(StaircaseArgs),
    /// Codimension of an N-fold degeneracy (JSON).
    Codim(CodimArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ParityChoice {
    Both,
    Even,
    Odd,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct CircleSpectrumArgs {
    #[arg(long, default_value_t = 0.0)]
    pub r_min: f64,
    #[arg(long, default_value_t = 0.9)]
    pub r_max: f64,
    #[arg(long, default_value_t = 0.01)]
    pub r_step: f64,
    #[arg(long, value_enum, default_value_t = ParityChoice::Both)]
    pub parity: ParityChoice,
    /// Bessel series truncation S.
    #[arg(long, default_value_t = DEFAULT_TRUNCATION)]
    pub series: usize,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct DegeneraciesArgs {
    /// Highest level; pairs (1,2) .. (n_max-1, n_max).
    #[arg(long, default_value_t = 4)]
    pub n_max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Vary a2 at fixed a3 and sigma.
    A2,
    /// The two-level model with control parameter Z.
    Toy,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct CollideArgs {
    #[arg(long, value_enum, default_value_t = Family::A2)]
    pub family: Family,
    /// Lower level n of the pair (n, n+1).
    #[arg(long, default_value_t = 3)]
    pub pair: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub hi: Option<f64>,
    /// Final bracket width.
    #[arg(long)]
    pub width: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct NodalArgs {
    /// Level index from 1.
    #[arg(long, default_value_t = 1)]
    pub level: usize,
    #[arg(long, default_value_t = crate::nodal_force::DEFAULT_FD_STEP)]
    pub fd_step: f64,
    /// JSON force file; defaults to the output path with a .json extension.
    #[arg(long)]
    pub force_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct StaircaseArgs {
    #[arg(long, default_value_t = 60.0)]
    pub e_max: f64,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct CodimArgs {
    /// Number of degenerate levels.
    #[arg(long = "levels", short = 'N')]
    pub n_levels: u64,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Solver(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(e) => e.exit_code(),
            CliError::Io(_) | CliError::Usage(_) => 2,
        }
    }
}

impl Overrides {
    fn from_args(a: &CommonArgs) -> Self {
        Overrides {
            preset: a.shape.clone(),
            a2: a.a2,
            a3: a.a3,
            sigma: a.sigma.clone(),
            x: a.x,
            y: a.y,
            truncation: a.truncation,
            margin: a.margin,
            k_min: a.k_min,
            k_max: a.k_max,
            k_step: a.k_step,
            workers: a.workers,
            output: a.out.clone(),
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("semifluxon: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let file = match &cli.common.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let cfg = RunConfig::resolve(&file, &Overrides::from_args(&cli.common))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", cfg.workers)))?;
    pool.install(|| match &cli.command {
        Command::CircleSpectrum(a) => circle_spectrum(&cfg, a),
        Command::Levels => levels(&cfg),
        Command::Degeneracies(a) => degeneracies(&cfg, a),
        Command::Collide(a) => collide(&cfg, a),
        Command::Nodal(a) => nodal(&cfg, a),
        Command::Staircase(a) => staircase(&cfg, a),
        Command::Codim(a) => codim(&cfg, a),
    })
}

fn out_path(cfg: &RunConfig) -> Option<&Path> {
    cfg.output.as_deref()
}

fn circle_spectrum(cfg: &RunConfig, a: &CircleSpectrumArgs) -> Result<(), CliError> {
    if !(a.r_min >= 0.0 && a.r_max >= a.r_min && a.r_max < 1.0) {
        return Err(CliError::Usage(format!("need 0 <= r_min <= r_max < 1, got [{}, {}]", a.r_min, a.r_max)));
    }
    if a.r_max > a.r_min && !(a.r_step > 0.0) {
        return Err(CliError::Usage(format!("r_step must be positive, got {}", a.r_step)));
    }
    let [k_lo, k_hi] = cfg.k_range.unwrap_or([1.0, 8.0]);
    let count = if a.r_max > a.r_min { ((a.r_max - a.r_min) / a.r_step + 1e-9).floor() as usize + 1 } else { 1 };
    let parities: Vec<Parity> = match a.parity {
        ParityChoice::Both => vec![Parity::Even, Parity::Odd],
        ParityChoice::Even => vec![Parity::Even],
        ParityChoice::Odd => vec![Parity::Odd],
    };
    let rows: Vec<Result<String, Error>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let r = a.r_min + i as f64 * a.r_step;
            let mut text = String::new();
            for &p in &parities {
                let levels = circle_levels(p, r, k_lo, k_hi, a.series, &cfg.solver.scan)?;
                for (idx, k) in levels.ks().iter().enumerate() {
                    let _ = writeln!(text, "{},{},{},{}", sig(r), p.as_str(), idx + 1, sig(*k));
                }
            }
            Ok(text)
        })
        .collect();
    let mut text = RunInfo::new("circle-spectrum", a, cfg).csv_header();
    text.push_str("R,parity,level_index,k\n");
    for r in rows {
        text.push_str(&r?);
    }
    Ok(emit(out_path(cfg), &text)?)
}

fn levels(cfg: &RunConfig) -> Result<(), CliError> {
    let [k_lo, k_hi] = cfg.k_range.ok_or_else(|| CliError::Usage("levels needs --k-min and --k-max".into()))?;
    let list = find_levels(&cfg.shape, cfg.flux, k_lo, k_hi, &cfg.solver)?;
    let mut text = RunInfo::new("levels", &json!({}), cfg).csv_header();
    text.push_str("index,k,E,sigma_min\n");
    let mut index = 0;
    for l in &list.levels {
        for _ in 0..l.multiplicity {
            index += 1;
            let _ = writeln!(text, "{},{},{},{}", index, sig(l.k), sig(l.k * l.k), sig(l.sigma_min));
        }
    }
    Ok(emit(out_path(cfg), &text)?)
}

fn degeneracies(cfg: &RunConfig, a: &DegeneraciesArgs) -> Result<(), CliError> {
    if a.n_max < 2 {
        return Err(CliError::Usage(format!("n_max must be at least 2, got {}", a.n_max)));
    }
    let found = catalog(&cfg.shape, a.n_max, &cfg.degeneracy)?;
    let text = RunInfo::new("degeneracies", a, cfg).json(vec![
        ("degeneracies", serde_json::to_value(&found.degeneracies).unwrap_or_default()),
        ("near_misses", serde_json::to_value(&found.near_misses).unwrap_or_default()),
    ]);
    Ok(emit(out_path(cfg), &text)?)
}

fn collide(cfg: &RunConfig, a: &CollideArgs) -> Result<(), CliError> {
    let outcome = match a.family {
        Family::Toy => track_collision(
            &ToyCounter,
            "Z",
            [1, 2],
            (a.lo.unwrap_or(-1.0), a.hi.unwrap_or(1.0)),
            a.width.unwrap_or(1e-6),
        )?,
        Family::A2 => {
            if a.pair < 1 {
                return Err(CliError::Usage("pair must be >= 1".into()));
            }
            let family = ShapeFamily { a3: cfg.shape.a3, sigma: cfg.shape.sigma, n: a.pair, opts: cfg.degeneracy };
            track_collision(
                &family,
                "a2",
                [a.pair, a.pair + 1],
                (a.lo.unwrap_or(0.0), a.hi.unwrap_or(0.015)),
                a.width.unwrap_or(5e-4),
            )?
        }
    };
    let fields = match outcome {
        CollisionOutcome::Event(ev) => vec![("event", serde_json::to_value(&ev).unwrap_or_default())],
        CollisionOutcome::NoEvent { count } => vec![("event", serde_json::Value::Null), ("count", json!(count))],
    };
    let text = RunInfo::new("collide", a, cfg).json(fields);
    Ok(emit(out_path(cfg), &text)?)
}

fn nodal(cfg: &RunConfig, a: &NodalArgs) -> Result<(), CliError> {
    if a.level < 1 {
        return Err(CliError::Usage("levels are numbered from 1".into()));
    }
    check_admissible(&cfg.shape, cfg.flux, cfg.solver.margin)?;
    let est = force(&cfg.shape, cfg.flux, a.level, a.fd_step, &cfg.solver)?;
    let coeffs = mode_coefficients(&cfg.shape, cfg.flux, est.k, &cfg.solver)?;
    let info = trace_nodal(&coeffs, cfg.flux, est.k, &cfg.shape)?;

    let info_run = RunInfo::new("nodal", a, cfg);
    let mut csv = info_run.csv_header();
    csv.push_str("x,y\n");
    for p in &info.polyline {
        let _ = writeln!(csv, "{},{}", sig(p[0]), sig(p[1]));
    }
    let json = info_run.json(vec![
        ("force", serde_json::to_value(est).unwrap_or_default()),
        ("chi0", json!(info.chi0)),
        ("mu_nodal", json!(info.mu_nodal)),
        ("e0", json!(info.e0)),
    ]);
    let force_path = a.force_out.clone().or_else(|| cfg.output.as_ref().map(|p| p.with_extension("json")));
    emit(out_path(cfg), &csv)?;
    Ok(emit(force_path.as_deref(), &json)?)
}

fn staircase(cfg: &RunConfig, a: &StaircaseArgs) -> Result<(), CliError> {
    if !(a.e_max > 0.0) {
        return Err(CliError::Usage(format!("e_max must be positive, got {}", a.e_max)));
    }
    let (area, perimeter) = area_perimeter(&cfg.shape)?;
    let lo = KWindow::for_levels(&cfg.shape, 1)?.lo;
    let list = find_levels(&cfg.shape, cfg.flux, lo, a.e_max.sqrt() + 0.05, &cfg.solver)?;
    let report = weyl::compare(&list, area, perimeter, a.e_max)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    let mut text = RunInfo::new("staircase", &json!({"e_max": a.e_max, "area": area, "perimeter": perimeter}), cfg).csv_header();
    text.push_str(&String::from_utf8_lossy(&buf));
    Ok(emit(out_path(cfg), &text)?)
}

fn codim(cfg: &RunConfig, a: &CodimArgs) -> Result<(), CliError> {
    let (codim, min) = codimension(a.n_levels).map_err(|e| CliError::Usage(e.to_string()))?;
    let text = RunInfo::new("codim", a, cfg).json(vec![(
        "codimension",
        json!({"N": a.n_levels, "codim": codim, "min_semifluxons": min}),
    )]);
    Ok(emit(out_path(cfg), &text)?)
}
