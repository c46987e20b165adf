//! Batch front end for the `bpalm` solver: problem documents, flags,
//! reports and trace files.

pub mod file;
pub mod functions;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use bpalm::outer::{default_start, run};
use bpalm::{BregmanGeometry, DualPenalty, LegendreFunction, Regime, RhoSchedule, SolverConfig, Status};
use clap::{Parser, ValueEnum};
use thiserror::Error;

use crate::file::{BoundsRoute, ConstraintKind, ProblemFile};
use crate::report::{diagnose, Report};

pub const EXIT_OPTIMAL: i32 = 0;
pub const EXIT_MAX_ITER: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Solver(bpalm::Error),
}

impl From<bpalm::Error> for CliError {
    fn from(e: bpalm::Error) -> Self {
        match e {
            bpalm::Error::Dimension(msg) => CliError::Dimension(msg),
            other => CliError::Solver(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrimalArg {
    Energy,
    #[value(name = "box_barrier")]
    BoxBarrier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DualArg {
    Energy,
    #[value(name = "von_neumann")]
    VonNeumann,
    Spence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Qsc,
    #[value(name = "qsc_lipschitz")]
    QscLipschitz,
    Sc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "bpalm", version, about = "Bregman proximal augmented Lagrangian solver with Newton inner steps")]
pub struct Cli {
    /// Problem document (TOML).
    #[arg(long)]
    pub problem: PathBuf,
    /// Primal Legendre function; defaults to box_barrier for bounded
    /// problems under the sc regime, energy otherwise.
    #[arg(long, value_enum)]
    pub primal: Option<PrimalArg>,
    /// Dual Legendre function; defaults by constraint type.
    #[arg(long, value_enum)]
    pub dual: Option<DualArg>,
    /// Complexity regime; defaults to sc for bounded problems, qsc otherwise.
    #[arg(long, value_enum)]
    pub regime: Option<RegimeArg>,
    #[arg(long, default_value_t = 1.0)]
    pub sigma0: f64,
    #[arg(long, default_value_t = 2.0)]
    pub sigma_growth: f64,
    /// Relative error parameter (the initial one with --rho-decay).
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    /// Multiply rho by this factor every outer iteration.
    #[arg(long)]
    pub rho_decay: Option<f64>,
    /// Tolerance on both B_k and the KKT residuals.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_outer: usize,
    #[arg(long, default_value_t = 50)]
    pub newton_cap: usize,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub report: ReportFormat,
    /// Write the per-iteration trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Run Fejér, rate, ergodic and summability checks against the
    /// solution embedded in the problem document.
    #[arg(long)]
    pub diagnose: bool,
    /// Report a wall time of zero so that reports are byte-reproducible.
    #[arg(long)]
    pub no_timing: bool,
}

pub fn default_dual(kind: ConstraintKind) -> DualArg {
    match kind {
        ConstraintKind::Eq | ConstraintKind::L1 => DualArg::Energy,
        ConstraintKind::Ineq | ConstraintKind::Vecmax => DualArg::VonNeumann,
    }
}

/// Everything needed to run one solve.
#[derive(Debug, Clone)]
pub struct Setup {
    pub file: ProblemFile,
    pub built: file::BuiltProblem,
    pub config: SolverConfig,
}

pub fn setup(cli: &Cli, file: ProblemFile) -> Result<Setup, CliError> {
    let bounded = file.has_bounds();
    let regime = match cli.regime {
        Some(RegimeArg::Qsc) => Regime::Qsc,
        Some(RegimeArg::QscLipschitz) => Regime::QscLipschitz,
        Some(RegimeArg::Sc) => Regime::Sc,
        None if bounded => Regime::Sc,
        None => Regime::Qsc,
    };
    let primal = match (cli.primal, regime) {
        (Some(PrimalArg::Energy), Regime::Sc) if bounded => {
            return Err(CliError::Usage("bounds under the sc regime need the box_barrier primal geometry".into()))
        }
        (Some(p), _) => p,
        (None, Regime::Sc) if bounded => PrimalArg::BoxBarrier,
        (None, _) => PrimalArg::Energy,
    };
    let route = match primal {
        PrimalArg::BoxBarrier => BoundsRoute::Barrier,
        PrimalArg::Energy => BoundsRoute::Constraint,
    };
    let built = file.build(route)?;
    let n = built.spec.n;
    let m = built.spec.m;
    let psi = match primal {
        PrimalArg::Energy => LegendreFunction::energy(n),
        PrimalArg::BoxBarrier => {
            let (l, u) = built.barrier_bounds.clone().unwrap_or((vec![f64::NEG_INFINITY; n], vec![f64::INFINITY; n]));
            LegendreFunction::box_barrier(l, u)?
        }
    };
    let phi = match cli.dual.unwrap_or_else(|| default_dual(file.constraint.kind)) {
        DualArg::Energy => LegendreFunction::energy(m),
        DualArg::VonNeumann => LegendreFunction::von_neumann(m),
        DualArg::Spence => LegendreFunction::spence(m),
    };
    if let Err(e) = DualPenalty::new(built.spec.g, &phi) {
        return Err(CliError::Usage(e.to_string()));
    }
    let mut config = SolverConfig::new(BregmanGeometry::new(psi, phi));
    config.regime = regime;
    config.sigma0 = cli.sigma0;
    config.sigma_growth = cli.sigma_growth;
    config.sigma_max = config.sigma_max.max(cli.sigma0);
    config.rho_schedule = match cli.rho_decay {
        Some(factor) => RhoSchedule::Geometric { rho0: cli.rho, factor },
        None => RhoSchedule::Constant(cli.rho),
    };
    config.tol_b = cli.tol;
    config.tol_kkt = cli.tol;
    config.max_outer = cli.max_outer;
    config.newton_cap = cli.newton_cap;
    if let Err(e) = config.validate() {
        return Err(CliError::Usage(e.to_string()));
    }
    Ok(Setup { file, built, config })
}

/// The outcome of a run: the report and the process exit code.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub exit_code: i32,
}

pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let file = ProblemFile::load(&cli.problem)?;
    let setup = setup(cli, file)?;
    let spec = &setup.built.spec;
    let (x0, y0) = default_start(&setup.config, spec);
    let start = Instant::now();
    let solved = run(&setup.config, spec, x0, y0)?;
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    let wall_time_ms = if cli.no_timing { 0.0 } else { elapsed };
    let reference = report::reference(&setup);
    if let Some(path) = &cli.trace {
        report::write_trace(path, &solved.trace, reference.as_ref(), &setup.config.geometry)?;
    }
    let diagnostics = if cli.diagnose { Some(diagnose(&setup, &solved, reference.as_ref())) } else { None };
    let exit_code = match solved.status {
        Status::Optimal => EXIT_OPTIMAL,
        Status::MaxIter => EXIT_MAX_ITER,
        Status::InnerFailure | Status::Diverged => EXIT_FAILURE,
    };
    Ok(Outcome { report: Report::new(&solved, wall_time_ms, diagnostics), exit_code })
}

/// Parses `args`, runs, prints the report and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OPTIMAL,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            let text = match cli.report {
                ReportFormat::Text => outcome.report.to_text(),
                ReportFormat::Json => outcome.report.to_json(),
            };
            print!("{text}");
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
