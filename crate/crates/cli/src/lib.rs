//! Command-line front end: model files, command dispatch, report output and
//! the `verify` suite.
//!
//! Exit codes: 0 on success, 1 on numerical or output failure (including
//! failed verification criteria), 2 on usage or configuration errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod verify;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::{Numerics, Window};
use error::CliError;
use report::{emit_report, Format, Report};
use verify::Suite;

/// Environment variable that caps the number of worker threads.
pub const THREADS_ENV: &str = "SCALE_EVOLVE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "scale-evolve", version, about = "Perturbative evolution in scales of weighted sequence spaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: GlobalOpts,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Model file (TOML).
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Absolute tolerance of the series solver.
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub tol: f64,
    /// Initial number of time panels.
    #[arg(long, global = true, default_value_t = 64)]
    pub panels: usize,
    /// Largest admissible ratio of the time span to the horizon.
    #[arg(long = "rho-max", global = true, default_value_t = 0.95)]
    pub rho_max: f64,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Seed of every random choice; recorded in the report.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct ScaleArgs {
    /// Level of the input space.
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: f64,
    /// Level of the output space; must be below `--alpha`.
    #[arg(long = "alpha-prime", allow_negative_numbers = true)]
    pub alpha_prime: f64,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct WindowArgs {
    #[command(flatten)]
    pub scale: ScaleArgs,
    /// Final time.
    #[arg(long)]
    pub t: f64,
    /// Initial time.
    #[arg(long, default_value_t = 0.0)]
    pub s: f64,
}

impl WindowArgs {
    fn window(&self) -> Window {
        Window { alpha: self.scale.alpha, alpha_prime: self.scale.alpha_prime, s: self.s, t: self.t }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Existence horizon T(α', α) and the constants behind it.
    Horizon {
        #[command(flatten)]
        scale: ScaleArgs,
        /// Longest span the propagator bound is certified for.
        #[arg(long, default_value_t = 1.0)]
        t: f64,
    },
    /// Forward solution u(t) from u(s) given by [initial].
    Solve(WindowArgs),
    /// Backward solution W(t, s) applied to [initial], read at time s.
    Backward(WindowArgs),
    /// Adjoint evolution of the functional given by [initial].
    Dual(WindowArgs),
    /// Distance between the evolutions of two models with the integral bound.
    Stability {
        #[command(flatten)]
        window: WindowArgs,
        /// Second model file.
        #[arg(long)]
        other: PathBuf,
    },
    /// Errors of finite truncations against a reference truncation.
    TruncationStudy {
        #[command(flatten)]
        window: WindowArgs,
        /// Increasing truncation sizes.
        #[arg(long = "n-list", value_delimiter = ',', default_value = "16,32,64,128")]
        n_list: Vec<usize>,
    },
    /// Logistic hierarchy commands.
    #[command(subcommand)]
    Logistic(LogisticCommand),
    /// Runs the verification suite.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
    },
}

#[derive(Debug, Subcommand)]
pub enum LogisticCommand {
    /// Samples the stability condition on the kernels.
    CheckG {
        /// Largest configuration drawn.
        #[arg(long = "max-points", default_value_t = 6)]
        max_points: usize,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
    },
    /// Norm estimates of the generator parts against their measured values.
    Bounds(ScaleArgs),
    /// Evolves the [initial] hierarchy.
    Evolve {
        #[command(flatten)]
        window: WindowArgs,
        /// Largest accepted closure defect.
        #[arg(long = "defect-tol", default_value_t = f64::INFINITY)]
        defect_tol: f64,
    },
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| CliError::Usage(format!("{THREADS_ENV} = {v:?} is not a thread count")))?;
        if n == 0 {
            return Err(CliError::Usage(format!("{THREADS_ENV} must be at least 1")));
        }
        // a pool that already exists keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<Report, CliError> {
    let g = &cli.global;
    if !(g.tol > 0.0) || !(g.rho_max > 0.0 && g.rho_max < 1.0) || g.panels < 4 {
        return Err(CliError::Usage("need --tol > 0, 0 < --rho-max < 1 and --panels >= 4".into()));
    }
    let num = Numerics { tol: g.tol, panels: g.panels, rho_max: g.rho_max, seed: g.seed };
    let model = || commands::require_model(&g.model);
    match &cli.command {
        Command::Horizon { scale, t } => commands::horizon(model()?, scale.alpha, scale.alpha_prime, *t, &num),
        Command::Solve(w) => commands::solve(model()?, w.window(), false, &num),
        Command::Backward(w) => commands::solve(model()?, w.window(), true, &num),
        Command::Dual(w) => commands::dual(model()?, w.window(), &num),
        Command::Stability { window, other } => commands::stability(model()?, other, window.window(), &num),
        Command::TruncationStudy { window, n_list } => commands::study(model()?, window.window(), n_list, &num),
        Command::Logistic(LogisticCommand::CheckG { max_points, samples }) => {
            commands::logistic_check_g(model()?, *max_points, *samples, &num)
        }
        Command::Logistic(LogisticCommand::Bounds(s)) => commands::logistic_bounds(model()?, s.alpha, s.alpha_prime, &num),
        Command::Logistic(LogisticCommand::Evolve { window, defect_tol }) => {
            commands::logistic_evolve(model()?, window.window(), *defect_tol, &num)
        }
        Command::Verify { suite } => {
            let results = verify::run_suite(*suite, g.seed)?;
            for (o, d) in &results {
                eprintln!("{}", verify::table_line(o, *d));
            }
            let outcomes: Vec<_> = results.into_iter().map(|r| r.0).collect();
            let report = Report::json(verify::suite_json(*suite, g.seed, &outcomes));
            let failed = outcomes.iter().filter(|o| !o.pass).count();
            if failed > 0 {
                emit_report(&report, g.format, g.out.as_deref())?;
                return Err(CliError::VerifyFailed(failed));
            }
            Ok(report)
        }
    }
}

/// Runs one command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = configure_threads().and_then(|_| dispatch(&cli)).and_then(|r| emit_report(&r, cli.global.format, cli.global.out.as_deref()));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
