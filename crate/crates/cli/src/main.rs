//! `rkenergy` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 precondition refusal, 3 runtime failure.

mod commands;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rkenergy::search::DEFAULT_MAX_ITERATIONS;
use rkenergy::stability::DEFAULT_SIGN_DEPTH;
use rkenergy::Precision;

use commands::{CliError, SearchArgs, SimulateArgs};
use report::Format;

#[derive(Debug, Parser)]
#[command(name = "rkenergy", version, about = "Energy-stability analysis of explicit Runge–Kutta methods")]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    /// Integrate in binary128 arithmetic (also set by RKENERGY_PRECISION=extended).
    #[arg(long, global = true)]
    extended: bool,

    /// Tableau file replacing the catalog entry of the same name; repeatable.
    #[arg(long = "tableau", global = true, value_name = "FILE")]
    tableaux: Vec<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Order, node structure, algebraic stability, sign condition and
    /// imaginary-axis behaviour of a method.
    Analyze {
        /// Catalog name or tableau file.
        method: String,
        /// Sign-condition scan depth K.
        #[arg(long, default_value_t = DEFAULT_SIGN_DEPTH)]
        depth: usize,
    },
    /// Exact energy-change expansion up to total order n_tot.
    Expand { method: String, n_tot: usize },
    /// Integrate a catalog problem, write the energy trace and print a verdict.
    Simulate {
        method: String,
        /// cubicrot, invsqrot, linrot, sinrot, advection<m>, bushy:<k> or spike:<method>:<stage>.
        problem: String,
        dt: f64,
        #[arg(value_name = "T")]
        t_end: f64,
        /// Record every N-th step (default: at most 10000 rows).
        #[arg(long)]
        stride: Option<usize>,
        /// CSV path (default: <method>_<problem>_<dt>.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Spike amplitude for spike problems.
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        /// Single spike instead of one per step.
        #[arg(long)]
        single_spike: bool,
    },
    /// One-step spike counterexample at a unique quadrature node (stage is 1-based).
    Counterexample {
        method: String,
        stage: usize,
        dt: f64,
        eps: f64,
    },
    /// Construct an energy-stable tableau for given nodes, or verify an existing one.
    Search {
        /// Comma-separated rational nodes, e.g. 0,1/2,1,0,1.
        #[arg(long, conflicts_with = "verify", required_unless_present = "verify")]
        nodes: Option<String>,
        /// Verify the sufficient conditions for an existing method instead.
        #[arg(long)]
        verify: Option<String>,
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MAX_ITERATIONS)]
        max_iterations: usize,
        /// Sign-condition scan depth K.
        #[arg(long, default_value_t = DEFAULT_SIGN_DEPTH)]
        depth: usize,
        /// Write the found tableau to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance suite.
    Suite {
        /// Only criteria whose id, name or summary matches.
        #[arg(long)]
        filter: Option<String>,
    },
}

fn precision(cli: &Cli) -> Precision {
    if cli.extended {
        Precision::Extended
    } else {
        Precision::from_env()
    }
}

/// Returns the report and whether the command counts as successful.
fn dispatch(cli: &Cli) -> Result<(report::Report, bool), CliError> {
    let cat = commands::catalog_with(&cli.tableaux)?;
    let ok = |r| Ok((r, true));
    match &cli.command {
        Command::Analyze { method, depth } => ok(commands::analyze(&cat, method, *depth)?),
        Command::Expand { method, n_tot } => ok(commands::expand(&cat, method, *n_tot)?),
        Command::Simulate {
            method,
            problem,
            dt,
            t_end,
            stride,
            out,
            eps,
            single_spike,
        } => ok(commands::simulate(
            &cat,
            &SimulateArgs {
                method,
                problem,
                dt: *dt,
                t_end: *t_end,
                stride: *stride,
                out: out.as_deref(),
                eps: *eps,
                single_spike: *single_spike,
                precision: precision(cli),
            },
        )?),
        Command::Counterexample { method, stage, dt, eps } => {
            ok(commands::counterexample(&cat, method, *stage, *dt, *eps)?)
        }
        Command::Search {
            nodes,
            verify,
            order,
            seed,
            max_iterations,
            depth,
            out,
        } => ok(commands::search(
            &cat,
            &SearchArgs {
                nodes: nodes.as_deref(),
                verify: verify.as_deref(),
                order: *order,
                seed: *seed,
                max_iterations: *max_iterations,
                depth: *depth,
                out: out.as_deref(),
            },
        )?),
        Command::Suite { filter } => commands::run_suite(&cat, filter.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok((report, success)) => {
            let mut out = std::io::stdout().lock();
            if let Err(e) = report.write(cli.format, &mut out).and_then(|_| out.flush()) {
                eprintln!("error: writing output: {e}");
                return ExitCode::from(3);
            }
            if success {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}
