//! `nsqip`: reproducible experiments over no-signaling games and the
//! derived quantum protocol.
//!
//! Exit codes: 0 success, 1 property violation, 2 input error, 3 resource
//! cap.

mod commands;
mod error;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{DEFAULT_SEED, DEFAULT_TOL, DEFAULT_TRIALS, QUBIT_CAP};
use error::CliError;
use spec::InstanceSource;

#[derive(Parser)]
#[command(
    name = "nsqip",
    version,
    about = "No-signaling games, exact LP values and quantum protocol simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact no-signaling value of an instance's game.
    Lp {
        /// Instance file, `tx:H` or `random:SEED,N_BITS`.
        #[arg(long)]
        instance: InstanceSource,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the quantum protocol with the honest prover of a strategy.
    Qsim {
        #[arg(long)]
        instance: InstanceSource,
        /// `honest`, `lp-optimal`, `tx` or a strategy JSON file.
        #[arg(long, default_value = "honest")]
        strategy: String,
        /// Question bits; must match the instance when given.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = QUBIT_CAP)]
        qubit_cap: usize,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized checks of the trace-norm and no-signaling inequalities.
    VerifyLemmas {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Inverts one suite's verdicts, to exercise failure reporting.
        #[arg(long, hide = true)]
        negate: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CSV table over tx heights 1 to 4 from earlier reports in a directory.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gradient ascent over prover unitaries.
    Seesaw {
        #[arg(long)]
        instance: InstanceSource,
        /// Start from this strategy's honest prover (`honest`, `lp-optimal`,
        /// `tx` or a file).
        #[arg(long)]
        strategy: Option<String>,
        /// Random starts, seeded `seed`, `seed + 1`, ...
        #[arg(long, default_value_t = 0)]
        restarts: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        iters: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Stop when the gradient norm falls below this.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = QUBIT_CAP)]
        qubit_cap: usize,
        /// Optimization trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Lp { instance, out } => commands::lp(&commands::LpArgs { instance, out }),
        Command::Qsim {
            instance,
            strategy,
            k,
            qubit_cap,
            tol,
            out,
        } => commands::qsim(&commands::QsimArgs {
            instance,
            strategy,
            k,
            qubit_cap,
            tol,
            out,
        }),
        Command::VerifyLemmas {
            seed,
            trials,
            jobs,
            negate,
            out,
        } => commands::verify_lemmas(&commands::VerifyArgs {
            seed,
            trials,
            jobs,
            negate,
            out,
        }),
        Command::Report { input, out } => commands::report(&commands::ReportArgs { input, out }),
        Command::Seesaw {
            instance,
            strategy,
            restarts,
            seed,
            iters,
            jobs,
            tol,
            k,
            qubit_cap,
            trace,
            out,
        } => commands::seesaw(&commands::SeesawArgs {
            instance,
            strategy,
            restarts,
            seed,
            iters,
            jobs,
            tol,
            k,
            qubit_cap,
            trace,
            out,
        }),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
