use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kw_cli::commands::{run, Invocation};
use kw_cli::scenario::ConventionSpec;

/// Knight-Walras equilibria of finite-state exchange economies:
/// solve, verify, sweep, and sample scenarios given as strict JSON.
#[derive(Parser)]
#[command(name = "kw", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the scenario and report the equilibrium found.
    Solve(RunArgs),
    /// Check a candidate price and allocation against the scenario.
    Verify(VerifyArgs),
    /// Solve across the scenario's epsilon grid and tabulate the
    /// equilibrium response.
    Sweep(RunArgs),
    /// Resample endowments and measure how often the averaged-economy
    /// equilibrium survives the full prior set.
    Sample(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Directory for reports and CSV output.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the scenario's clearing convention.
    #[arg(long, value_enum)]
    convention: Option<ConventionArg>,
    /// Override the solver and experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also run the Arrow-Debreu solver at the centroid prior.
    #[arg(long)]
    ad: bool,
    /// Override the residual tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Candidate file: either `{psi, allocation}` or a solve report.
    #[arg(long)]
    candidate: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    Disposal,
    Equality,
}

impl ConventionArg {
    fn to_spec(self) -> ConventionSpec {
        match self {
            ConventionArg::Disposal => ConventionSpec::Disposal,
            ConventionArg::Equality => ConventionSpec::Equality,
        }
    }
}

fn invocation(subcommand: &'static str, args: RunArgs, candidate: Option<PathBuf>) -> Invocation {
    Invocation {
        subcommand,
        scenario: args.scenario,
        out: args.out,
        convention: args.convention.map(ConventionArg::to_spec),
        seed: args.seed,
        ad: args.ad,
        tolerance: args.tolerance,
        candidate,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let inv = match cli.command {
        Command::Solve(args) => invocation("solve", args, None),
        Command::Verify(args) => invocation("verify", args.run, Some(args.candidate)),
        Command::Sweep(args) => invocation("sweep", args, None),
        Command::Sample(args) => invocation("sample", args, None),
    };
    match run(&inv) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
