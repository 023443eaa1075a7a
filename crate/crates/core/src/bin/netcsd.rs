use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use netcsd::cli_io::{load_scenario, run, Command, RunOptions};
use netcsd::Error;

#[derive(Parser)]
#[command(name = "netcsd", version, about = "Critical slowing down in network dynamical systems")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate the scenario and write trajectory.csv.
    Simulate(Common),
    /// Equilibria, assumption checks and the critical parameter.
    Analyze(Common),
    /// Run the detector: residual localization or covariance alarms.
    Detect(Common),
    /// Run every alpha in parallel and write summary.csv.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file, or `preset:<name>` for a bundled one.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the noise seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the integrator step.
    #[arg(long)]
    dt: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Analyze(c) => (Command::Analyze, c),
        Cmd::Detect(c) => (Command::Detect, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
    };
    let opts = RunOptions {
        out: common.out,
        seed: common.seed,
        dt: common.dt,
    };
    match load_scenario(&common.scenario).and_then(|s| run(&s, command, &opts)) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ExitCode {
    let code = e.exit_code();
    let body = serde_json::json!({
        "error": e.kind(),
        "message": e.to_string(),
        "exit_code": code,
    });
    eprintln!("{body}");
    ExitCode::from(code as u8)
}
