use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(name = "locsched", version, about = "Energy-aware localization scheduling for mobile robots")]
struct Cli {
    /// Cap on worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the belief MDP of a scenario.
    Abstract {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 2000)]
        particles: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the Pareto front of an MDP file.
    Pareto {
        #[arg(long)]
        mdp: PathBuf,
        /// Comma-separated subset of ptarg, pcoll, energy, duration.
        #[arg(long, default_value = "ptarg,pcoll,energy")]
        objectives: String,
        #[arg(long, default_value_t = 1e-6)]
        gap_tol: f64,
        #[arg(long, default_value_t = 500)]
        max_queries: usize,
        /// JSON front file; the CSV table goes next to it unless `--csv` is given.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Turn a front point into a localization schedule.
    Synthesize {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        front: PathBuf,
        /// Vertex number as listed in the front CSV, a baseline name
        /// (always_on, always_off) or bounds such as "ptarg>=0.99,pcoll<=0.01".
        #[arg(long)]
        point: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo validation of a schedule.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long, default_value_t = 1000)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// CSV of decimated per-run traces.
        #[arg(long)]
        traces: Option<PathBuf>,
        /// Resolve randomized nodes once per run.
        #[arg(long)]
        presample: bool,
    },
    /// Savings table of one or more fronts against a baseline schedule.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        front: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = BaselineArg::On)]
        baseline: BaselineArg,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    On,
    Off,
}

impl BaselineArg {
    fn name(self) -> &'static str {
        match self {
            BaselineArg::On => "always_on",
            BaselineArg::Off => "always_off",
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Abstract { scenario, particles, seed, out } => commands::abstract_mdp(&scenario, particles, seed, &out),
        Command::Pareto { mdp, objectives, gap_tol, max_queries, out, csv } => {
            let csv = csv.unwrap_or_else(|| out.with_extension("csv"));
            commands::pareto(&mdp, &objectives, gap_tol, max_queries, &out, &csv)
        }
        Command::Synthesize { mdp, front, point, out } => commands::synthesize(&mdp, &front, &point, &out),
        Command::Simulate { scenario, schedule, runs, seed, out, svg, traces, presample } => {
            let opts = commands::SimulateArgs { runs, seed, presample, svg, traces };
            commands::simulate(&scenario, &schedule, &out, &opts)
        }
        Command::Report { front, baseline, out } => commands::report(&front, baseline.name(), &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
