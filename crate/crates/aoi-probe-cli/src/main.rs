//! Experiment front-end: parse a config or preset, dispatch one of the
//! solve/learn/simulate/sweep/compare commands, and write CSV outputs plus
//! a JSON metadata sidecar into the output directory.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 I/O error,
//! 4 state space over budget, 5 internal solver/learning failure.

mod commands;
mod spec;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "aoi-probe",
    version,
    about = "Channel-probing AoI policy toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Args)]
struct CommonArgs {
    /// TOML experiment file (see the library docs for the schema).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Reference parameter set: fig2 | fig3 | fig4 | fig5 | fig6.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out", env = "AOI_PROBE_OUT")]
    out: PathBuf,
    /// Discount factor override.
    #[arg(long)]
    alpha: Option<f64>,
    /// Bernoulli arrival-rate override.
    #[arg(long)]
    lambda: Option<f64>,
    /// Age cap override.
    #[arg(long)]
    t_max: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Single-process i.i.d. value iteration with threshold extraction.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        /// Sup-norm stopping tolerance.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// N-process i.i.d. value iteration with threshold slices.
    SolveMulti {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Number of processes (overrides the config).
        #[arg(long)]
        processes: Option<usize>,
        /// Refuse grids larger than this many J cells.
        #[arg(long, default_value_t = 50_000_000)]
        cell_budget: u64,
        /// Fixed ages of the non-leading processes for the slice CSVs,
        /// e.g. --fix-ages 3,2 for N = 3.
        #[arg(long, value_delimiter = ',')]
        fix_ages: Option<Vec<u32>>,
        /// Also run the sorted-ages table as a cross-check and record the
        /// compression in the metadata.
        #[arg(long)]
        canonical: bool,
    },
    /// Markovian channel + harvesting value iteration with threshold
    /// surfaces.
    SolveMarkov {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Two-stage Q-learning with learning-curve export.
    Learn {
        #[command(flatten)]
        common: CommonArgs,
        /// Model variant for the fig6 preset: iid | markov (otherwise the
        /// channel block decides).
        #[arg(long)]
        model: Option<String>,
        /// Independent learning runs.
        #[arg(long, default_value_t = 2)]
        seeds: u64,
        #[arg(long, default_value_t = 100)]
        seed_base: u64,
        /// Learning slots per run.
        #[arg(long, default_value_t = 500_000)]
        horizon: u64,
        /// Exploration rate.
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// Exploration floor (defaults to epsilon: constant exploration).
        #[arg(long)]
        epsilon_min: Option<f64>,
        /// Slots over which epsilon decays linearly to the floor.
        #[arg(long)]
        epsilon_decay: Option<u64>,
        /// Step size scale d0.
        #[arg(long, default_value_t = 1.0)]
        d0: f64,
        /// Step size exponent in (0.5, 1].
        #[arg(long, default_value_t = 0.6)]
        omega: f64,
        /// Estimate p(C) from delivery feedback instead of using it.
        #[arg(long)]
        unknown_p: bool,
        /// Optimistic table initialization value.
        #[arg(long)]
        optimistic: Option<f64>,
        /// Resume from serialized Q tables.
        #[arg(long)]
        resume_from: Option<PathBuf>,
        /// Horizon of the greedy-policy evaluation runs.
        #[arg(long, default_value_t = 200_000)]
        eval_horizon: u64,
        #[arg(long, default_value_t = 5)]
        eval_seeds: u64,
    },
    /// Evaluate the solved policy's time-averaged AoI by simulation.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        model: Option<String>,
        #[arg(long, default_value_t = 1_000_000)]
        horizon: u64,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 1000)]
        seed_base: u64,
        /// Also write every k-th slot of one replicate to trace.csv
        /// (single-process i.i.d. runs only).
        #[arg(long)]
        trace_every: Option<u64>,
    },
    /// Solve across an arrival-rate sweep, collecting threshold CSVs.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Arrival rates to sweep.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
    },
    /// Probing-versus-no-probing comparison table.
    CompareProbing {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        /// Cost pairs as E_p:E_s, e.g. 1:1,1:5.
        #[arg(long, value_delimiter = ',')]
        cost_pairs: Option<Vec<String>>,
        #[arg(long, default_value_t = 1_000_000)]
        horizon: u64,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 9000)]
        seed_base: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve { common, tol } => commands::solve(&common, tol),
        Command::SolveMulti {
            common,
            tol,
            processes,
            cell_budget,
            fix_ages,
            canonical,
        } => commands::solve_multi(&common, tol, processes, cell_budget, fix_ages, canonical),
        Command::SolveMarkov { common, tol } => commands::solve_markov(&common, tol),
        Command::Learn {
            common,
            model,
            seeds,
            seed_base,
            horizon,
            epsilon,
            epsilon_min,
            epsilon_decay,
            d0,
            omega,
            unknown_p,
            optimistic,
            resume_from,
            eval_horizon,
            eval_seeds,
        } => commands::learn(commands::LearnParams {
            common,
            model,
            seeds,
            seed_base,
            horizon,
            epsilon,
            epsilon_min,
            epsilon_decay,
            d0,
            omega,
            unknown_p,
            optimistic,
            resume_from,
            eval_horizon,
            eval_seeds,
        }),
        Command::Simulate {
            common,
            model,
            horizon,
            seeds,
            seed_base,
            trace_every,
        } => commands::simulate(&common, model, horizon, seeds, seed_base, trace_every),
        Command::Sweep {
            common,
            tol,
            lambdas,
        } => commands::sweep(&common, tol, lambdas),
        Command::CompareProbing {
            common,
            lambdas,
            cost_pairs,
            horizon,
            seeds,
            seed_base,
        } => commands::compare_probing(&common, lambdas, cost_pairs, horizon, seeds, seed_base),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(lib) = err.downcast_ref::<aoi_probe::Error>() {
        return match lib {
            aoi_probe::Error::InvalidConfig(_) | aoi_probe::Error::ConfigFile(_) => 2,
            aoi_probe::Error::Io(_) | aoi_probe::Error::Csv(_) => 3,
            aoi_probe::Error::StateSpaceTooLarge { .. } => 4,
            _ => 5,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 3;
    }
    5
}
