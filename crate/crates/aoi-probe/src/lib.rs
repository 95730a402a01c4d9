//! Planning and simulation toolkit for age-of-information (AoI) minimization
//! by an energy-harvesting source that may pay energy to probe a fading
//! channel before sampling a process.
//!
//! The crate covers four pieces:
//!
//! - exact tabular value iteration for the discounted two-stage MDPs
//!   (single process, multiple processes, Markovian channel + harvesting),
//! - threshold extraction and structural diagnostics for the resulting
//!   policies,
//! - two-table Q-learning driven by the same two-stage action model,
//! - a slot-level Monte-Carlo simulator for evaluating any policy's
//!   time-averaged AoI.
//!
//! Decisions are taken in two stages per slot: first whether to spend
//! `E_p` energy units probing the channel, then (given the probed state)
//! whether to spend `E_s` more sampling a process and transmitting.

pub mod channel;
pub mod config;
pub mod energy;
pub mod export;
pub mod presets;
pub mod qlearning;
pub mod sim;
pub mod solver;

pub use channel::{ChannelState, IidChannel, MarkovChannel};
pub use config::{ExperimentConfig, SystemConfig};
pub use energy::{ArrivalDistribution, HarvestChain, HarvestState};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A system/channel/energy parameter violates a construction invariant.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Value iteration hit its iteration cap above tolerance. The backup is
    /// an alpha-contraction, so this signals a bug rather than a hard model.
    #[error("value iteration did not converge: residual {residual:.3e} after {iters} iterations")]
    NoConvergence { residual: f64, iters: usize },

    /// The requested state grid exceeds the configured cell budget.
    #[error("state space too large: {cells} cells exceeds budget {budget}")]
    StateSpaceTooLarge { cells: u128, budget: u64 },

    /// A theorem-backed structural property of the extracted policy failed.
    /// Conjecture-backed properties are reported, never raised as this.
    #[error("threshold structure violation: {0}")]
    StructureViolation(String),

    /// A learning transition record's action is infeasible in its state.
    #[error("mismatched transition record: {0}")]
    MismatchedRecord(String),

    /// A policy callback requested an action the energy level forbids.
    #[error("infeasible action: {0}")]
    InfeasibleAction(String),

    #[error("config file: {0}")]
    ConfigFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
