//! Exact tabular value iteration for the discounted two-stage MDPs.
//!
//! One submodule per model variant: [`iid_single`] (one process, i.i.d.
//! channel and arrivals), [`iid_multi`] (N processes sharing one channel),
//! and [`markov`] (Markovian channel and harvesting). All three iterate
//! the variant's Bellman backup from the all-zero table until the
//! sup-norm change drops below tolerance, and all three assert the
//! alpha-contraction of the backup operator on the recorded error trace
//! at every step.

pub mod iid_multi;
pub mod iid_single;
pub mod markov;

use crate::{Error, Result};

/// Slack added to contraction and consistency assertions to absorb
/// floating-point rounding.
pub const CONTRACTION_SLACK: f64 = 1e-12;

/// Stopping parameters shared by every solver variant.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Sup-norm tolerance on successive iterates. The contraction bound
    /// turns this into a distance-to-fixed-point bound of
    /// `tol * alpha / (1 - alpha)`.
    pub tol: f64,
    /// Iteration cap; hitting it above tolerance signals a bug.
    pub max_iters: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 100_000,
        }
    }
}

/// Ages this close to the cap have truncation-affected thresholds.
pub fn truncation_affected(age: u32, age_cap: u32) -> bool {
    age + 2 > age_cap
}

/// Sup-norm of the difference between two tables.
pub(crate) fn sup_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Checks the contraction of successive sup-norm changes and the stopping
/// rule, shared across solver variants. Returns true when converged.
pub(crate) fn record_and_check(
    trace: &mut Vec<f64>,
    delta: f64,
    alpha: f64,
    opts: &SolveOptions,
) -> Result<bool> {
    if let Some(&prev) = trace.last() {
        assert!(
            delta <= alpha * prev + CONTRACTION_SLACK,
            "Bellman backup is not contracting: e_t = {prev:.6e}, e_t+1 = {delta:.6e}, alpha = {alpha}"
        );
    }
    trace.push(delta);
    if delta <= opts.tol {
        return Ok(true);
    }
    if trace.len() >= opts.max_iters {
        return Err(Error::NoConvergence {
            residual: delta,
            iters: trace.len(),
        });
    }
    Ok(false)
}
