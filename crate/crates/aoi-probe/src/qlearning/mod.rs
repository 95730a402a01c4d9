//! Two-table, two-stage Q-learning with asynchronous stochastic
//! approximation, for the i.i.d. and Markovian models.
//!
//! Unlike standard Q-learning, two kinds of value tables are maintained:
//! one over states with the probe action b, and one over intermediate
//! states (with the revealed channel state) with the sample action a.
//! Each (cell, action) pair carries its own occurrence counter nu, and the
//! step size of an update is d(nu) for that pair, not a function of the
//! global clock.

pub mod iid;
pub mod markov;

use serde::Serialize;

use crate::{Error, Result};

/// Step sizes d(n) = d0 / (1 + n)^omega. With omega in (0.5, 1] the
/// sequence is bounded by d0, non-increasing, sums to infinity, and has a
/// finite sum of squares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepSizeSchedule {
    pub d0: f64,
    pub exponent: f64,
}

impl StepSizeSchedule {
    pub fn new(d0: f64, exponent: f64) -> Result<Self> {
        if d0.is_nan() || d0 <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "step size d0 must be positive, got {d0}"
            )));
        }
        if !(exponent > 0.5 && exponent <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "step size exponent must lie in (0.5, 1], got {exponent}"
            )));
        }
        Ok(Self { d0, exponent })
    }

    /// Step size for the (n + 1)-th occurrence of a pair (n starts at 0,
    /// so the first update uses d0).
    pub fn step(&self, occurrences: u64) -> f64 {
        self.d0 / (1.0 + occurrences as f64).powf(self.exponent)
    }
}

impl Default for StepSizeSchedule {
    fn default() -> Self {
        // d0 = 1 makes the first update adopt its target outright, like a
        // running sample average; smaller d0 drags the all-zero
        // initialization along for several visits and measurably slows
        // convergence on the reference learning instances.
        Self {
            d0: 1.0,
            exponent: 0.6,
        }
    }
}

/// Exploration probability per slot: epsilon decays linearly to the floor
/// over `decay_slots` when set, otherwise stays constant. The floor must
/// be positive so every feasible pair keeps being visited.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExplorationSchedule {
    pub epsilon: f64,
    pub epsilon_min: f64,
    pub decay_slots: Option<u64>,
}

impl ExplorationSchedule {
    pub fn constant(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, epsilon, None)
    }

    pub fn new(epsilon: f64, epsilon_min: f64, decay_slots: Option<u64>) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must lie in (0, 1], got {epsilon}"
            )));
        }
        if !(epsilon_min > 0.0 && epsilon_min <= epsilon) {
            return Err(Error::InvalidConfig(format!(
                "epsilon floor must lie in (0, epsilon], got {epsilon_min}"
            )));
        }
        Ok(Self {
            epsilon,
            epsilon_min,
            decay_slots,
        })
    }

    pub fn at(&self, slot: u64) -> f64 {
        match self.decay_slots {
            None => self.epsilon,
            Some(0) => self.epsilon_min,
            Some(n) => {
                let frac = (slot as f64 / n as f64).min(1.0);
                self.epsilon + frac * (self.epsilon_min - self.epsilon)
            }
        }
    }
}

impl Default for ExplorationSchedule {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            epsilon_min: 0.1,
            decay_slots: None,
        }
    }
}

/// Whether the packet success probabilities p(C) are known to the learner.
/// When unknown, the sampling update replaces p(C) by the observed
/// delivery indicator r(t).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ChannelKnowledge {
    Known,
    Unknown,
}

/// One row of the learning curve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CurvePoint {
    pub slot: u64,
    /// Time-averaged AoI of the behavior policy over the trailing window.
    pub window_aoi: f64,
    pub epsilon: f64,
    /// Mean step size of the updates inside the window.
    pub mean_step_size: f64,
}

/// Knobs of a learning run.
#[derive(Debug, Clone, Copy)]
pub struct LearningConfig {
    pub steps: StepSizeSchedule,
    pub exploration: ExplorationSchedule,
    pub horizon: u64,
    pub mode: ChannelKnowledge,
    /// Initialize every table entry to this instead of 0.
    pub optimistic_init: Option<f64>,
    /// Trailing window length for the reported AoI.
    pub window: u64,
    /// Curve sampling period.
    pub report_every: u64,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            steps: StepSizeSchedule::default(),
            exploration: ExplorationSchedule::default(),
            horizon: 500_000,
            mode: ChannelKnowledge::Known,
            optimistic_init: None,
            window: 10_000,
            report_every: 1_000,
        }
    }
}

/// Fixed-size trailing window with O(1) mean.
#[derive(Debug, Clone)]
pub(crate) struct Ring {
    buf: Vec<f64>,
    head: usize,
    filled: usize,
    sum: f64,
}

impl Ring {
    pub fn new(cap: usize) -> Self {
        Self {
            buf: vec![0.0; cap.max(1)],
            head: 0,
            filled: 0,
            sum: 0.0,
        }
    }

    pub fn push(&mut self, x: f64) {
        if self.filled == self.buf.len() {
            self.sum -= self.buf[self.head];
        } else {
            self.filled += 1;
        }
        self.sum += x;
        self.buf[self.head] = x;
        self.head = (self.head + 1) % self.buf.len();
    }

    pub fn mean(&self) -> f64 {
        if self.filled == 0 {
            0.0
        } else {
            self.sum / self.filled as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_sizes_satisfy_the_stochastic_approximation_clauses() {
        let sched = StepSizeSchedule::default();
        // Bounded by d0 and non-increasing.
        let mut prev = f64::INFINITY;
        for n in 0..10_000 {
            let d = sched.step(n);
            assert!(d > 0.0 && d <= sched.d0);
            assert!(d <= prev);
            prev = d;
        }
        // Divergent sum: with omega <= 1 the partial sums grow without
        // bound; check against the integral lower bound
        // sum_{n < N} d(n) >= d0 ((1 + N)^(1 - w) - 1) / (1 - w).
        let n_terms = 1_000_000u64;
        let partial: f64 = (0..n_terms).map(|n| sched.step(n)).sum();
        let w = sched.exponent;
        let lower = sched.d0 * (((1.0 + n_terms as f64).powf(1.0 - w) - 1.0) / (1.0 - w));
        assert!(partial >= lower - 1e-9);
        // Square-summable: with omega > 0.5 the tail sum of squares is
        // bounded by d0^2 (1 + 1/(2w - 1)).
        let sq: f64 = (0..n_terms).map(|n| sched.step(n).powi(2)).sum();
        let upper = sched.d0 * sched.d0 * (1.0 + 1.0 / (2.0 * w - 1.0));
        assert!(sq <= upper + 1e-9, "{sq} > {upper}");
    }

    #[test]
    fn schedule_rejects_bad_exponents() {
        assert!(StepSizeSchedule::new(0.5, 0.5).is_err());
        assert!(StepSizeSchedule::new(0.5, 1.01).is_err());
        assert!(StepSizeSchedule::new(0.0, 0.6).is_err());
        assert!(StepSizeSchedule::new(0.5, 1.0).is_ok());
    }

    #[test]
    fn first_step_is_d0() {
        let sched = StepSizeSchedule::new(0.5, 0.6).unwrap();
        assert_eq!(sched.step(0), 0.5);
    }

    #[test]
    fn exploration_decays_to_floor_and_not_below() {
        let eps = ExplorationSchedule::new(0.5, 0.05, Some(1000)).unwrap();
        assert_eq!(eps.at(0), 0.5);
        assert!((eps.at(500) - 0.275).abs() < 1e-12);
        assert!((eps.at(1000) - 0.05).abs() < 1e-12);
        assert!((eps.at(100_000) - 0.05).abs() < 1e-12);
        assert!(ExplorationSchedule::new(0.5, 0.0, None).is_err());
    }

    #[test]
    fn ring_means_trail() {
        let mut ring = Ring::new(4);
        for x in [1.0, 2.0, 3.0, 4.0] {
            ring.push(x);
        }
        assert!((ring.mean() - 2.5).abs() < 1e-12);
        ring.push(5.0);
        assert!((ring.mean() - 3.5).abs() < 1e-12);
    }
}
