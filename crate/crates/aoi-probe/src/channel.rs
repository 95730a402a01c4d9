//! Fading channel models: i.i.d. state draws or finite-state Markov
//! evolution, tau-step prediction, and packet-success sampling.
//!
//! Channel states are kept sorted by descending success probability
//! internally, so "sample iff p(C) is high enough" policies are prefix
//! checks over the internal order. The externally supplied 1-based state
//! indices are preserved on [`ChannelState::index`] and used in all I/O.
//!
//! # Channel block schema
//!
//! ```toml
//! [channel]
//! success_probs = [0.9, 0.7, 0.5, 0.3, 0.1]
//! occurrence_probs = [0.2, 0.2, 0.2, 0.2, 0.2]  # i.i.d.: P(C = C_j) = q_j
//! # transition_matrix = [[0.9, 0.1], [0.1, 0.9]] # Markov: row-stochastic q_{i,j}
//! ```
//!
//! Exactly one of `occurrence_probs` / `transition_matrix` must be present.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const PROB_SUM_TOL: f64 = 1e-12;

/// One fading state: its external 1-based index and its packet success
/// probability p_j.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelState {
    /// External index as given at construction, preserved in I/O.
    pub index: usize,
    /// Probability that a packet transmitted in this state is delivered.
    pub success_prob: f64,
}

impl ChannelState {
    /// Draws the delivery indicator r, 1 with probability p_j.
    pub fn sample_success(&self, rng: &mut impl Rng) -> bool {
        rng.gen_bool(self.success_prob)
    }
}

fn check_success_probs(success_probs: &[f64]) -> Result<()> {
    if success_probs.is_empty() {
        return Err(Error::InvalidConfig(
            "channel needs at least one state".into(),
        ));
    }
    for (i, &p) in success_probs.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidConfig(format!(
                "success_probs[{i}] = {p} outside [0, 1]"
            )));
        }
    }
    Ok(())
}

fn check_prob_vector(probs: &[f64], what: &str) -> Result<()> {
    for (i, &q) in probs.iter().enumerate() {
        if q.is_nan() || q < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "{what}[{i}] = {q} is negative"
            )));
        }
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::InvalidConfig(format!(
            "{what} sums to {sum}, expected 1 within {PROB_SUM_TOL:.0e}"
        )));
    }
    Ok(())
}

/// Sorted state list plus the permutation from external input order to the
/// internal descending-p order.
fn sorted_states(success_probs: &[f64]) -> (Vec<ChannelState>, Vec<usize>) {
    let mut order: Vec<usize> = (0..success_probs.len()).collect();
    order.sort_by(|&a, &b| success_probs[b].partial_cmp(&success_probs[a]).unwrap());
    let states = order
        .iter()
        .map(|&ext| ChannelState {
            index: ext + 1,
            success_prob: success_probs[ext],
        })
        .collect();
    (states, order)
}

fn draw_from(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (j, &q) in probs.iter().enumerate() {
        acc += q;
        if u < acc {
            return j;
        }
    }
    probs.len() - 1
}

/// Channel whose state is drawn i.i.d. every slot: P(C = C_j) = q_j.
#[derive(Debug, Clone)]
pub struct IidChannel {
    states: Vec<ChannelState>,
    occurrence: Vec<f64>,
}

impl IidChannel {
    pub fn new(success_probs: &[f64], occurrence_probs: &[f64]) -> Result<Self> {
        check_success_probs(success_probs)?;
        if occurrence_probs.len() != success_probs.len() {
            return Err(Error::InvalidConfig(format!(
                "occurrence_probs has {} entries for {} channel states",
                occurrence_probs.len(),
                success_probs.len()
            )));
        }
        check_prob_vector(occurrence_probs, "occurrence_probs")?;
        let (states, order) = sorted_states(success_probs);
        let occurrence = order.iter().map(|&ext| occurrence_probs[ext]).collect();
        Ok(Self { states, occurrence })
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    /// States in internal (descending success probability) order.
    pub fn states(&self) -> &[ChannelState] {
        &self.states
    }

    pub fn state(&self, internal: usize) -> &ChannelState {
        &self.states[internal]
    }

    /// Occurrence probabilities aligned with [`Self::states`].
    pub fn occurrence_probs(&self) -> &[f64] {
        &self.occurrence
    }

    /// Draws a state per q; returns the internal index.
    pub fn draw_state(&self, rng: &mut impl Rng) -> usize {
        draw_from(&self.occurrence, rng)
    }
}

/// Channel evolving as a finite-state Markov chain with one-step
/// transition matrix Q (row-stochastic, entry q_{i,j}).
#[derive(Debug, Clone)]
pub struct MarkovChannel {
    states: Vec<ChannelState>,
    /// Row-major m*m one-step matrix in internal state order.
    transition: Vec<f64>,
}

impl MarkovChannel {
    pub fn new(success_probs: &[f64], transition_matrix: &[Vec<f64>]) -> Result<Self> {
        check_success_probs(success_probs)?;
        let m = success_probs.len();
        if transition_matrix.len() != m {
            return Err(Error::InvalidConfig(format!(
                "transition_matrix has {} rows for {} channel states",
                transition_matrix.len(),
                m
            )));
        }
        for (i, row) in transition_matrix.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidConfig(format!(
                    "transition_matrix row {i} has {} entries, expected {m}",
                    row.len()
                )));
            }
            check_prob_vector(row, &format!("transition_matrix row {i}"))?;
        }
        let (states, order) = sorted_states(success_probs);
        // Permute rows and columns into internal order.
        let mut transition = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                transition[i * m + j] = transition_matrix[order[i]][order[j]];
            }
        }
        Ok(Self { states, transition })
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[ChannelState] {
        &self.states
    }

    pub fn state(&self, internal: usize) -> &ChannelState {
        &self.states[internal]
    }

    /// One-step transition row out of `from` (internal index).
    pub fn row(&self, from: usize) -> &[f64] {
        let m = self.states.len();
        &self.transition[from * m..(from + 1) * m]
    }

    /// Draws the next state from the current one's transition row.
    pub fn draw_next(&self, from: usize, rng: &mut impl Rng) -> usize {
        draw_from(self.row(from), rng)
    }

    /// Row `from` of Q^tau: the distribution of the channel state tau slots
    /// after it was last observed in `from`. Computed by repeated squaring.
    pub fn tau_step_distribution(&self, from: usize, tau: u32) -> Vec<f64> {
        assert!(tau >= 1, "tau must be at least 1");
        let power = self.matrix_power(tau);
        let m = self.states.len();
        power[from * m..(from + 1) * m].to_vec()
    }

    /// Memoizes Q^tau for every tau in 1..=max_tau, for solvers that query
    /// each horizon every backup.
    pub fn tau_table(&self, max_tau: u32) -> TauTable {
        assert!(max_tau >= 1);
        let m = self.states.len();
        let mut rows = Vec::with_capacity(max_tau as usize);
        let mut current = self.transition.clone();
        rows.push(current.clone());
        for _ in 1..max_tau {
            current = mat_mul(&current, &self.transition, m);
            rows.push(current.clone());
        }
        TauTable { m, powers: rows }
    }

    fn matrix_power(&self, tau: u32) -> Vec<f64> {
        let m = self.states.len();
        let mut result = identity(m);
        let mut base = self.transition.clone();
        let mut exp = tau;
        while exp > 0 {
            if exp & 1 == 1 {
                result = mat_mul(&result, &base, m);
            }
            exp >>= 1;
            if exp > 0 {
                base = mat_mul(&base, &base, m);
            }
        }
        result
    }
}

fn identity(m: usize) -> Vec<f64> {
    let mut id = vec![0.0; m * m];
    for i in 0..m {
        id[i * m + i] = 1.0;
    }
    id
}

fn mat_mul(a: &[f64], b: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for k in 0..m {
            let aik = a[i * m + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..m {
                out[i * m + j] += aik * b[k * m + j];
            }
        }
    }
    out
}

/// Precomputed tau-step distributions for tau in 1..=max.
#[derive(Debug, Clone)]
pub struct TauTable {
    m: usize,
    powers: Vec<Vec<f64>>,
}

impl TauTable {
    pub fn max_tau(&self) -> u32 {
        self.powers.len() as u32
    }

    /// Distribution row of Q^tau out of `from`.
    pub fn distribution(&self, tau: u32, from: usize) -> &[f64] {
        let power = &self.powers[(tau - 1) as usize];
        &power[from * self.m..(from + 1) * self.m]
    }
}

/// Channel block of the experiment config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelSpec {
    /// Packet success probability per state, external order.
    pub success_probs: Vec<f64>,
    /// i.i.d. occurrence probabilities q_j. Mutually exclusive with
    /// `transition_matrix`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occurrence_probs: Option<Vec<f64>>,
    /// Markov one-step transition matrix q_{i,j}. Mutually exclusive with
    /// `occurrence_probs`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition_matrix: Option<Vec<Vec<f64>>>,
}

impl ChannelSpec {
    pub fn iid(success_probs: Vec<f64>, occurrence_probs: Vec<f64>) -> Self {
        Self {
            success_probs,
            occurrence_probs: Some(occurrence_probs),
            transition_matrix: None,
        }
    }

    pub fn markov(success_probs: Vec<f64>, transition_matrix: Vec<Vec<f64>>) -> Self {
        Self {
            success_probs,
            occurrence_probs: None,
            transition_matrix: Some(transition_matrix),
        }
    }

    pub fn is_markov(&self) -> bool {
        self.transition_matrix.is_some()
    }

    pub fn check(&self) -> Result<()> {
        match (&self.occurrence_probs, &self.transition_matrix) {
            (Some(_), Some(_)) => Err(Error::InvalidConfig(
                "channel block has both occurrence_probs and transition_matrix".into(),
            )),
            (None, None) => Err(Error::InvalidConfig(
                "channel block needs occurrence_probs or transition_matrix".into(),
            )),
            (Some(q), None) => IidChannel::new(&self.success_probs, q).map(|_| ()),
            (None, Some(t)) => MarkovChannel::new(&self.success_probs, t).map(|_| ()),
        }
    }

    pub fn build_iid(&self) -> Result<IidChannel> {
        let q = self.occurrence_probs.as_ref().ok_or_else(|| {
            Error::InvalidConfig("channel block is Markov, expected i.i.d.".into())
        })?;
        IidChannel::new(&self.success_probs, q)
    }

    pub fn build_markov(&self) -> Result<MarkovChannel> {
        let t = self.transition_matrix.as_ref().ok_or_else(|| {
            Error::InvalidConfig("channel block is i.i.d., expected Markov".into())
        })?;
        MarkovChannel::new(&self.success_probs, t)
    }
}
