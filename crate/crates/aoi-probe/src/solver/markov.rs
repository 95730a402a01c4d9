//! Value iteration for the Markovian channel + Markovian harvesting model
//! (single process).
//!
//! States are (E, T, tau, C_prev, H): buffer level, age, slots since the
//! last probe (tau <= T), the channel state seen at that probe, and the
//! harvesting state. Probing mixes the intermediate values over the
//! tau-step channel prediction q^(tau)(. | C_prev); afterwards tau resets
//! to 1 and C_prev becomes the probed state. While non-harvesting (H_2)
//! the arrival count is 0.
//!
//! tau is capped at T_max with a saturating increment, mirroring the age
//! cap; beyond the chain's mixing time the prediction rows are numerically
//! stationary, and the solution reports the residual row movement at the
//! cap as [`SolutionM::tau_cap_mixing_gap`].

use crate::channel::{MarkovChannel, TauTable};
use crate::config::SystemConfig;
use crate::energy::{buffer_add, ArrivalDistribution, HarvestChain, HarvestState};
use crate::{Error, Result};

use super::{record_and_check, truncation_affected, SolveOptions};

/// Rectangular (E, T, tau, C_prev, H) grid; cells with tau > T are dead
/// and never read or written.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MarkovGrid {
    pub buffer: u32,
    pub age_cap: u32,
    /// tau saturates here; equal to the age cap.
    pub tau_cap: u32,
    pub num_channel_states: usize,
}

impl MarkovGrid {
    pub fn new(cfg: &SystemConfig, m: usize) -> Self {
        Self {
            buffer: cfg.buffer_capacity,
            age_cap: cfg.age_cap,
            tau_cap: cfg.age_cap,
            num_channel_states: m,
        }
    }

    pub fn len(&self) -> usize {
        (self.buffer as usize + 1)
            * self.age_cap as usize
            * self.tau_cap as usize
            * self.num_channel_states
            * 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn idx(&self, e: u32, t: u32, tau: u32, c_prev: usize, h: HarvestState) -> usize {
        debug_assert!(
            tau >= 1 && tau <= t.min(self.tau_cap),
            "tau = {tau}, t = {t}"
        );
        ((((e as usize * self.age_cap as usize) + (t - 1) as usize) * self.tau_cap as usize
            + (tau - 1) as usize)
            * self.num_channel_states
            + c_prev)
            * 2
            + h.idx()
    }

    /// Iterates valid cells: tau <= min(T, tau_cap).
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, u32, usize, HarvestState)> + '_ {
        let m = self.num_channel_states;
        (0..=self.buffer).flat_map(move |e| {
            (1..=self.age_cap).flat_map(move |t| {
                (1..=t.min(self.tau_cap)).flat_map(move |tau| {
                    (0..m).flat_map(move |c| {
                        HarvestState::ALL
                            .into_iter()
                            .map(move |h| (e, t, tau, c, h))
                    })
                })
            })
        })
    }
}

/// Converged tables. W and V follow the paper's shapes: W lives on
/// intermediate states (E, T, C, H) and V on full states with a probe
/// branch.
#[derive(Debug, Clone)]
pub struct ValueTablesM {
    pub grid: MarkovGrid,
    pub probe_energy_min: u32,
    j: Vec<f64>,
    w: Vec<f64>,
    v: Vec<f64>,
}

impl ValueTablesM {
    #[inline]
    fn widx(&self, e: u32, t: u32, c: usize, h: HarvestState) -> usize {
        debug_assert!(e >= self.probe_energy_min);
        (((e - self.probe_energy_min) as usize * self.grid.age_cap as usize + (t - 1) as usize)
            * self.grid.num_channel_states
            + c)
            * 2
            + h.idx()
    }

    pub fn j(&self, e: u32, t: u32, tau: u32, c_prev: usize, h: HarvestState) -> f64 {
        self.j[self.grid.idx(e, t, tau, c_prev, h)]
    }

    pub fn w(&self, e: u32, t: u32, c: usize, h: HarvestState) -> f64 {
        self.w[self.widx(e, t, c, h)]
    }

    /// Expected probe value at a full state with E >= E_p + E_s.
    pub fn v(&self, e: u32, t: u32, tau: u32, c_prev: usize, h: HarvestState) -> f64 {
        self.v[self.grid.idx(e, t, tau, c_prev, h)]
    }
}

/// Greedy two-stage policy for the Markovian model.
#[derive(Debug, Clone)]
pub struct PolicyM {
    grid: MarkovGrid,
    probe_energy_min: u32,
    probe: Vec<bool>,
    sample: Vec<bool>,
}

impl PolicyM {
    pub fn probe(&self, e: u32, t: u32, tau: u32, c_prev: usize, h: HarvestState) -> bool {
        self.probe[self.grid.idx(e, t, tau, c_prev, h)]
    }

    pub fn sample(&self, e: u32, t: u32, c: usize, h: HarvestState) -> bool {
        debug_assert!(e >= self.probe_energy_min);
        let idx = (((e - self.probe_energy_min) as usize * self.grid.age_cap as usize
            + (t - 1) as usize)
            * self.grid.num_channel_states
            + c)
            * 2
            + h.idx();
        self.sample[idx]
    }

    pub fn probe_energy_min(&self) -> u32 {
        self.probe_energy_min
    }
}

#[derive(Debug, Clone)]
pub struct SolutionM {
    pub tables: ValueTablesM,
    pub policy: PolicyM,
    pub error_trace: Vec<f64>,
    pub iterations: usize,
    /// Max L-inf movement of the prediction rows between tau_cap and
    /// tau_cap + 1; near zero once the chain has mixed, which is what
    /// makes the tau cap benign.
    pub tau_cap_mixing_gap: f64,
}

/// Joint expectation over arrivals (gated by H) and the next harvesting
/// state of J at (min(e_base + A, B), t, tau, c, H_next).
#[inline]
#[allow(clippy::too_many_arguments)]
fn expect_j(
    j: &[f64],
    grid: &MarkovGrid,
    energy: &ArrivalDistribution,
    chain: &HarvestChain,
    h: HarvestState,
    e_base: u32,
    t: u32,
    tau: u32,
    c: usize,
) -> f64 {
    let mut total = 0.0;
    for (h_next, ph) in chain.transition_probs(h) {
        if ph == 0.0 {
            continue;
        }
        let inner: f64 = match h {
            HarvestState::Harvesting => energy
                .outcomes()
                .map(|(a, pa)| {
                    pa * j[grid.idx(buffer_add(e_base, a, grid.buffer), t, tau, c, h_next)]
                })
                .sum(),
            // Non-harvesting: the arrival count is 0.
            HarvestState::NonHarvesting => j[grid.idx(e_base, t, tau, c, h_next)],
        };
        total += ph * inner;
    }
    total
}

struct BackupOut {
    j: Vec<f64>,
    w: Vec<f64>,
    v: Vec<f64>,
}

fn backup_pass(
    j_prev: &[f64],
    cfg: &SystemConfig,
    channel: &MarkovChannel,
    energy: &ArrivalDistribution,
    chain: &HarvestChain,
    grid: &MarkovGrid,
    tau_table: &TauTable,
) -> BackupOut {
    let alpha = cfg.discount;
    let e_min = cfg.probe_feasible_energy();
    let m = grid.num_channel_states;
    let w_len = (grid.buffer.saturating_sub(e_min) as usize + 1) * grid.age_cap as usize * m * 2;
    let mut j = vec![0.0; grid.len()];
    let mut w = vec![0.0; w_len];
    let mut v = vec![0.0; grid.len()];

    // Intermediate stage first: W depends only on the previous J.
    for e in e_min..=grid.buffer {
        let e_probed = e - cfg.probe_cost;
        let e_sampled = e - cfg.probe_cost - cfg.sample_cost;
        for t in 1..=grid.age_cap {
            let t_next = cfg.age_successor(t);
            for c in 0..m {
                let p = channel.state(c).success_prob;
                for h in HarvestState::ALL {
                    let no_sample = t as f64
                        + alpha * expect_j(j_prev, grid, energy, chain, h, e_probed, t_next, 1, c);
                    let succ = expect_j(j_prev, grid, energy, chain, h, e_sampled, 1, 1, c);
                    let fail = expect_j(j_prev, grid, energy, chain, h, e_sampled, t_next, 1, c);
                    let sample = t as f64 * (1.0 - p) + alpha * (p * succ + (1.0 - p) * fail);
                    let widx =
                        (((e - e_min) as usize * grid.age_cap as usize + (t - 1) as usize) * m + c)
                            * 2
                            + h.idx();
                    w[widx] = sample.min(no_sample);
                }
            }
        }
    }

    for (e, t, tau, c_prev, h) in grid.iter() {
        let t_next = cfg.age_successor(t);
        let tau_next = (tau + 1).min(grid.tau_cap);
        let idle = t as f64
            + alpha * expect_j(j_prev, grid, energy, chain, h, e, t_next, tau_next, c_prev);
        let idx = grid.idx(e, t, tau, c_prev, h);
        if e < e_min {
            j[idx] = idle;
            continue;
        }
        let weights = tau_table.distribution(tau, c_prev);
        let mut probe_value = 0.0;
        for (c, weight) in weights.iter().enumerate() {
            let widx = (((e - e_min) as usize * grid.age_cap as usize + (t - 1) as usize) * m + c)
                * 2
                + h.idx();
            probe_value += weight * w[widx];
        }
        v[idx] = probe_value;
        j[idx] = idle.min(probe_value);
    }

    BackupOut { j, w, v }
}

/// One synchronous Bellman backup over the Markovian grid.
pub fn bellman_backup_markov(
    j_prev: &[f64],
    cfg: &SystemConfig,
    channel: &MarkovChannel,
    energy: &ArrivalDistribution,
    chain: &HarvestChain,
) -> ValueTablesM {
    let grid = MarkovGrid::new(cfg, channel.num_states());
    debug_assert_eq!(j_prev.len(), grid.len());
    let tau_table = channel.tau_table(grid.tau_cap);
    let out = backup_pass(j_prev, cfg, channel, energy, chain, &grid, &tau_table);
    ValueTablesM {
        probe_energy_min: cfg.probe_feasible_energy(),
        j: out.j,
        w: out.w,
        v: out.v,
        grid,
    }
}

/// Value iteration for the Markovian model with greedy policy extraction.
pub fn value_iteration_markov(
    cfg: &SystemConfig,
    channel: &MarkovChannel,
    energy: &ArrivalDistribution,
    chain: &HarvestChain,
    opts: &SolveOptions,
) -> Result<SolutionM> {
    cfg.clone().validate()?;
    if cfg.num_processes != 1 {
        return Err(Error::InvalidConfig(format!(
            "Markovian solver got num_processes = {}",
            cfg.num_processes
        )));
    }
    let grid = MarkovGrid::new(cfg, channel.num_states());
    let tau_table = channel.tau_table(grid.tau_cap + 1);

    let mut tau_cap_mixing_gap: f64 = 0.0;
    for c_prev in 0..channel.num_states() {
        let at_cap = tau_table.distribution(grid.tau_cap, c_prev);
        let past_cap = tau_table.distribution(grid.tau_cap + 1, c_prev);
        for (a, b) in at_cap.iter().zip(past_cap) {
            tau_cap_mixing_gap = tau_cap_mixing_gap.max((a - b).abs());
        }
    }

    let mut j = vec![0.0; grid.len()];
    let mut trace = Vec::new();
    loop {
        let out = backup_pass(&j, cfg, channel, energy, chain, &grid, &tau_table);
        let delta = super::sup_norm_diff(&j, &out.j);
        j = out.j;
        if record_and_check(&mut trace, delta, cfg.discount, opts)? {
            let out = backup_pass(&j, cfg, channel, energy, chain, &grid, &tau_table);
            let tables = ValueTablesM {
                probe_energy_min: cfg.probe_feasible_energy(),
                j: out.j,
                w: out.w,
                v: out.v,
                grid: grid.clone(),
            };
            let policy = extract_policy(&tables, cfg, channel, energy, chain, &tau_table);
            let iterations = trace.len();
            return Ok(SolutionM {
                tables,
                policy,
                error_trace: trace,
                iterations,
                tau_cap_mixing_gap,
            });
        }
    }
}

fn extract_policy(
    tables: &ValueTablesM,
    cfg: &SystemConfig,
    channel: &MarkovChannel,
    energy: &ArrivalDistribution,
    chain: &HarvestChain,
    _tau_table: &TauTable,
) -> PolicyM {
    let grid = &tables.grid;
    let alpha = cfg.discount;
    let e_min = tables.probe_energy_min;
    let m = grid.num_channel_states;
    let mut probe = vec![false; grid.len()];
    let mut sample = vec![false; tables.w.len()];

    for (e, t, tau, c_prev, h) in grid.iter() {
        if e < e_min {
            continue;
        }
        let t_next = cfg.age_successor(t);
        let tau_next = (tau + 1).min(grid.tau_cap);
        let idle = t as f64
            + alpha
                * expect_j(
                    &tables.j, grid, energy, chain, h, e, t_next, tau_next, c_prev,
                );
        probe[grid.idx(e, t, tau, c_prev, h)] = tables.v(e, t, tau, c_prev, h) < idle;
    }

    for e in e_min..=grid.buffer {
        let e_probed = e - cfg.probe_cost;
        let e_sampled = e - cfg.probe_cost - cfg.sample_cost;
        for t in 1..=grid.age_cap {
            let t_next = cfg.age_successor(t);
            for c in 0..m {
                let p = channel.state(c).success_prob;
                for h in HarvestState::ALL {
                    let no_sample = t as f64
                        + alpha
                            * expect_j(&tables.j, grid, energy, chain, h, e_probed, t_next, 1, c);
                    let succ = expect_j(&tables.j, grid, energy, chain, h, e_sampled, 1, 1, c);
                    let fail = expect_j(&tables.j, grid, energy, chain, h, e_sampled, t_next, 1, c);
                    let sampling = t as f64 * (1.0 - p) + alpha * (p * succ + (1.0 - p) * fail);
                    sample[tables.widx(e, t, c, h)] = sampling < no_sample;
                }
            }
        }
    }

    PolicyM {
        grid: grid.clone(),
        probe_energy_min: e_min,
        probe,
        sample,
    }
}

/// Threshold surfaces of the Markovian policy. All three representations
/// are conjecture-backed, so violations are carried in the report instead
/// of raised as errors.
#[derive(Debug, Clone, Default)]
pub struct ThresholdReportM {
    /// T_th(E, tau, C_prev, H): least valid age (>= tau) at which probing
    /// is optimal.
    pub probe_age_threshold: Vec<(u32, u32, usize, HarvestState, Option<u32>)>,
    /// (E, tau, C_prev, H, T) cells where the probe set is not
    /// upward-closed in T.
    pub probe_violations: Vec<(u32, u32, usize, HarvestState, u32)>,
    /// p_th(E, T, H): least probed success probability at which sampling
    /// is optimal.
    pub sample_prob_threshold: Vec<(u32, u32, HarvestState, Option<f64>)>,
    /// (E, T, H, internal channel index) cells breaking upward-closedness
    /// in p(C).
    pub sample_violations: Vec<(u32, u32, HarvestState, usize)>,
    /// Post-probe representation T_th(E, C, H): least age at which
    /// sampling is optimal at the probed state C.
    pub post_probe_age_threshold: Vec<(u32, usize, HarvestState, Option<u32>)>,
    /// (E, C, H, T) cells where sampling is not upward-closed in T.
    pub post_probe_violations: Vec<(u32, usize, HarvestState, u32)>,
    /// Cells where J fails to be non-decreasing in T (value conjecture).
    pub value_age_violations: Vec<(u32, u32, u32, usize, HarvestState)>,
    /// Cells where W fails to be non-increasing in p(C) (value conjecture).
    pub w_channel_violations: Vec<(u32, u32, usize, HarvestState)>,
    pub age_cap: u32,
}

impl ThresholdReportM {
    pub fn truncation_affected(&self, age: u32) -> bool {
        truncation_affected(age, self.age_cap)
    }

    pub fn total_violations(&self) -> usize {
        self.probe_violations.len()
            + self.sample_violations.len()
            + self.post_probe_violations.len()
            + self.value_age_violations.len()
            + self.w_channel_violations.len()
    }
}

/// Reads all three threshold surfaces off a converged Markovian policy and
/// runs the value-shape diagnostics.
pub fn extract_thresholds_markov(
    tables: &ValueTablesM,
    policy: &PolicyM,
    channel: &MarkovChannel,
) -> ThresholdReportM {
    let grid = &tables.grid;
    let e_min = tables.probe_energy_min;
    let m = grid.num_channel_states;
    let mut report = ThresholdReportM {
        age_cap: grid.age_cap,
        ..Default::default()
    };

    for e in e_min..=grid.buffer {
        for tau in 1..=grid.tau_cap {
            for c_prev in 0..m {
                for h in HarvestState::ALL {
                    let mut first = None;
                    for t in tau..=grid.age_cap {
                        if policy.probe(e, t, tau, c_prev, h) {
                            if first.is_none() {
                                first = Some(t);
                            }
                        } else if first.is_some() {
                            report.probe_violations.push((e, tau, c_prev, h, t));
                        }
                    }
                    report.probe_age_threshold.push((e, tau, c_prev, h, first));
                }
            }
        }
    }

    for e in e_min..=grid.buffer {
        for t in 1..=grid.age_cap {
            for h in HarvestState::ALL {
                let mut threshold = None;
                for c in 0..m {
                    if policy.sample(e, t, c, h) {
                        threshold = Some(channel.state(c).success_prob);
                    }
                }
                if let Some(p_min) = threshold {
                    for c in 0..m {
                        if channel.state(c).success_prob > p_min && !policy.sample(e, t, c, h) {
                            report.sample_violations.push((e, t, h, c));
                        }
                    }
                }
                report.sample_prob_threshold.push((e, t, h, threshold));
            }
        }
    }

    for e in e_min..=grid.buffer {
        for c in 0..m {
            for h in HarvestState::ALL {
                let mut first = None;
                for t in 1..=grid.age_cap {
                    if policy.sample(e, t, c, h) {
                        if first.is_none() {
                            first = Some(t);
                        }
                    } else if first.is_some() {
                        report.post_probe_violations.push((e, c, h, t));
                    }
                }
                report.post_probe_age_threshold.push((e, c, h, first));
            }
        }
    }

    // Value-shape diagnostics (conjectured): J non-decreasing in T along
    // valid cells, W non-increasing in p(C).
    for (e, t, tau, c_prev, h) in grid.iter() {
        if t < grid.age_cap && tau <= t {
            let here = tables.j(e, t, tau, c_prev, h);
            let above = tables.j(e, t + 1, tau, c_prev, h);
            if above < here - 1e-10 {
                report.value_age_violations.push((e, t, tau, c_prev, h));
            }
        }
    }
    for e in e_min..=grid.buffer {
        for t in 1..=grid.age_cap {
            for h in HarvestState::ALL {
                for c in 1..m {
                    // Internal order is descending p, so W must be
                    // non-decreasing along c.
                    if tables.w(e, t, c, h) < tables.w(e, t, c - 1, h) - 1e-10 {
                        report.w_channel_violations.push((e, t, c, h));
                    }
                }
            }
        }
    }

    report
}
