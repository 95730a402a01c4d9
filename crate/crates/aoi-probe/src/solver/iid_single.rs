//! Value iteration for the single-process i.i.d. model, its no-probing
//! variant, and threshold extraction from the converged policy.
//!
//! States are pairs (E, T): buffer level and slots since the last
//! delivered sample. Probing reveals the channel state C, moving the
//! system to the intermediate state (E, T, C) where the sampling decision
//! is taken. The probe branch exists only for E >= E_p + E_s, so the
//! intermediate tables cover exactly that energy range.

use crate::channel::IidChannel;
use crate::config::SystemConfig;
use crate::energy::{buffer_add, ArrivalDistribution};
use crate::{Error, Result};

use super::{record_and_check, truncation_affected, SolveOptions};

/// Dense (E, T) grid: E in 0..=B, T in 1..=T_max, T fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StateGrid {
    pub buffer: u32,
    pub age_cap: u32,
}

impl StateGrid {
    pub fn new(cfg: &SystemConfig) -> Self {
        Self {
            buffer: cfg.buffer_capacity,
            age_cap: cfg.age_cap,
        }
    }

    pub fn len(&self) -> usize {
        (self.buffer as usize + 1) * self.age_cap as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn idx(&self, e: u32, t: u32) -> usize {
        debug_assert!(e <= self.buffer && (1..=self.age_cap).contains(&t));
        e as usize * self.age_cap as usize + (t - 1) as usize
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let ages = 1..=self.age_cap;
        (0..=self.buffer).flat_map(move |e| ages.clone().map(move |t| (e, t)))
    }
}

/// Converged value tables: J over states, W over intermediate states,
/// V(E,T) = sum_j q_j W(E,T,C_j).
#[derive(Debug, Clone)]
pub struct ValueTables {
    pub grid: StateGrid,
    /// Lowest energy with a probe branch (E_p + E_s).
    pub probe_energy_min: u32,
    /// Number of channel states.
    pub num_channel_states: usize,
    j: Vec<f64>,
    w: Vec<f64>,
    v: Vec<f64>,
}

impl ValueTables {
    fn zeros(grid: StateGrid, probe_energy_min: u32, m: usize) -> Self {
        let inter = Self::inter_len(&grid, probe_energy_min, m);
        Self {
            grid,
            probe_energy_min,
            num_channel_states: m,
            j: vec![0.0; grid.len()],
            w: vec![0.0; inter],
            v: vec![0.0; inter / m],
        }
    }

    fn inter_len(grid: &StateGrid, e_min: u32, m: usize) -> usize {
        (grid.buffer.saturating_sub(e_min) as usize + 1) * grid.age_cap as usize * m
    }

    #[inline]
    fn vidx(&self, e: u32, t: u32) -> usize {
        debug_assert!(e >= self.probe_energy_min);
        (e - self.probe_energy_min) as usize * self.grid.age_cap as usize + (t - 1) as usize
    }

    #[inline]
    fn widx(&self, e: u32, t: u32, c: usize) -> usize {
        self.vidx(e, t) * self.num_channel_states + c
    }

    pub fn j(&self, e: u32, t: u32) -> f64 {
        self.j[self.grid.idx(e, t)]
    }

    /// W at intermediate state (E, T, C); E must be >= E_p + E_s.
    pub fn w(&self, e: u32, t: u32, c: usize) -> f64 {
        self.w[self.widx(e, t, c)]
    }

    /// Expected cost of probing from (E, T); E must be >= E_p + E_s.
    pub fn v(&self, e: u32, t: u32) -> f64 {
        self.v[self.vidx(e, t)]
    }

    pub fn j_slice(&self) -> &[f64] {
        &self.j
    }

    /// States with a probe branch, i.e. E >= E_p + E_s.
    pub fn intermediate_states(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.grid
            .iter()
            .filter(move |&(e, _)| e >= self.probe_energy_min)
    }
}

/// Greedy two-stage policy: probe decision per state, sample decision per
/// intermediate state.
#[derive(Debug, Clone)]
pub struct Policy {
    grid: StateGrid,
    probe_energy_min: u32,
    num_channel_states: usize,
    probe: Vec<bool>,
    sample: Vec<bool>,
}

impl Policy {
    pub fn probe(&self, e: u32, t: u32) -> bool {
        self.probe[self.grid.idx(e, t)]
    }

    /// Sampling decision at intermediate state (E, T, C); defined only
    /// where probing is feasible.
    pub fn sample(&self, e: u32, t: u32, c: usize) -> bool {
        debug_assert!(e >= self.probe_energy_min);
        let idx = ((e - self.probe_energy_min) as usize * self.grid.age_cap as usize
            + (t - 1) as usize)
            * self.num_channel_states
            + c;
        self.sample[idx]
    }

    pub fn grid(&self) -> StateGrid {
        self.grid
    }

    pub fn probe_energy_min(&self) -> u32 {
        self.probe_energy_min
    }
}

/// One value-iteration solve: converged tables, greedy policy, and the
/// sup-norm error trace.
#[derive(Debug, Clone)]
pub struct Solution {
    pub tables: ValueTables,
    pub policy: Policy,
    pub error_trace: Vec<f64>,
    pub iterations: usize,
}

/// Exact expectation over arrivals of J at (min(e_base + A, B), t_next).
#[inline]
fn expect_j(
    j: &[f64],
    grid: &StateGrid,
    energy: &ArrivalDistribution,
    e_base: u32,
    t_next: u32,
) -> f64 {
    energy
        .outcomes()
        .map(|(a, p)| p * j[grid.idx(buffer_add(e_base, a, grid.buffer), t_next)])
        .sum()
}

/// Result of one Bellman backup sweep.
pub struct Backup {
    pub tables: ValueTables,
}

/// One synchronous Bellman backup of the two-stage equations.
///
/// For E >= E_p + E_s the state value is the min of the no-probe branch
/// and the probe branch V'(E, T) = sum_j q_j W'(E, T, C_j), where each
/// W' minimizes over sampling or idling at the revealed channel state.
/// Below that energy only the no-probe branch exists. Ages advance with
/// the saturating successor min(T + 1, T_max).
pub fn bellman_backup(
    j_prev: &[f64],
    cfg: &SystemConfig,
    channel: &IidChannel,
    energy: &ArrivalDistribution,
) -> Backup {
    let grid = StateGrid::new(cfg);
    debug_assert_eq!(j_prev.len(), grid.len());
    let e_min = cfg.probe_feasible_energy();
    let m = channel.num_states();
    let alpha = cfg.discount;
    let mut next = ValueTables::zeros(grid, e_min, m);

    for (e, t) in grid.iter() {
        let t_next = cfg.age_successor(t);
        let idle = t as f64 + alpha * expect_j(j_prev, &grid, energy, e, t_next);
        if e < e_min {
            next.j[grid.idx(e, t)] = idle;
            continue;
        }

        // Intermediate stage: channel state revealed, probe cost committed.
        let no_sample =
            t as f64 + alpha * expect_j(j_prev, &grid, energy, e - cfg.probe_cost, t_next);
        let e_after_sample = e - cfg.probe_cost - cfg.sample_cost;
        let on_success = expect_j(j_prev, &grid, energy, e_after_sample, 1);
        let on_failure = expect_j(j_prev, &grid, energy, e_after_sample, t_next);
        let mut v = 0.0;
        for (c, state) in channel.states().iter().enumerate() {
            let p = state.success_prob;
            let sample = t as f64 * (1.0 - p) + alpha * (p * on_success + (1.0 - p) * on_failure);
            let w = sample.min(no_sample);
            let widx = next.widx(e, t, c);
            next.w[widx] = w;
            v += channel.occurrence_probs()[c] * w;
        }
        let vidx = next.vidx(e, t);
        next.v[vidx] = v;
        next.j[grid.idx(e, t)] = idle.min(v);
    }
    Backup { tables: next }
}

/// Iterates [`bellman_backup`] from the all-zero table until the sup-norm
/// change drops below `opts.tol`, then extracts the greedy policy.
///
/// Ties break toward the energy-conserving action: no-probe over probe,
/// no-sample over sample.
pub fn value_iteration(
    cfg: &SystemConfig,
    channel: &IidChannel,
    energy: &ArrivalDistribution,
    opts: &SolveOptions,
) -> Result<Solution> {
    cfg.clone().validate()?;
    if cfg.num_processes != 1 {
        return Err(Error::InvalidConfig(format!(
            "single-process solver got num_processes = {}",
            cfg.num_processes
        )));
    }
    let grid = StateGrid::new(cfg);
    let mut j = vec![0.0; grid.len()];
    let mut trace = Vec::new();
    loop {
        let backup = bellman_backup(&j, cfg, channel, energy);
        let delta = super::sup_norm_diff(&j, backup.tables.j_slice());
        j = backup.tables.j;
        if record_and_check(&mut trace, delta, cfg.discount, opts)? {
            // One more sweep so W/V/policy are consistent with the
            // converged J.
            let last = bellman_backup(&j, cfg, channel, energy);
            let policy = extract_policy(&last.tables, cfg, channel, energy);
            let iterations = trace.len();
            return Ok(Solution {
                tables: last.tables,
                policy,
                error_trace: trace,
                iterations,
            });
        }
    }
}

fn extract_policy(
    tables: &ValueTables,
    cfg: &SystemConfig,
    channel: &IidChannel,
    energy: &ArrivalDistribution,
) -> Policy {
    let grid = tables.grid;
    let e_min = tables.probe_energy_min;
    let m = tables.num_channel_states;
    let alpha = cfg.discount;
    let mut probe = vec![false; grid.len()];
    let mut sample = vec![false; tables.w.len()];

    for (e, t) in grid.iter() {
        let t_next = cfg.age_successor(t);
        let idle = t as f64 + alpha * expect_j(&tables.j, &grid, energy, e, t_next);
        if e < e_min {
            continue;
        }
        probe[grid.idx(e, t)] = tables.v(e, t) < idle;

        let no_sample =
            t as f64 + alpha * expect_j(&tables.j, &grid, energy, e - cfg.probe_cost, t_next);
        let e_after = e - cfg.probe_cost - cfg.sample_cost;
        let on_success = expect_j(&tables.j, &grid, energy, e_after, 1);
        let on_failure = expect_j(&tables.j, &grid, energy, e_after, t_next);
        for (c, state) in channel.states().iter().enumerate() {
            let p = state.success_prob;
            let sample_cost =
                t as f64 * (1.0 - p) + alpha * (p * on_success + (1.0 - p) * on_failure);
            sample[tables.widx(e, t, c)] = sample_cost < no_sample;
        }
    }
    Policy {
        grid,
        probe_energy_min: e_min,
        num_channel_states: m,
        probe,
        sample,
    }
}

/// Extracted threshold structure of a converged two-stage policy.
#[derive(Debug, Clone)]
pub struct ThresholdReport {
    pub grid: StateGrid,
    pub probe_energy_min: u32,
    /// T_th(E): least age at which probing is optimal, per energy level.
    /// `None` where probing is never optimal.
    pub probe_age_threshold: Vec<Option<u32>>,
    /// p_th(E, T): least success probability at which sampling is optimal,
    /// indexed by energy then age. `None` where sampling is never optimal.
    pub sample_prob_threshold: Vec<Vec<Option<f64>>>,
    /// (E, T) cells where the probe decision is not upward-closed in T.
    /// Threshold structure in T is conjectured, not proven, so these are
    /// reported rather than fatal.
    pub probe_monotonicity_violations: Vec<(u32, u32)>,
}

impl ThresholdReport {
    /// Whether thresholds at this age sit in the truncation-affected band.
    pub fn truncation_affected(&self, age: u32) -> bool {
        truncation_affected(age, self.grid.age_cap)
    }
}

/// Reads the threshold structure off a converged policy.
///
/// Sampling decisions must be upward-closed in p(C) at every (E, T); that
/// is theorem-backed and a violation is an error. Upward-closedness of the
/// probe decision in T is only conjectured and is reported.
pub fn extract_thresholds(
    tables: &ValueTables,
    policy: &Policy,
    channel: &IidChannel,
) -> Result<ThresholdReport> {
    let grid = tables.grid;
    let e_min = tables.probe_energy_min;
    let mut probe_age_threshold = vec![None; grid.buffer as usize + 1];
    let mut sample_prob_threshold =
        vec![vec![None; grid.age_cap as usize]; grid.buffer as usize + 1];
    let mut probe_violations = Vec::new();

    for e in e_min..=grid.buffer {
        let mut first_probe_age = None;
        for t in 1..=grid.age_cap {
            if policy.probe(e, t) {
                if first_probe_age.is_none() {
                    first_probe_age = Some(t);
                }
            } else if first_probe_age.is_some() {
                probe_violations.push((e, t));
            }

            sample_prob_threshold[e as usize][(t - 1) as usize] =
                sample_threshold_at(tables, policy, channel, e, t)?;
        }
        probe_age_threshold[e as usize] = first_probe_age;
    }

    Ok(ThresholdReport {
        grid,
        probe_energy_min: e_min,
        probe_age_threshold,
        sample_prob_threshold,
        probe_monotonicity_violations: probe_violations,
    })
}

/// p_th at one (E, T), asserting upward-closedness of the sample set in
/// p(C). States are internally sorted by descending p, so the sample set
/// must be a prefix modulo ties in p.
fn sample_threshold_at(
    tables: &ValueTables,
    policy: &Policy,
    channel: &IidChannel,
    e: u32,
    t: u32,
) -> Result<Option<f64>> {
    let mut threshold: Option<f64> = None;
    for (c, state) in channel.states().iter().enumerate() {
        if policy.sample(e, t, c) {
            threshold = Some(state.success_prob);
        }
    }
    if let Some(p_min) = threshold {
        for (c, state) in channel.states().iter().enumerate() {
            if state.success_prob > p_min && !policy.sample(e, t, c) {
                return Err(Error::StructureViolation(format!(
                    "sampling optimal at p = {p_min} but not at p = {} for (E = {e}, T = {t}); \
                     W = {:.12}",
                    state.success_prob,
                    tables.w(e, t, c),
                )));
            }
        }
    }
    Ok(threshold)
}

/// Policy of the no-probing variant: a single sampling decision per state.
#[derive(Debug, Clone)]
pub struct NoProbePolicy {
    grid: StateGrid,
    pub sample_energy_min: u32,
    sample: Vec<bool>,
}

impl NoProbePolicy {
    pub fn sample(&self, e: u32, t: u32) -> bool {
        self.sample[self.grid.idx(e, t)]
    }

    /// T_th(E) of the sampling decision, reported per energy level.
    pub fn sample_age_threshold(&self, e: u32) -> Option<u32> {
        (1..=self.grid.age_cap).find(|&t| self.sample(e, t))
    }
}

/// Value iteration for the no-probing system solution.
#[derive(Debug, Clone)]
pub struct NoProbeSolution {
    pub grid: StateGrid,
    pub j: Vec<f64>,
    pub policy: NoProbePolicy,
    pub error_trace: Vec<f64>,
    pub iterations: usize,
}

impl NoProbeSolution {
    pub fn j(&self, e: u32, t: u32) -> f64 {
        self.j[self.grid.idx(e, t)]
    }
}

/// Value iteration for the variant that samples directly, paying only
/// E_s, with the channel-state expectation taken before the decision
/// (the channel is never observed).
pub fn value_iteration_no_probe(
    cfg: &SystemConfig,
    channel: &IidChannel,
    energy: &ArrivalDistribution,
    opts: &SolveOptions,
) -> Result<NoProbeSolution> {
    cfg.clone().validate()?;
    if cfg.num_processes != 1 {
        return Err(Error::InvalidConfig(format!(
            "single-process solver got num_processes = {}",
            cfg.num_processes
        )));
    }
    let grid = StateGrid::new(cfg);
    let alpha = cfg.discount;
    let e_min = cfg.sample_cost;
    let mut j = vec![0.0; grid.len()];
    let mut trace = Vec::new();

    let backup = |j_prev: &[f64]| -> Vec<f64> {
        let mut next = vec![0.0; grid.len()];
        for (e, t) in grid.iter() {
            let t_next = cfg.age_successor(t);
            let idle = t as f64 + alpha * expect_j(j_prev, &grid, energy, e, t_next);
            if e < e_min {
                next[grid.idx(e, t)] = idle;
                continue;
            }
            next[grid.idx(e, t)] = idle.min(no_probe_sample_value(
                j_prev, &grid, cfg, channel, energy, e, t, t_next,
            ));
        }
        next
    };

    loop {
        let next = backup(&j);
        let delta = super::sup_norm_diff(&j, &next);
        j = next;
        if record_and_check(&mut trace, delta, cfg.discount, opts)? {
            let mut sample = vec![false; grid.len()];
            for (e, t) in grid.iter() {
                if e < e_min {
                    continue;
                }
                let t_next = cfg.age_successor(t);
                let idle = t as f64 + alpha * expect_j(&j, &grid, energy, e, t_next);
                let sampling = no_probe_sample_value(&j, &grid, cfg, channel, energy, e, t, t_next);
                sample[grid.idx(e, t)] = sampling < idle;
            }
            let iterations = trace.len();
            return Ok(NoProbeSolution {
                grid,
                j,
                policy: NoProbePolicy {
                    grid,
                    sample_energy_min: e_min,
                    sample,
                },
                error_trace: trace,
                iterations,
            });
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn no_probe_sample_value(
    j: &[f64],
    grid: &StateGrid,
    cfg: &SystemConfig,
    channel: &IidChannel,
    energy: &ArrivalDistribution,
    e: u32,
    t: u32,
    t_next: u32,
) -> f64 {
    let alpha = cfg.discount;
    let e_after = e - cfg.sample_cost;
    let on_success = expect_j(j, grid, energy, e_after, 1);
    let on_failure = expect_j(j, grid, energy, e_after, t_next);
    channel
        .states()
        .iter()
        .zip(channel.occurrence_probs())
        .map(|(state, &q)| {
            let p = state.success_prob;
            q * (t as f64 * (1.0 - p) + alpha * (p * on_success + (1.0 - p) * on_failure))
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_cfg() -> SystemConfig {
        SystemConfig {
            buffer_capacity: 12,
            probe_cost: 1,
            sample_cost: 1,
            num_processes: 1,
            discount: 0.95,
            age_cap: 50,
        }
        .validate()
        .unwrap()
    }

    fn reference_channel() -> IidChannel {
        IidChannel::new(&[0.9, 0.7, 0.5, 0.3, 0.1], &[0.2; 5]).unwrap()
    }

    fn bernoulli(lambda: f64) -> ArrivalDistribution {
        ArrivalDistribution::bernoulli(lambda).unwrap()
    }

    #[test]
    fn first_backup_matches_closed_form() {
        // From J == 0: J1(E >= E_p + E_s, T) = min{T, E_C[min{T, T(1 - p(C))}]}
        // and J1(E < E_p + E_s, T) = T.
        let cfg = reference_cfg();
        let channel = reference_channel();
        let energy = bernoulli(0.4);
        let grid = StateGrid::new(&cfg);
        let j0 = vec![0.0; grid.len()];
        let backup = bellman_backup(&j0, &cfg, &channel, &energy);

        for (e, t) in grid.iter() {
            let got = backup.tables.j(e, t);
            if e < 2 {
                assert!((got - t as f64).abs() < 1e-12, "E={e} T={t}: {got}");
            } else {
                // E_C[T(1 - p)] = T * 0.5 for the uniform five-state channel.
                let want = (t as f64).min(0.5 * t as f64);
                assert!((got - want).abs() < 1e-12, "E={e} T={t}: {got} vs {want}");
            }
        }
        // Spec'd spot value: T = 4, E >= 2 gives min{4, 2.0} = 2.0.
        assert!((backup.tables.j(2, 4) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn error_trace_contracts_geometrically() {
        let cfg = reference_cfg();
        let sol = value_iteration(
            &cfg,
            &reference_channel(),
            &bernoulli(0.4),
            &SolveOptions::default(),
        )
        .unwrap();
        let trace = &sol.error_trace;
        assert!(trace.len() >= 3);
        for win in trace.windows(2) {
            assert!(
                win[1] <= cfg.discount * win[0] + 1e-12,
                "{} -> {}",
                win[0],
                win[1]
            );
        }
        // Geometric bound on the iteration count.
        let bound = ((1e-8f64 / trace[0]).ln() / cfg.discount.ln()).ceil() as usize + 1;
        assert!(sol.iterations <= bound, "{} > {bound}", sol.iterations);
    }

    #[test]
    fn converged_tables_satisfy_monotonicity_and_consistency() {
        let cfg = reference_cfg();
        let channel = reference_channel();
        let sol =
            value_iteration(&cfg, &channel, &bernoulli(0.4), &SolveOptions::default()).unwrap();
        let tables = &sol.tables;

        // J*(E, .) non-decreasing in T.
        for e in 0..=cfg.buffer_capacity {
            for t in 1..cfg.age_cap {
                assert!(tables.j(e, t + 1) >= tables.j(e, t) - 1e-10, "E={e} T={t}");
            }
        }
        // W*(E, T, .) non-increasing in p(C): internal order is descending p.
        for (e, t) in tables.intermediate_states() {
            for c in 1..channel.num_states() {
                assert!(tables.w(e, t, c) >= tables.w(e, t, c - 1) - 1e-10);
            }
        }
        // V consistent with W.
        for (e, t) in tables.intermediate_states() {
            let v: f64 = (0..channel.num_states())
                .map(|c| channel.occurrence_probs()[c] * tables.w(e, t, c))
                .sum();
            assert!((v - tables.v(e, t)).abs() < 1e-12);
        }
    }

    #[test]
    fn policy_is_feasible_and_thresholds_extract() {
        let cfg = reference_cfg();
        let channel = reference_channel();
        let sol =
            value_iteration(&cfg, &channel, &bernoulli(0.4), &SolveOptions::default()).unwrap();
        for (e, t) in sol.tables.grid.iter() {
            if e < 2 {
                assert!(!sol.policy.probe(e, t));
            }
        }
        let report = extract_thresholds(&sol.tables, &sol.policy, &channel).unwrap();
        assert!(report.probe_monotonicity_violations.is_empty());

        // The probe threshold decreases (weakly) with available energy.
        let mut last = u32::MAX;
        for e in 2..=cfg.buffer_capacity {
            if let Some(t_th) = report.probe_age_threshold[e as usize] {
                assert!(t_th <= last, "T_th rose from {last} to {t_th} at E={e}");
                last = t_th;
            }
        }
    }

    #[test]
    fn no_probe_idle_fixed_point_below_sampling_energy() {
        // With E < E_s the only action is idling; at the fixed point
        // J(E, T) = T + alpha * E_A J(min(E + A, B), T+).
        let cfg = SystemConfig {
            sample_cost: 3,
            ..reference_cfg()
        }
        .validate()
        .unwrap();
        let channel = reference_channel();
        let energy = bernoulli(0.4);
        let sol =
            value_iteration_no_probe(&cfg, &channel, &energy, &SolveOptions::default()).unwrap();
        for e in 0..cfg.sample_cost {
            for t in 1..=cfg.age_cap {
                let t_next = cfg.age_successor(t);
                let rhs = t as f64 + cfg.discount * expect_j(&sol.j, &sol.grid, &energy, e, t_next);
                assert!((sol.j(e, t) - rhs).abs() < 1e-6, "E={e} T={t}");
            }
        }
    }

    #[test]
    fn no_probe_with_dead_channel_never_samples() {
        let cfg = reference_cfg();
        let channel = IidChannel::new(&[0.0, 0.0], &[0.5, 0.5]).unwrap();
        let sol =
            value_iteration_no_probe(&cfg, &channel, &bernoulli(0.4), &SolveOptions::default())
                .unwrap();
        for (e, t) in sol.grid.iter() {
            assert!(
                !sol.policy.sample(e, t),
                "sampled at E={e} T={t} with p == 0"
            );
        }
    }
}
