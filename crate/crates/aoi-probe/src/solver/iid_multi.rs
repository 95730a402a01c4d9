//! Value iteration for N > 1 processes sharing one probed channel.
//!
//! States are (E, T_1, ..., T_N). One process at most is sampled per slot;
//! a successful sample resets that process's age to 1 while every other
//! age advances saturating at the cap. The sampling stage minimizes over
//! which process to sample, and the optimal choice is always a process of
//! maximum age; ties resolve to the lowest process index.
//!
//! Since the value function is invariant under permutations of the ages,
//! [`value_iteration_multi_canonical`] optionally stores one entry per
//! sorted age vector, trading lookup cost for an ~N! memory reduction.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::channel::IidChannel;
use crate::config::SystemConfig;
use crate::energy::{buffer_add, ArrivalDistribution};
use crate::{Error, Result};

use super::{record_and_check, truncation_affected, SolveOptions};

/// Stopping parameters plus the grid-size guard for the N-process solver.
#[derive(Debug, Clone, Copy)]
pub struct MultiSolveOptions {
    pub base: SolveOptions,
    /// Refuse grids with more J cells than this rather than thrash.
    pub cell_budget: u64,
}

impl Default for MultiSolveOptions {
    fn default() -> Self {
        Self {
            base: SolveOptions::default(),
            cell_budget: 50_000_000,
        }
    }
}

/// Dense (E, T_1..T_N) grid; ages use mixed-radix order, last age fastest.
#[derive(Debug, Clone)]
pub struct MultiGrid {
    pub buffer: u32,
    pub age_cap: u32,
    pub num_processes: usize,
    /// stride[k] = age_cap^(N-1-k).
    strides: Vec<usize>,
    age_cells: usize,
}

impl MultiGrid {
    pub fn new(cfg: &SystemConfig) -> Result<Self> {
        let n = cfg.num_processes;
        let cap = cfg.age_cap as usize;
        let mut cells: u128 = 1;
        for _ in 0..n {
            cells = cells.saturating_mul(cap as u128);
        }
        let age_cells_u128 = cells;
        cells = cells.saturating_mul(cfg.buffer_capacity as u128 + 1);
        if cells > u64::MAX as u128 {
            return Err(Error::StateSpaceTooLarge {
                cells,
                budget: u64::MAX,
            });
        }
        let mut strides = vec![1usize; n];
        for k in (0..n.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * cap;
        }
        Ok(Self {
            buffer: cfg.buffer_capacity,
            age_cap: cfg.age_cap,
            num_processes: n,
            strides,
            age_cells: age_cells_u128 as usize,
        })
    }

    pub fn cells(&self) -> u64 {
        (self.buffer as u64 + 1) * self.age_cells as u64
    }

    pub fn len(&self) -> usize {
        self.cells() as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn age_cells(&self) -> usize {
        self.age_cells
    }

    /// Rank of an age vector within one energy level.
    #[inline]
    pub fn age_rank(&self, ages: &[u32]) -> usize {
        debug_assert_eq!(ages.len(), self.num_processes);
        ages.iter()
            .zip(&self.strides)
            .map(|(&t, &s)| (t - 1) as usize * s)
            .sum()
    }

    #[inline]
    pub fn idx(&self, e: u32, ages: &[u32]) -> usize {
        e as usize * self.age_cells + self.age_rank(ages)
    }

    /// Inverse of [`Self::age_rank`].
    pub fn decode_ages(&self, mut rank: usize, ages: &mut [u32]) {
        for (k, &s) in self.strides.iter().enumerate() {
            ages[k] = (rank / s) as u32 + 1;
            rank %= s;
        }
    }
}

/// Converged tables for the N-process model. W and V cover only energies
/// with a probe branch.
#[derive(Debug, Clone)]
pub struct ValueTablesN {
    pub grid: MultiGrid,
    pub probe_energy_min: u32,
    pub num_channel_states: usize,
    j: Vec<f64>,
    w: Vec<f64>,
    v: Vec<f64>,
}

impl ValueTablesN {
    #[inline]
    fn vidx(&self, e: u32, age_rank: usize) -> usize {
        debug_assert!(e >= self.probe_energy_min);
        (e - self.probe_energy_min) as usize * self.grid.age_cells + age_rank
    }

    pub fn j(&self, e: u32, ages: &[u32]) -> f64 {
        self.j[self.grid.idx(e, ages)]
    }

    pub fn w(&self, e: u32, ages: &[u32], c: usize) -> f64 {
        self.w[self.vidx(e, self.grid.age_rank(ages)) * self.num_channel_states + c]
    }

    pub fn v(&self, e: u32, ages: &[u32]) -> f64 {
        self.v[self.vidx(e, self.grid.age_rank(ages))]
    }

    pub fn j_slice(&self) -> &[f64] {
        &self.j
    }
}

/// Sampling decision at an intermediate state: idle or one process index.
pub type SampleChoice = Option<usize>;

/// Greedy two-stage policy over the N-process grid.
#[derive(Debug, Clone)]
pub struct PolicyN {
    grid: MultiGrid,
    probe_energy_min: u32,
    num_channel_states: usize,
    probe: Vec<bool>,
    sample: Vec<SampleChoice>,
}

impl PolicyN {
    pub fn probe(&self, e: u32, ages: &[u32]) -> bool {
        self.probe[self.grid.idx(e, ages)]
    }

    pub fn sample(&self, e: u32, ages: &[u32], c: usize) -> SampleChoice {
        debug_assert!(e >= self.probe_energy_min);
        let vidx =
            (e - self.probe_energy_min) as usize * self.grid.age_cells + self.grid.age_rank(ages);
        self.sample[vidx * self.num_channel_states + c]
    }

    pub fn probe_energy_min(&self) -> u32 {
        self.probe_energy_min
    }
}

#[derive(Debug, Clone)]
pub struct SolutionN {
    pub tables: ValueTablesN,
    pub policy: PolicyN,
    pub error_trace: Vec<f64>,
    pub iterations: usize,
}

#[inline]
fn expect_j(
    j: &[f64],
    grid: &MultiGrid,
    energy: &ArrivalDistribution,
    e_base: u32,
    age_rank: usize,
) -> f64 {
    energy
        .outcomes()
        .map(|(a, p)| {
            p * j[buffer_add(e_base, a, grid.buffer) as usize * grid.age_cells + age_rank]
        })
        .sum()
}

/// Per-state scratch shared by the backup and the policy extraction.
struct StageValues {
    idle: f64,
    no_sample: f64,
    /// (value, process index) per channel state, already tie-broken toward
    /// the highest age then the lowest index.
    best_sample: Vec<(f64, usize)>,
}

#[allow(clippy::too_many_arguments)]
fn stage_values(
    j_prev: &[f64],
    grid: &MultiGrid,
    cfg: &SystemConfig,
    channel: &IidChannel,
    energy: &ArrivalDistribution,
    e: u32,
    ages: &[u32],
    scratch: &mut Vec<u32>,
) -> StageValues {
    let alpha = cfg.discount;
    let sum_ages: f64 = ages.iter().map(|&t| t as f64).sum();

    scratch.clear();
    scratch.extend(ages.iter().map(|&t| cfg.age_successor(t)));
    let rank_next = grid.age_rank(scratch);

    let idle = sum_ages + alpha * expect_j(j_prev, grid, energy, e, rank_next);
    if e < cfg.probe_feasible_energy() {
        return StageValues {
            idle,
            no_sample: f64::INFINITY,
            best_sample: Vec::new(),
        };
    }

    let no_sample =
        sum_ages + alpha * expect_j(j_prev, grid, energy, e - cfg.probe_cost, rank_next);
    let e_after = e - cfg.probe_cost - cfg.sample_cost;
    let on_failure = expect_j(j_prev, grid, energy, e_after, rank_next);

    // Process order: descending age, then ascending index, so a strict
    // argmin lands on the highest-age lowest-index process under ties.
    let mut order: Vec<usize> = (0..ages.len()).collect();
    order.sort_by(|&a, &b| ages[b].cmp(&ages[a]).then(a.cmp(&b)));

    let on_success: Vec<f64> = order
        .iter()
        .map(|&k| {
            let saved = scratch[k];
            scratch[k] = 1;
            let rank = grid.age_rank(scratch);
            scratch[k] = saved;
            expect_j(j_prev, grid, energy, e_after, rank)
        })
        .collect();

    let best_sample = channel
        .states()
        .iter()
        .map(|state| {
            let p = state.success_prob;
            let mut best = f64::INFINITY;
            let mut best_k = order[0];
            for (pos, &k) in order.iter().enumerate() {
                let value = sum_ages - ages[k] as f64 * p
                    + alpha * (p * on_success[pos] + (1.0 - p) * on_failure);
                if value < best {
                    best = value;
                    best_k = k;
                }
            }
            (best, best_k)
        })
        .collect();

    StageValues {
        idle,
        no_sample,
        best_sample,
    }
}

struct BackupOut {
    j: Vec<f64>,
    w: Vec<f64>,
    v: Vec<f64>,
}

fn backup_pass(
    j_prev: &[f64],
    cfg: &SystemConfig,
    channel: &IidChannel,
    energy: &ArrivalDistribution,
    grid: &MultiGrid,
) -> BackupOut {
    let e_min = cfg.probe_feasible_energy();
    let m = channel.num_states();
    let inter_levels = (grid.buffer - e_min) as usize + 1;
    let inter_len = inter_levels * grid.age_cells;

    let mut j = vec![0.0; grid.len()];
    let mut w = vec![0.0; inter_len * m];
    let mut v = vec![0.0; inter_len];

    let q = channel.occurrence_probs();
    j.par_chunks_mut(grid.age_cells)
        .enumerate()
        .for_each(|(e_usize, j_row)| {
            let e = e_usize as u32;
            let mut ages = vec![1u32; grid.num_processes];
            let mut scratch = Vec::with_capacity(grid.num_processes);
            for (rank, out) in j_row.iter_mut().enumerate() {
                grid.decode_ages(rank, &mut ages);
                let stage =
                    stage_values(j_prev, grid, cfg, channel, energy, e, &ages, &mut scratch);
                if e < e_min {
                    *out = stage.idle;
                } else {
                    let mut v_val = 0.0;
                    for (c, &(sample, _)) in stage.best_sample.iter().enumerate() {
                        v_val += q[c] * sample.min(stage.no_sample);
                    }
                    *out = stage.idle.min(v_val);
                }
            }
        });

    // Second pass fills W and V from the same stage values; kept separate
    // so the J pass above stays contiguous for rayon.
    w.par_chunks_mut(grid.age_cells * m)
        .zip(v.par_chunks_mut(grid.age_cells))
        .enumerate()
        .for_each(|(level, (w_row, v_row))| {
            let e = e_min + level as u32;
            let mut ages = vec![1u32; grid.num_processes];
            let mut scratch = Vec::with_capacity(grid.num_processes);
            for rank in 0..grid.age_cells {
                grid.decode_ages(rank, &mut ages);
                let stage =
                    stage_values(j_prev, grid, cfg, channel, energy, e, &ages, &mut scratch);
                let mut v_val = 0.0;
                for (c, &(sample, _)) in stage.best_sample.iter().enumerate() {
                    let w_val = sample.min(stage.no_sample);
                    w_row[rank * m + c] = w_val;
                    v_val += q[c] * w_val;
                }
                v_row[rank] = v_val;
            }
        });

    BackupOut { j, w, v }
}

/// One synchronous Bellman backup over the full N-process grid.
pub fn bellman_backup_multi(
    j_prev: &[f64],
    cfg: &SystemConfig,
    channel: &IidChannel,
    energy: &ArrivalDistribution,
) -> Result<ValueTablesN> {
    let grid = MultiGrid::new(cfg)?;
    debug_assert_eq!(j_prev.len(), grid.len());
    let out = backup_pass(j_prev, cfg, channel, energy, &grid);
    Ok(ValueTablesN {
        probe_energy_min: cfg.probe_feasible_energy(),
        num_channel_states: channel.num_states(),
        j: out.j,
        w: out.w,
        v: out.v,
        grid,
    })
}

/// Value iteration over the N-process grid with greedy policy extraction.
pub fn value_iteration_multi(
    cfg: &SystemConfig,
    channel: &IidChannel,
    energy: &ArrivalDistribution,
    opts: &MultiSolveOptions,
) -> Result<SolutionN> {
    cfg.clone().validate()?;
    let grid = MultiGrid::new(cfg)?;
    if grid.cells() > opts.cell_budget {
        return Err(Error::StateSpaceTooLarge {
            cells: grid.cells() as u128,
            budget: opts.cell_budget,
        });
    }
    let mut j = vec![0.0; grid.len()];
    let mut trace = Vec::new();
    loop {
        let out = backup_pass(&j, cfg, channel, energy, &grid);
        let delta = super::sup_norm_diff(&j, &out.j);
        j = out.j;
        if record_and_check(&mut trace, delta, cfg.discount, &opts.base)? {
            let out = backup_pass(&j, cfg, channel, energy, &grid);
            let tables = ValueTablesN {
                probe_energy_min: cfg.probe_feasible_energy(),
                num_channel_states: channel.num_states(),
                j: out.j,
                w: out.w,
                v: out.v,
                grid: grid.clone(),
            };
            let policy = extract_policy(&tables, cfg, channel, energy);
            let iterations = trace.len();
            return Ok(SolutionN {
                tables,
                policy,
                error_trace: trace,
                iterations,
            });
        }
    }
}

fn extract_policy(
    tables: &ValueTablesN,
    cfg: &SystemConfig,
    channel: &IidChannel,
    energy: &ArrivalDistribution,
) -> PolicyN {
    let grid = &tables.grid;
    let e_min = tables.probe_energy_min;
    let m = tables.num_channel_states;
    let mut probe = vec![false; grid.len()];
    let mut sample = vec![None; tables.w.len()];

    let mut ages = vec![1u32; grid.num_processes];
    let mut scratch = Vec::with_capacity(grid.num_processes);
    for e in e_min..=grid.buffer {
        for rank in 0..grid.age_cells {
            grid.decode_ages(rank, &mut ages);
            let stage = stage_values(
                &tables.j,
                grid,
                cfg,
                channel,
                energy,
                e,
                &ages,
                &mut scratch,
            );
            let vidx = tables.vidx(e, rank);
            probe[grid.idx(e, &ages)] = tables.v[vidx] < stage.idle;
            for (c, &(value, k)) in stage.best_sample.iter().enumerate() {
                if value < stage.no_sample {
                    sample[vidx * m + c] = Some(k);
                }
            }
        }
    }
    PolicyN {
        grid: grid.clone(),
        probe_energy_min: e_min,
        num_channel_states: m,
        probe,
        sample,
    }
}

/// Threshold structure of a converged N-process policy.
#[derive(Debug, Clone)]
pub struct ThresholdReportN {
    pub probe_energy_min: u32,
    pub age_cap: u32,
    /// p_th(E, sorted ages) on canonical (non-increasing) age vectors.
    pub sample_prob_threshold: Vec<(u32, Vec<u32>, Option<f64>)>,
    /// T_th(E, rest): least max-age at which probing is optimal, given the
    /// other ages (sorted non-increasing).
    pub probe_age_threshold: Vec<(u32, Vec<u32>, Option<u32>)>,
    /// Cells (E, sorted ages) where the probe set is not upward-closed in
    /// the max age; conjectured structure, reported only.
    pub probe_monotonicity_violations: Vec<(u32, Vec<u32>)>,
}

impl ThresholdReportN {
    pub fn truncation_affected(&self, age: u32) -> bool {
        truncation_affected(age, self.age_cap)
    }
}

/// Extracts thresholds and checks the theorem-backed structure: sampling
/// decisions upward-closed in p(C) and always targeting a maximum-age
/// process. Conjectured threshold structure in the max age is reported.
pub fn extract_thresholds_multi(
    tables: &ValueTablesN,
    policy: &PolicyN,
    channel: &IidChannel,
) -> Result<ThresholdReportN> {
    let grid = &tables.grid;
    let e_min = tables.probe_energy_min;
    let canon = canonical_age_vectors(grid.age_cap, grid.num_processes);

    let mut sample_prob_threshold = Vec::new();
    for e in e_min..=grid.buffer {
        for ages in &canon {
            let max_age = ages[0];
            let mut threshold = None;
            for (c, state) in channel.states().iter().enumerate() {
                if let Some(k) = policy.sample(e, ages, c) {
                    if ages[k] != max_age {
                        return Err(Error::StructureViolation(format!(
                            "sampled process {k} with age {} instead of a max-age process \
                             ({max_age}) at E = {e}, ages = {ages:?}",
                            ages[k]
                        )));
                    }
                    threshold = Some(state.success_prob);
                }
            }
            if let Some(p_min) = threshold {
                for (c, state) in channel.states().iter().enumerate() {
                    if state.success_prob > p_min && policy.sample(e, ages, c).is_none() {
                        return Err(Error::StructureViolation(format!(
                            "sampling optimal at p = {p_min} but not at p = {} for E = {e}, \
                             ages = {ages:?}",
                            state.success_prob
                        )));
                    }
                }
            }
            sample_prob_threshold.push((e, ages.clone(), threshold));
        }
    }

    // Probe threshold in the max age for each (E, rest-of-ages).
    let rests = canonical_age_vectors(grid.age_cap, grid.num_processes - 1);
    let mut probe_age_threshold = Vec::new();
    let mut violations = Vec::new();
    let mut ages = vec![0u32; grid.num_processes];
    for e in e_min..=grid.buffer {
        for rest in &rests {
            let floor = rest.first().copied().unwrap_or(1);
            let mut first = None;
            for max_age in floor..=grid.age_cap {
                ages[0] = max_age;
                ages[1..].copy_from_slice(rest);
                if policy.probe(e, &ages) {
                    if first.is_none() {
                        first = Some(max_age);
                    }
                } else if first.is_some() {
                    violations.push((e, ages.clone()));
                }
            }
            probe_age_threshold.push((e, rest.clone(), first));
        }
    }

    Ok(ThresholdReportN {
        probe_energy_min: e_min,
        age_cap: grid.age_cap,
        sample_prob_threshold,
        probe_age_threshold,
        probe_monotonicity_violations: violations,
    })
}

/// All non-increasing age vectors of the given length, lexicographically.
pub fn canonical_age_vectors(age_cap: u32, n: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(n);
    fn rec(out: &mut Vec<Vec<u32>>, current: &mut Vec<u32>, n: usize, max: u32) {
        if current.len() == n {
            out.push(current.clone());
            return;
        }
        for t in (1..=max).rev() {
            current.push(t);
            rec(out, current, n, t);
            current.pop();
        }
    }
    rec(&mut out, &mut current, n, age_cap);
    out
}

/// J table stored only on sorted age vectors, exploiting permutation
/// invariance of the value function.
#[derive(Debug)]
pub struct CanonicalSolution {
    grid: MultiGrid,
    canon: Vec<Vec<u32>>,
    rank_of: HashMap<Vec<u32>, usize>,
    j: Vec<f64>,
    pub error_trace: Vec<f64>,
    pub iterations: usize,
}

impl CanonicalSolution {
    /// Value at any age vector; the lookup sorts it.
    pub fn j(&self, e: u32, ages: &[u32]) -> f64 {
        let mut sorted = ages.to_vec();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        let rank = self.rank_of[&sorted];
        self.j[e as usize * self.canon.len() + rank]
    }

    /// Stored cells versus the full rectangular table.
    pub fn compression(&self) -> (usize, usize) {
        (self.j.len(), self.grid.len())
    }
}

/// Value iteration storing one entry per sorted age vector.
pub fn value_iteration_multi_canonical(
    cfg: &SystemConfig,
    channel: &IidChannel,
    energy: &ArrivalDistribution,
    opts: &MultiSolveOptions,
) -> Result<CanonicalSolution> {
    cfg.clone().validate()?;
    let grid = MultiGrid::new(cfg)?;
    let canon = canonical_age_vectors(cfg.age_cap, cfg.num_processes);
    let cells = (cfg.buffer_capacity as u64 + 1) * canon.len() as u64;
    if cells > opts.cell_budget {
        return Err(Error::StateSpaceTooLarge {
            cells: cells as u128,
            budget: opts.cell_budget,
        });
    }
    let rank_of: HashMap<Vec<u32>, usize> = canon
        .iter()
        .enumerate()
        .map(|(i, v)| (v.clone(), i))
        .collect();

    let n_canon = canon.len();
    let e_min = cfg.probe_feasible_energy();
    let alpha = cfg.discount;
    let q = channel.occurrence_probs();

    let lookup = |j: &[f64], e: u32, ages: &mut Vec<u32>| -> f64 {
        ages.sort_unstable_by(|a, b| b.cmp(a));
        j[e as usize * n_canon + rank_of[ages.as_slice()]]
    };
    let expect = |j: &[f64], e_base: u32, ages: &Vec<u32>| -> f64 {
        energy
            .outcomes()
            .map(|(a, p)| {
                let mut sorted = ages.clone();
                p * lookup(j, buffer_add(e_base, a, cfg.buffer_capacity), &mut sorted)
            })
            .sum()
    };

    let mut j = vec![0.0; (cfg.buffer_capacity as usize + 1) * n_canon];
    let mut trace = Vec::new();
    loop {
        let mut next = vec![0.0; j.len()];
        for e in 0..=cfg.buffer_capacity {
            for (rank, ages) in canon.iter().enumerate() {
                let sum_ages: f64 = ages.iter().map(|&t| t as f64).sum();
                let ages_next: Vec<u32> = ages.iter().map(|&t| cfg.age_successor(t)).collect();
                let idle = sum_ages + alpha * expect(&j, e, &ages_next);
                let out = &mut next[e as usize * n_canon + rank];
                if e < e_min {
                    *out = idle;
                    continue;
                }
                let no_sample = sum_ages + alpha * expect(&j, e - cfg.probe_cost, &ages_next);
                let e_after = e - cfg.probe_cost - cfg.sample_cost;
                let on_failure = expect(&j, e_after, &ages_next);
                // Age-sorted storage: index 0 is always a max-age process.
                let mut reset = ages_next.clone();
                reset[0] = 1;
                let on_success = expect(&j, e_after, &reset);
                let mut v = 0.0;
                for (c, state) in channel.states().iter().enumerate() {
                    let p = state.success_prob;
                    // Sampling any non-max process is dominated; only the
                    // max-age candidate is evaluated here.
                    let sample = sum_ages - ages[0] as f64 * p
                        + alpha * (p * on_success + (1.0 - p) * on_failure);
                    v += q[c] * sample.min(no_sample);
                }
                *out = idle.min(v);
            }
        }
        let delta = super::sup_norm_diff(&j, &next);
        j = next;
        if record_and_check(&mut trace, delta, cfg.discount, &opts.base)? {
            let iterations = trace.len();
            return Ok(CanonicalSolution {
                grid,
                canon,
                rank_of,
                j,
                error_trace: trace,
                iterations,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::iid_single;

    fn small_cfg(n: usize, cap: u32) -> SystemConfig {
        SystemConfig {
            buffer_capacity: 6,
            probe_cost: 1,
            sample_cost: 1,
            num_processes: n,
            discount: 0.9,
            age_cap: cap,
        }
        .validate()
        .unwrap()
    }

    fn channel() -> IidChannel {
        IidChannel::new(&[0.9, 0.5, 0.1], &[0.4, 0.3, 0.3]).unwrap()
    }

    fn energy() -> ArrivalDistribution {
        ArrivalDistribution::bernoulli(0.5).unwrap()
    }

    #[test]
    fn first_backup_matches_closed_form() {
        // From J == 0 the probe branch reduces to the single-stage costs:
        // W1 = min{sum T_i, min_k(sum_{i != k} T_i + T_k (1 - p))} and
        // J1(E < E_p + E_s) = sum T_i.
        let cfg = small_cfg(2, 4);
        let ch = channel();
        let en = energy();
        let grid = MultiGrid::new(&cfg).unwrap();
        let j0 = vec![0.0; grid.len()];
        let tables = bellman_backup_multi(&j0, &cfg, &ch, &en).unwrap();

        let mut ages = vec![0u32; 2];
        for e in 0..=cfg.buffer_capacity {
            for rank in 0..grid.age_cells() {
                grid.decode_ages(rank, &mut ages);
                let sum: f64 = ages.iter().map(|&t| t as f64).sum();
                let got = tables.j(e, &ages);
                if e < 2 {
                    assert!((got - sum).abs() < 1e-12);
                } else {
                    let expected_probe: f64 = ch
                        .states()
                        .iter()
                        .zip(ch.occurrence_probs())
                        .map(|(s, &q)| {
                            let best_sample = ages
                                .iter()
                                .map(|&t| sum - t as f64 * s.success_prob)
                                .fold(f64::INFINITY, f64::min);
                            q * best_sample.min(sum)
                        })
                        .sum();
                    let want = sum.min(expected_probe);
                    assert!((got - want).abs() < 1e-12, "E={e} ages={ages:?}");
                }
            }
        }
    }

    #[test]
    fn n_equals_one_reduces_to_single_process_solver() {
        let cfg = small_cfg(1, 6);
        let ch = channel();
        let en = energy();
        let multi = value_iteration_multi(&cfg, &ch, &en, &MultiSolveOptions::default()).unwrap();
        let single = iid_single::value_iteration(&cfg, &ch, &en, &SolveOptions::default()).unwrap();
        for e in 0..=cfg.buffer_capacity {
            for t in 1..=cfg.age_cap {
                let diff = (multi.tables.j(e, &[t]) - single.tables.j(e, t)).abs();
                assert!(diff < 1e-12, "E={e} T={t} diff={diff}");
            }
        }
    }

    #[test]
    fn value_function_is_permutation_invariant() {
        let cfg = small_cfg(3, 4);
        let sol = value_iteration_multi(&cfg, &channel(), &energy(), &MultiSolveOptions::default())
            .unwrap();
        let perms: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        for e in 0..=cfg.buffer_capacity {
            for t1 in 1..=cfg.age_cap {
                for t2 in 1..=cfg.age_cap {
                    for t3 in 1..=cfg.age_cap {
                        let base = [t1, t2, t3];
                        let reference = sol.tables.j(e, &base);
                        for perm in &perms {
                            let shuffled: Vec<u32> = perm.iter().map(|&i| base[i]).collect();
                            assert!((sol.tables.j(e, &shuffled) - reference).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn sampling_always_targets_a_max_age_process() {
        let cfg = small_cfg(3, 4);
        let ch = channel();
        let sol =
            value_iteration_multi(&cfg, &ch, &energy(), &MultiSolveOptions::default()).unwrap();
        let report = extract_thresholds_multi(&sol.tables, &sol.policy, &ch).unwrap();
        // Tie rule: equal max ages resolve to the lowest process index,
        // and relabeling moves the choice with the max.
        for c in 0..ch.num_states() {
            if let Some(k) = sol.policy.sample(6, &[4, 4, 2], c) {
                assert_eq!(k, 0);
            }
            if let Some(k) = sol.policy.sample(6, &[2, 4, 4], c) {
                assert_eq!(k, 1);
            }
        }
        drop(report);
    }

    #[test]
    fn value_monotone_in_each_age_coordinate() {
        let cfg = small_cfg(2, 5);
        let sol = value_iteration_multi(&cfg, &channel(), &energy(), &MultiSolveOptions::default())
            .unwrap();
        for e in 0..=cfg.buffer_capacity {
            for t1 in 1..=cfg.age_cap {
                for t2 in 1..=cfg.age_cap {
                    let here = sol.tables.j(e, &[t1, t2]);
                    if t1 < cfg.age_cap {
                        assert!(sol.tables.j(e, &[t1 + 1, t2]) >= here - 1e-10);
                    }
                    if t2 < cfg.age_cap {
                        assert!(sol.tables.j(e, &[t1, t2 + 1]) >= here - 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn canonical_table_matches_full_table() {
        let cfg = small_cfg(3, 4);
        let ch = channel();
        let en = energy();
        let full = value_iteration_multi(&cfg, &ch, &en, &MultiSolveOptions::default()).unwrap();
        let compact =
            value_iteration_multi_canonical(&cfg, &ch, &en, &MultiSolveOptions::default()).unwrap();
        let (stored, dense) = compact.compression();
        assert!(stored < dense);
        let grid = MultiGrid::new(&cfg).unwrap();
        let mut ages = vec![0u32; 3];
        for e in 0..=cfg.buffer_capacity {
            for rank in 0..grid.age_cells() {
                grid.decode_ages(rank, &mut ages);
                // Both runs stop within tol * alpha / (1 - alpha) of the
                // fixed point, so they can differ by twice that.
                let diff = (full.tables.j(e, &ages) - compact.j(e, &ages)).abs();
                assert!(diff < 1e-6, "E={e} ages={ages:?} diff={diff}");
            }
        }
    }

    #[test]
    fn refuses_oversized_grids() {
        let cfg = SystemConfig {
            buffer_capacity: 12,
            probe_cost: 1,
            sample_cost: 1,
            num_processes: 3,
            discount: 0.95,
            age_cap: 50,
        }
        .validate()
        .unwrap();
        let opts = MultiSolveOptions {
            cell_budget: 1_000_000,
            ..Default::default()
        };
        let err = value_iteration_multi(&cfg, &channel(), &energy(), &opts).unwrap_err();
        assert!(matches!(err, Error::StateSpaceTooLarge { .. }));
    }
}
