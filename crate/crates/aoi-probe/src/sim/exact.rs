//! Exact long-run average cost of a fixed two-stage policy on the
//! truncated single-process i.i.d. grid, via the policy-induced Markov
//! chain. Serves as the desk oracle the simulator is checked against.

use crate::channel::IidChannel;
use crate::config::SystemConfig;
use crate::energy::{buffer_add, ArrivalDistribution};
use crate::solver::iid_single::{Policy, StateGrid};

/// Expected long-run time-averaged AoI of `policy`, starting from the
/// simulator's initial state (full buffer, age 1).
///
/// Builds the chain over (E, T) induced by the policy with expected
/// realized costs (a delivered slot contributes 0 for that process, so the
/// expected slot cost under sampling is T(1 - p)), then damps the
/// distribution iteration mu' = (mu + mu P) / 2 until it stops moving.
/// Damping leaves every stationary distribution and absorption probability
/// unchanged while killing periodicity.
pub fn stationary_aoi_iid(
    policy: &Policy,
    cfg: &SystemConfig,
    channel: &IidChannel,
    energy: &ArrivalDistribution,
) -> f64 {
    let grid = StateGrid::new(cfg);
    let n = grid.len();
    let e_min = cfg.probe_feasible_energy();

    // Expected one-slot cost and sparse transition rows per state.
    let mut cost = vec![0.0; n];
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];

    let push = |row: &mut Vec<(usize, f64)>, idx: usize, p: f64| {
        if p == 0.0 {
            return;
        }
        match row.iter_mut().find(|(i, _)| *i == idx) {
            Some((_, w)) => *w += p,
            None => row.push((idx, p)),
        }
    };

    for (e, t) in grid.iter() {
        let idx = grid.idx(e, t);
        let t_next = cfg.age_successor(t);
        let row = &mut rows[idx];

        if e < e_min || !policy.probe(e, t) {
            cost[idx] = t as f64;
            for (a, pa) in energy.outcomes() {
                push(row, grid.idx(buffer_add(e, a, grid.buffer), t_next), pa);
            }
            continue;
        }

        // Probing: mix over the revealed channel state.
        let mut expected_cost = 0.0;
        for (c, state) in channel.states().iter().enumerate() {
            let q = channel.occurrence_probs()[c];
            let p = state.success_prob;
            if policy.sample(e, t, c) {
                expected_cost += q * t as f64 * (1.0 - p);
                let e_base = e - cfg.probe_cost - cfg.sample_cost;
                for (a, pa) in energy.outcomes() {
                    let e_next = buffer_add(e_base, a, grid.buffer);
                    push(row, grid.idx(e_next, 1), q * p * pa);
                    push(row, grid.idx(e_next, t_next), q * (1.0 - p) * pa);
                }
            } else {
                expected_cost += q * t as f64;
                let e_base = e - cfg.probe_cost;
                for (a, pa) in energy.outcomes() {
                    push(
                        row,
                        grid.idx(buffer_add(e_base, a, grid.buffer), t_next),
                        q * pa,
                    );
                }
            }
        }
        cost[idx] = expected_cost;
    }

    // Start where the simulator starts.
    let mut mu = vec![0.0; n];
    mu[grid.idx(cfg.buffer_capacity, 1)] = 1.0;

    let mut next = vec![0.0; n];
    for _ in 0..200_000 {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (idx, &mass) in mu.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for &(to, p) in &rows[idx] {
                next[to] += mass * p;
            }
        }
        let mut moved = 0.0;
        for i in 0..n {
            let damped = 0.5 * (mu[i] + next[i]);
            moved += (damped - mu[i]).abs();
            mu[i] = damped;
        }
        if moved < 1e-13 {
            break;
        }
    }

    mu.iter().zip(&cost).map(|(&m, &c)| m * c).sum()
}
