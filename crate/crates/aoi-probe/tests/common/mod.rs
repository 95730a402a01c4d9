//! Test-only oracles, independent of the solver implementations they
//! check.

#![allow(dead_code)]

use aoi_probe::channel::IidChannel;
use aoi_probe::config::SystemConfig;
use aoi_probe::energy::{buffer_add, ArrivalDistribution};

/// Optimal discounted values of the tiny single-process instance by
/// exhaustive enumeration of every deterministic two-stage stationary
/// policy, each evaluated exactly as the solution of its linear fixed
/// point. Returns J* indexed by E * T_max + (T - 1).
///
/// The policy space is 2^(probe cells + sample cells); the function
/// refuses instances with more than 22 binary cells.
pub fn enumerate_optimal_values(
    cfg: &SystemConfig,
    channel: &IidChannel,
    energy: &ArrivalDistribution,
) -> Vec<f64> {
    let b = cfg.buffer_capacity;
    let t_max = cfg.age_cap;
    let e_min = cfg.probe_feasible_energy();
    let m = channel.num_states();
    let n = (b as usize + 1) * t_max as usize;
    let idx = |e: u32, t: u32| e as usize * t_max as usize + (t - 1) as usize;

    let probe_cells: Vec<(u32, u32)> = (e_min..=b)
        .flat_map(|e| (1..=t_max).map(move |t| (e, t)))
        .collect();
    let sample_cells: Vec<(u32, u32, usize)> = probe_cells
        .iter()
        .flat_map(|&(e, t)| (0..m).map(move |c| (e, t, c)))
        .collect();
    let bits = probe_cells.len() + sample_cells.len();
    assert!(
        bits <= 22,
        "enumeration oracle limited to tiny instances, got {bits} bits"
    );

    let mut best = vec![f64::INFINITY; n];
    for mask in 0u64..(1u64 << bits) {
        let probe = |e: u32, t: u32| -> bool {
            let pos = probe_cells.iter().position(|&x| x == (e, t)).unwrap();
            mask >> pos & 1 == 1
        };
        let sample = |e: u32, t: u32, c: usize| -> bool {
            let pos = sample_cells.iter().position(|&x| x == (e, t, c)).unwrap();
            mask >> (probe_cells.len() + pos) & 1 == 1
        };

        // Expected cost vector and dense transition matrix of this policy.
        let mut cost = vec![0.0; n];
        let mut trans = vec![0.0; n * n];
        for e in 0..=b {
            for t in 1..=t_max {
                let row = idx(e, t);
                let t_next = (t + 1).min(t_max);
                if e < e_min || !probe(e, t) {
                    cost[row] = t as f64;
                    for (a, pa) in energy.outcomes() {
                        trans[row * n + idx(buffer_add(e, a, b), t_next)] += pa;
                    }
                    continue;
                }
                for (c, state) in channel.states().iter().enumerate() {
                    let q = channel.occurrence_probs()[c];
                    let p = state.success_prob;
                    if sample(e, t, c) {
                        cost[row] += q * t as f64 * (1.0 - p);
                        let e_base = e - cfg.probe_cost - cfg.sample_cost;
                        for (a, pa) in energy.outcomes() {
                            let e_next = buffer_add(e_base, a, b);
                            trans[row * n + idx(e_next, 1)] += q * p * pa;
                            trans[row * n + idx(e_next, t_next)] += q * (1.0 - p) * pa;
                        }
                    } else {
                        cost[row] += q * t as f64;
                        let e_base = e - cfg.probe_cost;
                        for (a, pa) in energy.outcomes() {
                            trans[row * n + idx(buffer_add(e_base, a, b), t_next)] += q * pa;
                        }
                    }
                }
            }
        }

        // Solve (I - alpha P) j = cost.
        let mut system = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                system[r * n + c] = -cfg.discount * trans[r * n + c];
            }
            system[r * n + r] += 1.0;
        }
        let j = solve_dense(&mut system, &mut cost.clone(), n);
        // The optimal stationary policy attains the pointwise minimum.
        for (slot, value) in best.iter_mut().zip(j) {
            if value < *slot {
                *slot = value;
            }
        }
    }
    best
}

/// Gaussian elimination with partial pivoting; consumes the inputs.
fn solve_dense(a: &mut [f64], rhs: &mut [f64], n: usize) -> Vec<f64> {
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| {
                a[r1 * n + col]
                    .abs()
                    .partial_cmp(&a[r2 * n + col].abs())
                    .unwrap()
            })
            .unwrap();
        if pivot_row != col {
            for k in 0..n {
                a.swap(col * n + k, pivot_row * n + k);
            }
            rhs.swap(col, pivot_row);
        }
        let pivot = a[col * n + col];
        assert!(pivot.abs() > 1e-12, "singular policy-evaluation system");
        for row in col + 1..n {
            let factor = a[row * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    x
}
