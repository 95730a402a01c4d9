//! Monte-Carlo environment implementing the slot dynamics for every model
//! variant, plus policy evaluation with confidence intervals.
//!
//! Event order within a slot: observe state, decide the probe, pay E_p and
//! observe C if probing, decide the sample, pay E_s and transmit if
//! sampling, incur the realized cost, add arrivals and clip at the buffer,
//! then advance the channel/harvesting chains. Bellman backups price the
//! sampling branch by its expectation T(1 - p(C)); the simulator charges
//! the realized indicator instead. Both estimate the same time-averaged
//! objective.

mod exact;
mod iid;
mod markov;

pub use exact::stationary_aoi_iid;
pub use iid::{EnvIid, SlotOutcome};
pub use markov::{EnvMarkov, SlotOutcomeM};

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::Result;

/// Two-stage policy over the N-process i.i.d. model. `sample` is consulted
/// only on slots that probed, with the revealed internal channel index.
pub trait IidPolicy {
    fn probe(&mut self, energy: u32, ages: &[u32]) -> bool;
    fn sample(&mut self, energy: u32, ages: &[u32], channel: usize) -> Option<usize>;
}

/// Single-stage policy for the system that samples without probing.
pub trait DirectPolicy {
    fn sample(&mut self, energy: u32, ages: &[u32]) -> Option<usize>;
}

/// Two-stage policy over the Markovian model.
pub trait MarkovPolicy {
    fn probe(
        &mut self,
        energy: u32,
        age: u32,
        tau: u32,
        c_prev: usize,
        h: crate::energy::HarvestState,
    ) -> bool;
    fn sample(
        &mut self,
        energy: u32,
        age: u32,
        channel: usize,
        h: crate::energy::HarvestState,
    ) -> bool;
}

/// Evaluation summary over independent replicates.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EvalReport {
    /// Time-averaged AoI per replicate.
    pub per_seed: Vec<f64>,
    pub mean: f64,
    /// 95% half-width from the replicate spread (Student-t); 0 for a
    /// single replicate.
    pub ci_half_width: f64,
    pub horizon: u64,
    /// Fraction of slots in which the full two-stage action was not
    /// affordable, averaged over replicates.
    pub energy_outage_fraction: f64,
}

impl EvalReport {
    pub(crate) fn from_replicates(per_seed: Vec<f64>, outage: Vec<f64>, horizon: u64) -> Self {
        let n = per_seed.len();
        let mean = per_seed.iter().sum::<f64>() / n as f64;
        let ci_half_width = if n >= 2 {
            let var = per_seed
                .iter()
                .map(|x| (x - mean) * (x - mean))
                .sum::<f64>()
                / (n as f64 - 1.0);
            let t = StudentsT::new(0.0, 1.0, n as f64 - 1.0)
                .expect("valid dof")
                .inverse_cdf(0.975);
            t * (var / n as f64).sqrt()
        } else {
            0.0
        };
        let energy_outage_fraction = outage.iter().sum::<f64>() / n as f64;
        Self {
            per_seed,
            mean,
            ci_half_width,
            horizon,
            energy_outage_fraction,
        }
    }
}

/// Runs independent replicates of a two-stage policy on the i.i.d. model
/// and aggregates the empirical time-averaged AoI.
///
/// `make_policy` builds one policy instance per replicate so stochastic
/// policies get their own stream; replicate `i` runs with `base_seed + i`.
pub fn evaluate_iid_policy<P, F>(
    make_policy: F,
    env_template: &EnvIid,
    horizon: u64,
    n_seeds: u64,
    base_seed: u64,
) -> Result<EvalReport>
where
    P: IidPolicy,
    F: Fn(u64) -> P + Sync,
{
    let runs: Vec<(f64, f64)> = (0..n_seeds)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed + i;
            let mut env = env_template.reseeded(seed);
            let mut policy = make_policy(seed);
            let mut total = 0.0;
            let mut outage = 0u64;
            for _ in 0..horizon {
                if env.energy() < env.outage_threshold() {
                    outage += 1;
                }
                let outcome = env.step(&mut policy)?;
                total += outcome.cost;
            }
            Ok((total / horizon as f64, outage as f64 / horizon as f64))
        })
        .collect::<Result<_>>()?;
    let (per_seed, outage) = runs.into_iter().unzip();
    Ok(EvalReport::from_replicates(per_seed, outage, horizon))
}

/// As [`evaluate_iid_policy`] for the no-probing system.
pub fn evaluate_direct_policy<P, F>(
    make_policy: F,
    env_template: &EnvIid,
    horizon: u64,
    n_seeds: u64,
    base_seed: u64,
) -> Result<EvalReport>
where
    P: DirectPolicy,
    F: Fn(u64) -> P + Sync,
{
    let runs: Vec<(f64, f64)> = (0..n_seeds)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed + i;
            let mut env = env_template.reseeded(seed);
            let mut policy = make_policy(seed);
            let mut total = 0.0;
            let mut outage = 0u64;
            for _ in 0..horizon {
                if env.energy() < env.sample_cost() {
                    outage += 1;
                }
                let outcome = env.step_direct(&mut policy)?;
                total += outcome.cost;
            }
            Ok((total / horizon as f64, outage as f64 / horizon as f64))
        })
        .collect::<Result<_>>()?;
    let (per_seed, outage) = runs.into_iter().unzip();
    Ok(EvalReport::from_replicates(per_seed, outage, horizon))
}

/// As [`evaluate_iid_policy`] for the Markovian model.
pub fn evaluate_markov_policy<P, F>(
    make_policy: F,
    env_template: &EnvMarkov,
    horizon: u64,
    n_seeds: u64,
    base_seed: u64,
) -> Result<EvalReport>
where
    P: MarkovPolicy,
    F: Fn(u64) -> P + Sync,
{
    let runs: Vec<(f64, f64)> = (0..n_seeds)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed + i;
            let mut env = env_template.reseeded(seed);
            let mut policy = make_policy(seed);
            let mut total = 0.0;
            let mut outage = 0u64;
            for _ in 0..horizon {
                if env.energy() < env.outage_threshold() {
                    outage += 1;
                }
                let outcome = env.step(&mut policy)?;
                total += outcome.cost;
            }
            Ok((total / horizon as f64, outage as f64 / horizon as f64))
        })
        .collect::<Result<_>>()?;
    let (per_seed, outage) = runs.into_iter().unzip();
    Ok(EvalReport::from_replicates(per_seed, outage, horizon))
}

/// One row of the probing-versus-no-probing comparison.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ProbeComparisonRow {
    pub lambda: f64,
    pub probe_cost: u32,
    pub sample_cost: u32,
    pub probing: EvalReport,
    pub no_probing: EvalReport,
    /// probing mean minus no-probing mean.
    pub difference: f64,
}

/// Solves the probing MDP and its direct-sampling counterpart on matched
/// parameters for every (lambda, E_p, E_s) point and simulates both
/// optimal policies.
#[allow(clippy::too_many_arguments)]
pub fn compare_probing(
    base: &crate::config::SystemConfig,
    channel: &crate::channel::IidChannel,
    lambdas: &[f64],
    cost_pairs: &[(u32, u32)],
    horizon: u64,
    n_seeds: u64,
    base_seed: u64,
    opts: &crate::solver::SolveOptions,
) -> Result<Vec<ProbeComparisonRow>> {
    use crate::energy::ArrivalDistribution;
    use crate::solver::iid_single::{value_iteration, value_iteration_no_probe};

    let mut rows = Vec::new();
    let mut point = 0u64;
    for &lambda in lambdas {
        let energy = ArrivalDistribution::bernoulli(lambda)?;
        for &(probe_cost, sample_cost) in cost_pairs {
            let cfg = crate::config::SystemConfig {
                probe_cost,
                sample_cost,
                ..base.clone()
            }
            .validate()?;
            let probing_sol = value_iteration(&cfg, channel, &energy, opts)?;
            let direct_sol = value_iteration_no_probe(&cfg, channel, &energy, opts)?;
            let template = EnvIid::new(cfg.clone(), channel.clone(), energy.clone(), 0);
            let seed = base_seed + point * 10_000;
            let probing =
                evaluate_iid_policy(|_| &probing_sol.policy, &template, horizon, n_seeds, seed)?;
            let no_probing = evaluate_direct_policy(
                |_| &direct_sol.policy,
                &template,
                horizon,
                n_seeds,
                seed + 5_000,
            )?;
            rows.push(ProbeComparisonRow {
                lambda,
                probe_cost,
                sample_cost,
                difference: probing.mean - no_probing.mean,
                probing,
                no_probing,
            });
            point += 1;
        }
    }
    Ok(rows)
}

pub mod policies {
    //! Table-backed and baseline policies for the simulator.

    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::{DirectPolicy, IidPolicy, MarkovPolicy};
    use crate::energy::HarvestState;
    use crate::solver::iid_multi::PolicyN;
    use crate::solver::iid_single::{NoProbePolicy, Policy as Policy1};
    use crate::solver::markov::PolicyM;

    impl IidPolicy for &Policy1 {
        fn probe(&mut self, energy: u32, ages: &[u32]) -> bool {
            Policy1::probe(self, energy, ages[0])
        }

        fn sample(&mut self, energy: u32, ages: &[u32], channel: usize) -> Option<usize> {
            Policy1::sample(self, energy, ages[0], channel).then_some(0)
        }
    }

    impl IidPolicy for &PolicyN {
        fn probe(&mut self, energy: u32, ages: &[u32]) -> bool {
            PolicyN::probe(self, energy, ages)
        }

        fn sample(&mut self, energy: u32, ages: &[u32], channel: usize) -> Option<usize> {
            PolicyN::sample(self, energy, ages, channel)
        }
    }

    impl DirectPolicy for &NoProbePolicy {
        fn sample(&mut self, energy: u32, ages: &[u32]) -> Option<usize> {
            NoProbePolicy::sample(self, energy, ages[0]).then_some(0)
        }
    }

    impl MarkovPolicy for &PolicyM {
        fn probe(
            &mut self,
            energy: u32,
            age: u32,
            tau: u32,
            c_prev: usize,
            h: HarvestState,
        ) -> bool {
            PolicyM::probe(self, energy, age, tau, c_prev, h)
        }

        fn sample(&mut self, energy: u32, age: u32, channel: usize, h: HarvestState) -> bool {
            PolicyM::sample(self, energy, age, channel, h)
        }
    }

    /// Never acts; ages saturate at the cap.
    pub struct AlwaysIdle;

    impl IidPolicy for AlwaysIdle {
        fn probe(&mut self, _: u32, _: &[u32]) -> bool {
            false
        }
        fn sample(&mut self, _: u32, _: &[u32], _: usize) -> Option<usize> {
            None
        }
    }

    impl DirectPolicy for AlwaysIdle {
        fn sample(&mut self, _: u32, _: &[u32]) -> Option<usize> {
            None
        }
    }

    /// Probes and samples the oldest process whenever affordable.
    pub struct AlwaysAct {
        pub probe_energy_min: u32,
    }

    impl IidPolicy for AlwaysAct {
        fn probe(&mut self, energy: u32, _: &[u32]) -> bool {
            energy >= self.probe_energy_min
        }
        fn sample(&mut self, _: u32, ages: &[u32], _: usize) -> Option<usize> {
            let max = *ages.iter().max().unwrap();
            ages.iter().position(|&t| t == max)
        }
    }

    /// Picks uniformly among feasible actions at both stages.
    pub struct UniformRandomIid {
        probe_energy_min: u32,
        num_processes: usize,
        rng: ChaCha8Rng,
    }

    impl UniformRandomIid {
        pub fn new(probe_energy_min: u32, num_processes: usize, seed: u64) -> Self {
            Self {
                probe_energy_min,
                num_processes,
                rng: ChaCha8Rng::seed_from_u64(seed),
            }
        }
    }

    impl IidPolicy for UniformRandomIid {
        fn probe(&mut self, energy: u32, _: &[u32]) -> bool {
            energy >= self.probe_energy_min && self.rng.gen_bool(0.5)
        }

        fn sample(&mut self, _: u32, _: &[u32], _: usize) -> Option<usize> {
            let choice = self.rng.gen_range(0..=self.num_processes);
            (choice > 0).then(|| choice - 1)
        }
    }

    /// Uniform-feasible baseline for the Markovian model.
    pub struct UniformRandomMarkov {
        probe_energy_min: u32,
        rng: ChaCha8Rng,
    }

    impl UniformRandomMarkov {
        pub fn new(probe_energy_min: u32, seed: u64) -> Self {
            Self {
                probe_energy_min,
                rng: ChaCha8Rng::seed_from_u64(seed),
            }
        }
    }

    impl MarkovPolicy for UniformRandomMarkov {
        fn probe(&mut self, energy: u32, _: u32, _: u32, _: usize, _: HarvestState) -> bool {
            energy >= self.probe_energy_min && self.rng.gen_bool(0.5)
        }

        fn sample(&mut self, _: u32, _: u32, _: usize, _: HarvestState) -> bool {
            self.rng.gen_bool(0.5)
        }
    }
}
