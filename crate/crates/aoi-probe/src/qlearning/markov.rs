//! Q-learning for the Markovian channel + harvesting model. Mirrors the
//! i.i.d. learner with the richer state (E, T, tau, C_prev, H) and
//! intermediate state (E, T, C, H); while non-harvesting the observed
//! arrival count is 0, which is exactly what the update targets use.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::MarkovChannel;
use crate::config::SystemConfig;
use crate::energy::{buffer_add, HarvestState};
use crate::sim::{EnvMarkov, MarkovPolicy, SlotOutcomeM};
use crate::solver::markov::MarkovGrid;
use crate::{Error, Result};

use super::{ChannelKnowledge, CurvePoint, LearningConfig, Ring, StepSizeSchedule};

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct QTablesMarkov {
    grid: MarkovGrid,
    probe_energy_min: u32,
    q_state: Vec<f64>,
    q_inter: Vec<f64>,
    visits_state: Vec<u64>,
    visits_inter: Vec<u64>,
    pub slots: u64,
}

impl QTablesMarkov {
    pub fn new(cfg: &SystemConfig, num_channel_states: usize, init: f64) -> Self {
        let grid = MarkovGrid::new(cfg, num_channel_states);
        let e_min = cfg.probe_feasible_energy();
        let inter_len = (cfg.buffer_capacity - e_min + 1) as usize
            * cfg.age_cap as usize
            * num_channel_states
            * 2;
        Self {
            probe_energy_min: e_min,
            q_state: vec![init; grid.len() * 2],
            q_inter: vec![init; inter_len * 2],
            visits_state: vec![0; grid.len() * 2],
            visits_inter: vec![0; inter_len * 2],
            slots: 0,
            grid,
        }
    }

    pub fn zeros(cfg: &SystemConfig, num_channel_states: usize) -> Self {
        Self::new(cfg, num_channel_states, 0.0)
    }

    pub fn probe_energy_min(&self) -> u32 {
        self.probe_energy_min
    }

    #[inline]
    fn sidx(&self, e: u32, t: u32, tau: u32, c_prev: usize, h: HarvestState, probe: bool) -> usize {
        self.grid.idx(e, t, tau, c_prev, h) * 2 + probe as usize
    }

    #[inline]
    fn iidx(&self, e: u32, t: u32, c: usize, h: HarvestState, sample: bool) -> usize {
        debug_assert!(e >= self.probe_energy_min);
        ((((e - self.probe_energy_min) as usize * self.grid.age_cap as usize + (t - 1) as usize)
            * self.grid.num_channel_states
            + c)
            * 2
            + h.idx())
            * 2
            + sample as usize
    }

    pub fn q_state(
        &self,
        e: u32,
        t: u32,
        tau: u32,
        c_prev: usize,
        h: HarvestState,
        probe: bool,
    ) -> f64 {
        self.q_state[self.sidx(e, t, tau, c_prev, h, probe)]
    }

    pub fn q_intermediate(&self, e: u32, t: u32, c: usize, h: HarvestState, sample: bool) -> f64 {
        self.q_inter[self.iidx(e, t, c, h, sample)]
    }

    pub fn visits_state(
        &self,
        e: u32,
        t: u32,
        tau: u32,
        c_prev: usize,
        h: HarvestState,
        probe: bool,
    ) -> u64 {
        self.visits_state[self.sidx(e, t, tau, c_prev, h, probe)]
    }

    pub fn total_state_visits(&self) -> u64 {
        self.visits_state.iter().sum()
    }

    pub fn min_q_state(&self, e: u32, t: u32, tau: u32, c_prev: usize, h: HarvestState) -> f64 {
        let idle = self.q_state(e, t, tau, c_prev, h, false);
        if e < self.probe_energy_min {
            idle
        } else {
            idle.min(self.q_state(e, t, tau, c_prev, h, true))
        }
    }

    pub fn greedy_probe(&self, e: u32, t: u32, tau: u32, c_prev: usize, h: HarvestState) -> bool {
        e >= self.probe_energy_min
            && self.q_state(e, t, tau, c_prev, h, true) < self.q_state(e, t, tau, c_prev, h, false)
    }

    pub fn greedy_sample(&self, e: u32, t: u32, c: usize, h: HarvestState) -> bool {
        self.q_intermediate(e, t, c, h, true) < self.q_intermediate(e, t, c, h, false)
    }

    pub fn greedy(&self) -> GreedyMarkov<'_> {
        GreedyMarkov { q: self }
    }
}

pub struct GreedyMarkov<'a> {
    q: &'a QTablesMarkov,
}

impl MarkovPolicy for GreedyMarkov<'_> {
    fn probe(&mut self, e: u32, t: u32, tau: u32, c_prev: usize, h: HarvestState) -> bool {
        self.q.greedy_probe(e, t, tau, c_prev, h)
    }

    fn sample(&mut self, e: u32, t: u32, c: usize, h: HarvestState) -> bool {
        self.q.greedy_sample(e, t, c, h)
    }
}

/// One observed slot of the Markovian environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotRecordM {
    pub energy: u32,
    pub age: u32,
    pub tau: u32,
    pub c_prev: usize,
    pub h: HarvestState,
    pub probed: bool,
    pub channel: Option<usize>,
    pub sampled: bool,
    pub delivered: Option<bool>,
    pub arrivals: u32,
    pub h_next: HarvestState,
}

impl SlotRecordM {
    #[allow(clippy::too_many_arguments)]
    pub fn from_outcome(
        energy: u32,
        age: u32,
        tau: u32,
        c_prev: usize,
        h: HarvestState,
        outcome: &SlotOutcomeM,
    ) -> Self {
        Self {
            energy,
            age,
            tau,
            c_prev,
            h,
            probed: outcome.probed,
            channel: outcome.channel,
            sampled: outcome.sampled,
            delivered: outcome.delivered,
            arrivals: outcome.arrivals,
            h_next: outcome.h_next,
        }
    }

    fn check(&self, q: &QTablesMarkov) -> Result<()> {
        if self.tau < 1 || self.tau > self.age {
            return Err(Error::MismatchedRecord(format!(
                "tau = {} outside [1, T = {}]",
                self.tau, self.age
            )));
        }
        if self.probed && self.energy < q.probe_energy_min {
            return Err(Error::MismatchedRecord(format!(
                "probed with E = {} < E_p + E_s = {}",
                self.energy, q.probe_energy_min
            )));
        }
        if self.sampled && !self.probed {
            return Err(Error::MismatchedRecord("sampled without probing".into()));
        }
        if self.probed != self.channel.is_some() {
            return Err(Error::MismatchedRecord(
                "channel observation must be present iff the slot probed".into(),
            ));
        }
        if self.sampled != self.delivered.is_some() {
            return Err(Error::MismatchedRecord(
                "delivery indicator must be present iff the slot sampled".into(),
            ));
        }
        if self.h == HarvestState::NonHarvesting && self.arrivals != 0 {
            return Err(Error::MismatchedRecord(
                "non-harvesting slots generate zero energy packets".into(),
            ));
        }
        Ok(())
    }
}

pub use super::iid::UpdateStats;

/// Applies the matching updates among the five Markovian forms. Probing
/// resets tau to 1 and stores the probed state as the next C_prev, which
/// is what the successor lookups below encode.
pub fn q_update_markov(
    q: &mut QTablesMarkov,
    rec: &SlotRecordM,
    cfg: &SystemConfig,
    channel: &MarkovChannel,
    schedule: &StepSizeSchedule,
    mode: ChannelKnowledge,
) -> Result<UpdateStats> {
    rec.check(q)?;
    let alpha = cfg.discount;
    let t_next = cfg.age_successor(rec.age);
    let tau_next = (rec.tau + 1).min(q.grid.tau_cap);
    let mut stats = UpdateStats::default();

    let mut apply_state = |q: &mut QTablesMarkov, probe: bool, target: f64| {
        let idx = q.sidx(rec.energy, rec.age, rec.tau, rec.c_prev, rec.h, probe);
        let d = schedule.step(q.visits_state[idx]);
        q.q_state[idx] += d * (target - q.q_state[idx]);
        q.visits_state[idx] += 1;
        stats.updates += 1;
        stats.step_sum += d;
    };

    if !rec.probed {
        let e_next = buffer_add(rec.energy, rec.arrivals, cfg.buffer_capacity);
        let target = rec.age as f64
            + alpha * q.min_q_state(e_next, t_next, tau_next, rec.c_prev, rec.h_next);
        apply_state(q, false, target);
        q.slots += 1;
        return Ok(stats);
    }

    let c = rec.channel.unwrap();
    let state_target = q
        .q_intermediate(rec.energy, rec.age, c, rec.h, false)
        .min(q.q_intermediate(rec.energy, rec.age, c, rec.h, true));
    let (inter_sample, inter_target) = if !rec.sampled {
        let e_next = buffer_add(
            rec.energy - cfg.probe_cost,
            rec.arrivals,
            cfg.buffer_capacity,
        );
        (
            false,
            rec.age as f64 + alpha * q.min_q_state(e_next, t_next, 1, c, rec.h_next),
        )
    } else {
        let e_next = buffer_add(
            rec.energy - cfg.probe_cost - cfg.sample_cost,
            rec.arrivals,
            cfg.buffer_capacity,
        );
        let p = match mode {
            ChannelKnowledge::Known => channel.state(c).success_prob,
            ChannelKnowledge::Unknown => rec.delivered.unwrap() as u8 as f64,
        };
        let target = rec.age as f64 * (1.0 - p)
            + alpha
                * (p * q.min_q_state(e_next, 1, 1, c, rec.h_next)
                    + (1.0 - p) * q.min_q_state(e_next, t_next, 1, c, rec.h_next));
        (true, target)
    };

    apply_state(q, true, state_target);
    let idx = q.iidx(rec.energy, rec.age, c, rec.h, inter_sample);
    let d = schedule.step(q.visits_inter[idx]);
    q.q_inter[idx] += d * (inter_target - q.q_inter[idx]);
    q.visits_inter[idx] += 1;
    stats.updates += 1;
    stats.step_sum += d;

    q.slots += 1;
    Ok(stats)
}

struct EpsGreedy<'a> {
    q: &'a QTablesMarkov,
    epsilon: f64,
    rng: &'a mut ChaCha8Rng,
}

impl MarkovPolicy for EpsGreedy<'_> {
    fn probe(&mut self, e: u32, t: u32, tau: u32, c_prev: usize, h: HarvestState) -> bool {
        if e < self.q.probe_energy_min {
            return false;
        }
        if self.rng.gen_bool(self.epsilon) {
            self.rng.gen_bool(0.5)
        } else {
            self.q.greedy_probe(e, t, tau, c_prev, h)
        }
    }

    fn sample(&mut self, e: u32, t: u32, c: usize, h: HarvestState) -> bool {
        if self.rng.gen_bool(self.epsilon) {
            self.rng.gen_bool(0.5)
        } else {
            self.q.greedy_sample(e, t, c, h)
        }
    }
}

/// Runs the two-stage learner on the Markovian environment.
pub fn run_learning_markov(
    env: &mut EnvMarkov,
    lc: &LearningConfig,
    action_seed: u64,
) -> Result<(QTablesMarkov, Vec<CurvePoint>)> {
    run_learning_markov_from(env, lc, action_seed, None)
}

/// As [`run_learning_markov`], optionally resuming from saved tables.
pub fn run_learning_markov_from(
    env: &mut EnvMarkov,
    lc: &LearningConfig,
    action_seed: u64,
    initial: Option<QTablesMarkov>,
) -> Result<(QTablesMarkov, Vec<CurvePoint>)> {
    let cfg = env.config().clone();
    let channel = env.channel().clone();
    let mut q = match initial {
        Some(q) => {
            if q.q_state.len() != MarkovGrid::new(&cfg, channel.num_states()).len() * 2 {
                return Err(Error::InvalidConfig(
                    "resumed Q tables do not match this environment's grid".into(),
                ));
            }
            q
        }
        None => QTablesMarkov::new(
            &cfg,
            channel.num_states(),
            lc.optimistic_init.unwrap_or(0.0),
        ),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(action_seed);
    let mut cost_window = Ring::new(lc.window as usize);
    let mut step_window = Ring::new(lc.window as usize);
    let mut curve = Vec::new();

    for slot in 0..lc.horizon {
        let epsilon = lc.exploration.at(slot);
        let (e0, age0, tau0, c_prev0, h0) = (
            env.energy(),
            env.age(),
            env.tau(),
            env.c_prev(),
            env.harvest_state(),
        );
        let outcome = {
            let mut behavior = EpsGreedy {
                q: &q,
                epsilon,
                rng: &mut rng,
            };
            env.step(&mut behavior)?
        };
        let rec = SlotRecordM::from_outcome(e0, age0, tau0, c_prev0, h0, &outcome);
        let stats = q_update_markov(&mut q, &rec, &cfg, &channel, &lc.steps, lc.mode)?;

        cost_window.push(outcome.cost);
        step_window.push(stats.step_sum / stats.updates.max(1) as f64);
        if (slot + 1) % lc.report_every == 0 {
            curve.push(CurvePoint {
                slot: slot + 1,
                window_aoi: cost_window.mean(),
                epsilon,
                mean_step_size: step_window.mean(),
            });
        }
    }
    Ok((q, curve))
}
