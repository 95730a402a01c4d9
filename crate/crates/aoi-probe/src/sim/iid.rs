//! Slot-level environment for the i.i.d. channel and arrival model,
//! covering any number of processes and both action models (two-stage
//! probing and direct sampling).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::IidChannel;
use crate::config::SystemConfig;
use crate::energy::{buffer_add, ArrivalDistribution};
use crate::{Error, Result};

use super::{DirectPolicy, IidPolicy};

/// What one slot did and observed. Observations are present iff the
/// corresponding action occurred.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOutcome {
    /// Realized AoI cost: sum of ages, counting a successfully delivered
    /// process as 0.
    pub cost: f64,
    pub probed: bool,
    /// Internal index of the probed channel state.
    pub channel: Option<usize>,
    /// Sampled process, if any.
    pub sampled: Option<usize>,
    /// Delivery indicator r, present iff a sample was transmitted.
    pub delivered: Option<bool>,
    /// Energy packets harvested this slot.
    pub arrivals: u32,
}

/// The i.i.d. environment: buffer level, per-process ages, and a seeded
/// stream of channel/arrival randomness.
#[derive(Debug, Clone)]
pub struct EnvIid {
    cfg: SystemConfig,
    channel: IidChannel,
    energy: ArrivalDistribution,
    e: u32,
    ages: Vec<u32>,
    slot: u64,
    rng: ChaCha8Rng,
}

impl EnvIid {
    /// Starts with a full buffer and all ages at 1.
    pub fn new(
        cfg: SystemConfig,
        channel: IidChannel,
        energy: ArrivalDistribution,
        seed: u64,
    ) -> Self {
        let ages = vec![1; cfg.num_processes];
        let e = cfg.buffer_capacity;
        Self {
            cfg,
            channel,
            energy,
            e,
            ages,
            slot: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Fresh copy of this environment, reset to the start state with a new
    /// stream.
    pub fn reseeded(&self, seed: u64) -> Self {
        Self::new(
            self.cfg.clone(),
            self.channel.clone(),
            self.energy.clone(),
            seed,
        )
    }

    pub fn energy(&self) -> u32 {
        self.e
    }

    pub fn ages(&self) -> &[u32] {
        &self.ages
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn channel(&self) -> &IidChannel {
        &self.channel
    }

    /// Energy below which the full probe-then-sample action is unaffordable.
    pub fn outage_threshold(&self) -> u32 {
        self.cfg.probe_feasible_energy()
    }

    pub fn sample_cost(&self) -> u32 {
        self.cfg.sample_cost
    }

    /// Runs one slot under the two-stage contract: the policy first sees
    /// the state and decides the probe; if it probes, it sees the revealed
    /// channel state and decides the sample.
    pub fn step<P: IidPolicy + ?Sized>(&mut self, policy: &mut P) -> Result<SlotOutcome> {
        let e0 = self.e;
        let mut spent = 0u32;
        let mut probed = false;
        let mut channel_state = None;
        let mut sampled = None;
        let mut delivered = None;

        if policy.probe(e0, &self.ages) {
            if e0 < self.cfg.probe_cost {
                return Err(Error::InfeasibleAction(format!(
                    "probe with E = {e0} < E_p = {}",
                    self.cfg.probe_cost
                )));
            }
            probed = true;
            spent += self.cfg.probe_cost;
            let c = self.channel.draw_state(&mut self.rng);
            channel_state = Some(c);

            if let Some(k) = policy.sample(e0, &self.ages, c) {
                if k >= self.cfg.num_processes {
                    return Err(Error::InfeasibleAction(format!("no process {k}")));
                }
                if e0 < self.cfg.probe_cost + self.cfg.sample_cost {
                    return Err(Error::InfeasibleAction(format!(
                        "sample after probe with E = {e0} < E_p + E_s = {}",
                        self.cfg.probe_cost + self.cfg.sample_cost
                    )));
                }
                spent += self.cfg.sample_cost;
                sampled = Some(k);
                delivered = Some(self.channel.state(c).sample_success(&mut self.rng));
            }
        }

        Ok(self.finish_slot(e0, spent, probed, channel_state, sampled, delivered))
    }

    /// Runs one slot of the no-probing system: a single sampling decision
    /// paying only E_s, with the channel never observed.
    pub fn step_direct<P: DirectPolicy + ?Sized>(&mut self, policy: &mut P) -> Result<SlotOutcome> {
        let e0 = self.e;
        let mut spent = 0u32;
        let mut sampled = None;
        let mut delivered = None;

        if let Some(k) = policy.sample(e0, &self.ages) {
            if k >= self.cfg.num_processes {
                return Err(Error::InfeasibleAction(format!("no process {k}")));
            }
            if e0 < self.cfg.sample_cost {
                return Err(Error::InfeasibleAction(format!(
                    "sample with E = {e0} < E_s = {}",
                    self.cfg.sample_cost
                )));
            }
            spent += self.cfg.sample_cost;
            sampled = Some(k);
            // The hidden channel state still determines delivery.
            let c = self.channel.draw_state(&mut self.rng);
            delivered = Some(self.channel.state(c).sample_success(&mut self.rng));
        }

        Ok(self.finish_slot(e0, spent, false, None, sampled, delivered))
    }

    fn finish_slot(
        &mut self,
        e0: u32,
        spent: u32,
        probed: bool,
        channel: Option<usize>,
        sampled: Option<usize>,
        delivered: Option<bool>,
    ) -> SlotOutcome {
        let success = delivered == Some(true);
        let mut cost = 0.0;
        for (k, &t) in self.ages.iter().enumerate() {
            if !(success && sampled == Some(k)) {
                cost += t as f64;
            }
        }

        let arrivals = self.energy.draw(&mut self.rng);
        self.e = buffer_add(e0 - spent, arrivals, self.cfg.buffer_capacity);
        for (k, t) in self.ages.iter_mut().enumerate() {
            *t = if success && sampled == Some(k) {
                1
            } else {
                (*t + 1).min(self.cfg.age_cap)
            };
        }
        self.slot += 1;

        SlotOutcome {
            cost,
            probed,
            channel,
            sampled,
            delivered,
            arrivals,
        }
    }
}
