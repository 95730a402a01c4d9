//! Slot-level environment for the Markovian channel and harvesting model
//! (single process). The true channel state evolves every slot and is
//! revealed only by probing; the agent's observable state carries the age,
//! the slots since the last probe (tau, saturating at the cap), the state
//! seen at that probe, and the harvesting state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::MarkovChannel;
use crate::config::SystemConfig;
use crate::energy::{buffer_add, draw_arrival, ArrivalDistribution, HarvestChain, HarvestState};
use crate::{Error, Result};

use super::MarkovPolicy;

/// One Markov-model slot: actions, observations, realized cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOutcomeM {
    pub cost: f64,
    pub probed: bool,
    /// Internal index of the probed channel state.
    pub channel: Option<usize>,
    pub sampled: bool,
    pub delivered: Option<bool>,
    pub arrivals: u32,
    /// Harvesting state entering the next slot.
    pub h_next: HarvestState,
}

#[derive(Debug, Clone)]
pub struct EnvMarkov {
    cfg: SystemConfig,
    channel: MarkovChannel,
    energy: ArrivalDistribution,
    chain: HarvestChain,
    e: u32,
    age: u32,
    tau: u32,
    c_prev: usize,
    h: HarvestState,
    /// Hidden current channel state; probing reveals it.
    true_channel: usize,
    slot: u64,
    rng: ChaCha8Rng,
}

impl EnvMarkov {
    /// Starts with a full buffer, age 1, and a probe assumed one slot ago
    /// at the internally-first (best) channel state; the hidden state is
    /// drawn from that state's transition row so tau = 1 is exact.
    pub fn new(
        cfg: SystemConfig,
        channel: MarkovChannel,
        energy: ArrivalDistribution,
        chain: HarvestChain,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c_prev = 0;
        let true_channel = channel.draw_next(c_prev, &mut rng);
        Self {
            e: cfg.buffer_capacity,
            age: 1,
            tau: 1,
            c_prev,
            h: HarvestState::Harvesting,
            true_channel,
            slot: 0,
            rng,
            cfg,
            channel,
            energy,
            chain,
        }
    }

    pub fn reseeded(&self, seed: u64) -> Self {
        Self::new(
            self.cfg.clone(),
            self.channel.clone(),
            self.energy.clone(),
            self.chain,
            seed,
        )
    }

    pub fn energy(&self) -> u32 {
        self.e
    }

    pub fn age(&self) -> u32 {
        self.age
    }

    pub fn tau(&self) -> u32 {
        self.tau
    }

    pub fn c_prev(&self) -> usize {
        self.c_prev
    }

    pub fn harvest_state(&self) -> HarvestState {
        self.h
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn channel(&self) -> &MarkovChannel {
        &self.channel
    }

    pub fn outage_threshold(&self) -> u32 {
        self.cfg.probe_feasible_energy()
    }

    pub fn step<P: MarkovPolicy + ?Sized>(&mut self, policy: &mut P) -> Result<SlotOutcomeM> {
        let e0 = self.e;
        let mut spent = 0u32;
        let mut probed = false;
        let mut channel_state = None;
        let mut sampled = false;
        let mut delivered = None;

        if policy.probe(e0, self.age, self.tau, self.c_prev, self.h) {
            if e0 < self.cfg.probe_cost {
                return Err(Error::InfeasibleAction(format!(
                    "probe with E = {e0} < E_p = {}",
                    self.cfg.probe_cost
                )));
            }
            probed = true;
            spent += self.cfg.probe_cost;
            let c = self.true_channel;
            channel_state = Some(c);

            if policy.sample(e0, self.age, c, self.h) {
                if e0 < self.cfg.probe_cost + self.cfg.sample_cost {
                    return Err(Error::InfeasibleAction(format!(
                        "sample after probe with E = {e0} < E_p + E_s = {}",
                        self.cfg.probe_cost + self.cfg.sample_cost
                    )));
                }
                spent += self.cfg.sample_cost;
                sampled = true;
                delivered = Some(self.channel.state(c).sample_success(&mut self.rng));
            }
        }

        let success = delivered == Some(true);
        let cost = if success { 0.0 } else { self.age as f64 };

        let arrivals = draw_arrival(&self.energy, Some(self.h), &mut self.rng);
        self.e = buffer_add(e0 - spent, arrivals, self.cfg.buffer_capacity);
        let h_next = self.chain.step(self.h, &mut self.rng);
        self.h = h_next;

        self.age = if success {
            1
        } else {
            (self.age + 1).min(self.cfg.age_cap)
        };
        if probed {
            self.tau = 1;
            self.c_prev = channel_state.unwrap();
        } else {
            self.tau = (self.tau + 1).min(self.cfg.age_cap);
        }
        debug_assert!(self.tau <= self.age);

        self.true_channel = self.channel.draw_next(self.true_channel, &mut self.rng);
        self.slot += 1;

        Ok(SlotOutcomeM {
            cost,
            probed,
            channel: channel_state,
            sampled,
            delivered,
            arrivals,
            h_next,
        })
    }
}
