//! Energy-packet arrival models: a finite-support i.i.d. distribution with
//! mean lambda, optionally gated by a two-state harvesting/non-harvesting
//! Markov chain (no arrivals while non-harvesting).
//!
//! # Energy block schema
//!
//! ```toml
//! [energy]
//! bernoulli_lambda = 0.4   # Bernoulli(lambda) arrivals, the common case
//! # support = [0, 1, 2]    # or an explicit finite distribution
//! # probs = [0.5, 0.3, 0.2]
//!
//! [energy.harvest_chain]   # optional: Markov harvesting gate
//! to_non_harvesting = 0.3  # h_{1,2}
//! to_harvesting = 0.3      # h_{2,1}
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const PROB_SUM_TOL: f64 = 1e-12;

/// Finite-support distribution of energy-packet arrivals per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalDistribution {
    support: Vec<u32>,
    probs: Vec<f64>,
    mean: f64,
}

impl ArrivalDistribution {
    pub fn new(support: Vec<u32>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != probs.len() {
            return Err(Error::InvalidConfig(format!(
                "arrival support has {} points for {} probabilities",
                support.len(),
                probs.len()
            )));
        }
        for (i, &p) in probs.iter().enumerate() {
            if p.is_nan() || p < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "arrival probs[{i}] = {p} is negative"
                )));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidConfig(format!(
                "arrival probs sum to {sum}, expected 1 within {PROB_SUM_TOL:.0e}"
            )));
        }
        let mean: f64 = support
            .iter()
            .zip(&probs)
            .map(|(&a, &p)| a as f64 * p)
            .sum();
        if mean.is_nan() || mean <= 0.0 {
            return Err(Error::InvalidConfig(
                "arrival mean lambda must be positive".into(),
            ));
        }
        Ok(Self {
            support,
            probs,
            mean,
        })
    }

    /// Bernoulli(lambda): one packet with probability lambda, else none.
    /// This is the arrival model of all reference experiments.
    pub fn bernoulli(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "Bernoulli lambda must lie in (0, 1], got {lambda}"
            )));
        }
        Self::new(vec![0, 1], vec![1.0 - lambda, lambda])
    }

    /// Mean arrival rate lambda.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Support points paired with their probabilities, for exact
    /// expectations inside Bellman backups.
    pub fn outcomes(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.support.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn draw(&self, rng: &mut impl Rng) -> u32 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (&a, &p) in self.support.iter().zip(&self.probs) {
            acc += p;
            if u < acc {
                return a;
            }
        }
        *self.support.last().unwrap()
    }
}

/// Harvesting state of the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HarvestState {
    /// H_1: arrivals follow the configured distribution.
    Harvesting,
    /// H_2: the generation rate is zero.
    NonHarvesting,
}

impl HarvestState {
    pub const ALL: [HarvestState; 2] = [HarvestState::Harvesting, HarvestState::NonHarvesting];

    /// Table index: H_1 -> 0, H_2 -> 1.
    pub fn idx(self) -> usize {
        match self {
            HarvestState::Harvesting => 0,
            HarvestState::NonHarvesting => 1,
        }
    }

    pub fn from_idx(idx: usize) -> Self {
        match idx {
            0 => HarvestState::Harvesting,
            1 => HarvestState::NonHarvesting,
            _ => panic!("harvest state index {idx}"),
        }
    }

    /// Short label used in CSV outputs.
    pub fn label(self) -> &'static str {
        match self {
            HarvestState::Harvesting => "H1",
            HarvestState::NonHarvesting => "H2",
        }
    }
}

/// Two-state harvesting chain: h_{1,2} leaves the harvesting state,
/// h_{2,1} re-enters it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarvestChain {
    /// Transition probability H_1 -> H_2.
    pub to_non_harvesting: f64,
    /// Transition probability H_2 -> H_1.
    pub to_harvesting: f64,
}

impl HarvestChain {
    pub fn new(to_non_harvesting: f64, to_harvesting: f64) -> Result<Self> {
        for (name, p) in [("h_{1,2}", to_non_harvesting), ("h_{2,1}", to_harvesting)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} = {p} outside [0, 1]")));
            }
        }
        Ok(Self {
            to_non_harvesting,
            to_harvesting,
        })
    }

    /// Probability of ending in each harvesting state after one step.
    pub fn transition_probs(&self, from: HarvestState) -> [(HarvestState, f64); 2] {
        match from {
            HarvestState::Harvesting => [
                (HarvestState::Harvesting, 1.0 - self.to_non_harvesting),
                (HarvestState::NonHarvesting, self.to_non_harvesting),
            ],
            HarvestState::NonHarvesting => [
                (HarvestState::Harvesting, self.to_harvesting),
                (HarvestState::NonHarvesting, 1.0 - self.to_harvesting),
            ],
        }
    }

    pub fn step(&self, from: HarvestState, rng: &mut impl Rng) -> HarvestState {
        let leave = match from {
            HarvestState::Harvesting => self.to_non_harvesting,
            HarvestState::NonHarvesting => self.to_harvesting,
        };
        if rng.gen_bool(leave) {
            match from {
                HarvestState::Harvesting => HarvestState::NonHarvesting,
                HarvestState::NonHarvesting => HarvestState::Harvesting,
            }
        } else {
            from
        }
    }
}

/// Draws one slot's arrivals, gated by the harvesting state when present.
pub fn draw_arrival(
    dist: &ArrivalDistribution,
    h_state: Option<HarvestState>,
    rng: &mut impl Rng,
) -> u32 {
    match h_state {
        Some(HarvestState::NonHarvesting) => 0,
        _ => dist.draw(rng),
    }
}

/// Adds arrivals to the buffer, clipping at capacity: min(E + A, B).
pub fn buffer_add(energy: u32, arrivals: u32, capacity: u32) -> u32 {
    (energy + arrivals).min(capacity)
}

/// Energy block of the experiment config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergySpec {
    /// Bernoulli arrival rate. Mutually exclusive with `support`/`probs`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bernoulli_lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    /// Two-state harvesting chain gating the arrivals (Markov model only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harvest_chain: Option<HarvestChain>,
}

impl EnergySpec {
    pub fn bernoulli(lambda: f64) -> Self {
        Self {
            bernoulli_lambda: Some(lambda),
            support: None,
            probs: None,
            harvest_chain: None,
        }
    }

    pub fn with_harvest_chain(mut self, chain: HarvestChain) -> Self {
        self.harvest_chain = Some(chain);
        self
    }

    pub fn check(&self) -> Result<()> {
        self.build_distribution()?;
        if let Some(chain) = &self.harvest_chain {
            HarvestChain::new(chain.to_non_harvesting, chain.to_harvesting)?;
        }
        Ok(())
    }

    pub fn build_distribution(&self) -> Result<ArrivalDistribution> {
        match (self.bernoulli_lambda, &self.support, &self.probs) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => Err(Error::InvalidConfig(
                "energy block has both bernoulli_lambda and an explicit distribution".into(),
            )),
            (Some(lambda), None, None) => ArrivalDistribution::bernoulli(lambda),
            (None, Some(support), Some(probs)) => {
                ArrivalDistribution::new(support.clone(), probs.clone())
            }
            _ => Err(Error::InvalidConfig(
                "energy block needs bernoulli_lambda or support + probs".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bernoulli_mean_matches_lambda() {
        let dist = ArrivalDistribution::bernoulli(0.4).unwrap();
        assert!((dist.mean() - 0.4).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000;
        let total: u64 = (0..n)
            .map(|_| draw_arrival(&dist, Some(HarvestState::Harvesting), &mut rng) as u64)
            .sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 0.4).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn non_harvesting_state_yields_zero_arrivals() {
        let dist = ArrivalDistribution::bernoulli(0.9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10_000 {
            assert_eq!(
                draw_arrival(&dist, Some(HarvestState::NonHarvesting), &mut rng),
                0
            );
        }
    }

    #[test]
    fn unit_lambda_always_arrives() {
        let dist = ArrivalDistribution::bernoulli(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            assert_eq!(dist.draw(&mut rng), 1);
        }
    }

    #[test]
    fn harvest_chain_transition_frequency() {
        let chain = HarvestChain::new(0.3, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 1_000_000;
        let leaves = (0..n)
            .filter(|_| {
                chain.step(HarvestState::Harvesting, &mut rng) == HarvestState::NonHarvesting
            })
            .count();
        let freq = leaves as f64 / n as f64;
        assert!((freq - 0.3).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn harvest_chain_degenerate_rows() {
        let stay = HarvestChain::new(0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..1000 {
            assert_eq!(
                stay.step(HarvestState::Harvesting, &mut rng),
                HarvestState::Harvesting
            );
            assert_eq!(
                stay.step(HarvestState::NonHarvesting, &mut rng),
                HarvestState::Harvesting
            );
        }
    }

    #[test]
    fn buffer_add_clips_at_capacity() {
        assert_eq!(buffer_add(12, 1, 12), 12);
        assert_eq!(buffer_add(3, 1, 12), 4);
        assert_eq!(buffer_add(11, 3, 12), 12);
        // Never below the incoming level, never above capacity.
        for e in 0..=12u32 {
            for a in 0..=5u32 {
                let next = buffer_add(e, a, 12);
                assert!(next >= e && next <= 12);
            }
        }
    }

    #[test]
    fn rejects_zero_mean_and_bad_vectors() {
        assert!(ArrivalDistribution::new(vec![0], vec![1.0]).is_err());
        assert!(ArrivalDistribution::new(vec![0, 1], vec![0.7, 0.7]).is_err());
        assert!(ArrivalDistribution::bernoulli(0.0).is_err());
        assert!(ArrivalDistribution::bernoulli(1.2).is_err());
    }

    #[test]
    fn spec_block_builds_either_form() {
        let bern = EnergySpec::bernoulli(0.4);
        assert!((bern.build_distribution().unwrap().mean() - 0.4).abs() < 1e-15);

        let explicit = EnergySpec {
            bernoulli_lambda: None,
            support: Some(vec![0, 2]),
            probs: Some(vec![0.5, 0.5]),
            harvest_chain: None,
        };
        assert!((explicit.build_distribution().unwrap().mean() - 1.0).abs() < 1e-15);

        let conflicted = EnergySpec {
            bernoulli_lambda: Some(0.4),
            support: Some(vec![0, 1]),
            probs: Some(vec![0.6, 0.4]),
            harvest_chain: None,
        };
        assert!(conflicted.build_distribution().is_err());
    }
}
