//! Scalar system parameters shared by every solver and the simulator.
//!
//! # Config file schema
//!
//! Experiments are described by a TOML file with three blocks. `[system]`
//! maps directly onto [`SystemConfig`]; `[channel]` and `[energy]` are the
//! blocks documented in [`crate::channel`] and [`crate::energy`].
//!
//! ```toml
//! [system]
//! buffer_capacity = 12   # B, energy packets
//! probe_cost = 1         # E_p
//! sample_cost = 1        # E_s
//! num_processes = 1      # N
//! discount = 0.95        # alpha, strictly inside (0,1)
//! age_cap = 50           # T_max, saturating age bound
//!
//! [channel]
//! success_probs = [0.9, 0.7, 0.5, 0.3, 0.1]
//! occurrence_probs = [0.2, 0.2, 0.2, 0.2, 0.2]  # i.i.d. channel
//! # transition_matrix = [[0.9, 0.1], [0.1, 0.9]] # or Markov channel
//!
//! [energy]
//! bernoulli_lambda = 0.4
//! # support = [0, 1]     # or an explicit finite distribution
//! # probs = [0.6, 0.4]
//!
//! [energy.harvest_chain]  # optional two-state harvesting chain
//! to_non_harvesting = 0.3  # h_{1,2}
//! to_harvesting = 0.3      # h_{2,1}
//! ```
//!
//! Ages are unbounded in the underlying model; every table in this crate
//! caps them at `age_cap` with a saturating successor `min(T+1, T_max)`.
//! With `discount < 1` the truncated tail contributes geometrically little,
//! and thresholds within 2 of the cap are flagged as truncation-affected
//! by the extractors.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSpec;
use crate::energy::EnergySpec;
use crate::{Error, Result};

/// Validated scalar parameters of the probing/sampling MDPs.
///
/// Immutable after [`SystemConfig::validate`]; safe to share across
/// concurrent workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Energy buffer size B, in energy packets.
    pub buffer_capacity: u32,
    /// Energy spent probing the channel once (E_p).
    pub probe_cost: u32,
    /// Energy spent sensing and transmitting one packet (E_s).
    pub sample_cost: u32,
    /// Number of processes N observed by the source.
    pub num_processes: usize,
    /// Discount factor alpha, strictly inside (0, 1). The time-averaged
    /// objective is approximated by the discounted problem with alpha
    /// near 1.
    pub discount: f64,
    /// Saturating upper bound T_max on every age coordinate.
    pub age_cap: u32,
}

impl SystemConfig {
    /// Default age cap for value-iteration experiments.
    pub const DEFAULT_AGE_CAP_SOLVE: u32 = 50;
    /// Default age cap for Q-learning demos, keeping the table small.
    pub const DEFAULT_AGE_CAP_LEARN: u32 = 7;
    /// Default discount factor.
    pub const DEFAULT_DISCOUNT: f64 = 0.95;

    /// Checks every construction invariant, returning the config unchanged
    /// iff all hold.
    pub fn validate(self) -> Result<Self> {
        if self.probe_cost == 0 {
            return Err(Error::InvalidConfig("probe_cost must be positive".into()));
        }
        if self.sample_cost == 0 {
            return Err(Error::InvalidConfig("sample_cost must be positive".into()));
        }
        if self.probe_cost + self.sample_cost > self.buffer_capacity {
            return Err(Error::InvalidConfig(format!(
                "probe_cost + sample_cost = {} exceeds buffer_capacity = {}; \
                 no state would ever permit probing and sampling",
                self.probe_cost + self.sample_cost,
                self.buffer_capacity
            )));
        }
        if self.num_processes == 0 {
            return Err(Error::InvalidConfig(
                "num_processes must be positive".into(),
            ));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "discount must lie strictly inside (0, 1), got {}",
                self.discount
            )));
        }
        if self.age_cap < 2 {
            return Err(Error::InvalidConfig(format!(
                "age_cap must be at least 2, got {}",
                self.age_cap
            )));
        }
        Ok(self)
    }

    /// Lowest energy level at which the two-stage probe-then-sample action
    /// is affordable.
    pub fn probe_feasible_energy(&self) -> u32 {
        self.probe_cost + self.sample_cost
    }

    /// Saturating age successor `min(T + 1, T_max)`.
    pub fn age_successor(&self, age: u32) -> u32 {
        (age + 1).min(self.age_cap)
    }
}

/// A full experiment description: system scalars plus channel and energy
/// model blocks, as read from a TOML config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub channel: ChannelSpec,
    pub energy: EnergySpec,
}

impl ExperimentConfig {
    /// Parses and validates an experiment description from TOML text.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::ConfigFile(e.to_string()))?;
        cfg.validated()
    }

    /// Reads [`Self::from_toml`] from a file path.
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Validates every block, returning the config unchanged iff all hold.
    pub fn validated(self) -> Result<Self> {
        let system = self.system.validate()?;
        self.channel.check()?;
        self.energy.check()?;
        Ok(Self { system, ..self })
    }

    /// Serializes back to TOML. A validated config round-trips
    /// bit-identically.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> SystemConfig {
        SystemConfig {
            buffer_capacity: 12,
            probe_cost: 1,
            sample_cost: 1,
            num_processes: 1,
            discount: 0.95,
            age_cap: 50,
        }
    }

    #[test]
    fn accepts_reference_parameters() {
        assert!(base().validate().is_ok());
    }

    #[test]
    fn rejects_costs_exceeding_buffer() {
        let cfg = SystemConfig {
            buffer_capacity: 1,
            ..base()
        };
        let err = cfg.validate().unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
        assert!(err.to_string().contains("buffer_capacity"));
    }

    #[test]
    fn rejects_discount_boundaries() {
        for alpha in [0.0, 1.0, -0.1, 1.5] {
            let cfg = SystemConfig {
                discount: alpha,
                ..base()
            };
            assert!(
                cfg.validate().is_err(),
                "alpha = {alpha} should be rejected"
            );
        }
    }

    #[test]
    fn rejects_tiny_age_cap() {
        let cfg = SystemConfig {
            age_cap: 1,
            ..base()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn age_successor_saturates() {
        let cfg = base().validate().unwrap();
        assert_eq!(cfg.age_successor(3), 4);
        assert_eq!(cfg.age_successor(50), 50);
    }

    #[test]
    fn config_file_round_trips_bit_identically() {
        let text = r#"
            [system]
            buffer_capacity = 12
            probe_cost = 1
            sample_cost = 1
            num_processes = 1
            discount = 0.95
            age_cap = 50

            [channel]
            success_probs = [0.9, 0.7, 0.5, 0.3, 0.1]
            occurrence_probs = [0.2, 0.2, 0.2, 0.2, 0.2]

            [energy]
            bernoulli_lambda = 0.4
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        let once = cfg.to_toml();
        let again = ExperimentConfig::from_toml(&once).unwrap().to_toml();
        assert_eq!(once, again);
    }

    #[test]
    fn config_file_rejects_invalid_system_block() {
        let text = r#"
            [system]
            buffer_capacity = 1
            probe_cost = 1
            sample_cost = 1
            num_processes = 1
            discount = 0.95
            age_cap = 50

            [channel]
            success_probs = [0.9]
            occurrence_probs = [1.0]

            [energy]
            bernoulli_lambda = 0.4
        "#;
        assert!(ExperimentConfig::from_toml(text).is_err());
    }
}
