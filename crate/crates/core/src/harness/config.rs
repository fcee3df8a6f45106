use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpe::{FpeConfig, FpeTrainConfig};
use crate::gan::{GanConfig, GanTrainConfig};
use crate::sim::{FaultRates, HostSpec, SimParams, WorkloadConfig, NUM_FEATURES};

/// Everything one experiment needs. Missing keys take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub m: usize,
    /// Metrics per host; fixed by the simulator.
    pub n: usize,
    /// Window length.
    pub k: usize,
    /// Fault classes.
    pub c: usize,
    /// Prototype width.
    pub embed: usize,
    pub heads: usize,
    pub interval_seconds: f64,
    /// Mean task arrivals per interval.
    pub lambda: f64,
    /// Initial prototype step size.
    pub alpha: f64,
    /// Prototype step decay per window.
    pub decay: f64,
    /// Energy weight in the QoS score.
    pub qos_weight: f64,
    pub seed: u64,
    pub fpe_intervals: usize,
    pub gan_intervals: usize,
    pub eval_intervals: usize,
    /// Unrecorded intervals run before every phase to fill the window.
    pub warmup: usize,
    /// Explicit host table; `m` two-tier hosts when absent.
    pub hosts: Option<Vec<HostSpec>>,
    pub faults: FaultRates,
    pub sim: SimParams,
    pub workload: WorkloadConfig,
    pub fpe_train: FpeTrainConfig,
    pub gan: GanConfig,
    pub gan_train: GanTrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            m: 16,
            n: NUM_FEATURES,
            k: 5,
            c: 3,
            embed: 8,
            heads: 2,
            interval_seconds: 300.0,
            lambda: 5.0,
            alpha: 0.9,
            decay: 0.05,
            qos_weight: 0.5,
            seed: 0,
            fpe_intervals: 1000,
            gan_intervals: 1200,
            eval_intervals: 100,
            warmup: 5,
            hosts: None,
            faults: FaultRates::default(),
            sim: SimParams::default(),
            workload: WorkloadConfig::default(),
            fpe_train: FpeTrainConfig::default(),
            gan: GanConfig::default(),
            gan_train: GanTrainConfig::default(),
        }
    }
}

/// Stages that draw their own fault plan and workload stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Collect,
    TrainGan,
    Evaluate,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::format(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k == 0 || self.c == 0 || self.embed == 0 || self.heads == 0 {
            return Err(Error::param("m, k, c, embed and heads must be positive"));
        }
        if self.n != NUM_FEATURES {
            return Err(Error::param(format!("the simulator emits {NUM_FEATURES} metrics, config asks for {}", self.n)));
        }
        if let Some(h) = &self.hosts {
            if h.len() != self.m {
                return Err(Error::param(format!("{} hosts listed for m = {}", h.len(), self.m)));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::param(format!("lambda {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.qos_weight) {
            return Err(Error::param(format!("qos weight {} outside [0, 1]", self.qos_weight)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) || !(0.0..1.0).contains(&self.decay) {
            return Err(Error::param(format!("alpha {} / decay {}", self.alpha, self.decay)));
        }
        self.faults.validate()?;
        self.sim_params().validate()?;
        self.workload.validate()?;
        self.fpe_config().validate()?;
        self.gan_config().validate()
    }

    pub fn hosts(&self) -> Vec<HostSpec> {
        self.hosts.clone().unwrap_or_else(|| HostSpec::two_tier(self.m))
    }

    pub fn sim_params(&self) -> SimParams {
        SimParams { interval_seconds: self.interval_seconds, ..self.sim.clone() }
    }

    pub fn fpe_config(&self) -> FpeConfig {
        FpeConfig {
            k: self.k,
            n: self.n,
            heads: self.heads,
            embed: self.embed,
            classes: self.c,
            ..FpeConfig::default()
        }
    }

    pub fn fpe_train_config(&self) -> FpeTrainConfig {
        FpeTrainConfig {
            alpha: self.alpha,
            decay: self.decay,
            seed: self.seed,
            ..self.fpe_train.clone()
        }
    }

    pub fn gan_config(&self) -> GanConfig {
        GanConfig {
            embed: self.embed,
            features: self.n,
            heads: self.heads,
            ..self.gan.clone()
        }
    }

    pub fn gan_train_config(&self) -> GanTrainConfig {
        GanTrainConfig {
            qos_weight: self.qos_weight,
            seed: self.seed,
            ..self.gan_train.clone()
        }
    }

    /// Intervals a phase runs, warmup excluded.
    pub fn intervals(&self, phase: Phase) -> usize {
        match phase {
            Phase::Collect => self.fpe_intervals,
            Phase::TrainGan => self.gan_intervals,
            Phase::Evaluate => self.eval_intervals,
        }
    }

    /// Seed of a phase's fault plan and arrival stream.
    pub fn phase_seed(&self, phase: Phase) -> u64 {
        let salt = match phase {
            Phase::Collect => 0x636f_6c6c,
            Phase::TrainGan => 0x6761_6e74,
            Phase::Evaluate => 0x6576_616c,
        };
        self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ salt
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml_str("m = 4\nlambda = 2.5\n[faults]\nrate = 0.1\n").unwrap();
        assert_eq!(cfg.m, 4);
        assert_eq!(cfg.k, 5);
        assert_eq!(cfg.faults.rate, 0.1);
        assert_eq!(cfg.hosts().len(), 4);
        assert_eq!((cfg.alpha, cfg.decay), (0.9, 0.05));
    }

    #[test]
    fn bad_values_rejected() {
        assert!(ExperimentConfig::from_toml_str("m = 0").is_err());
        assert!(ExperimentConfig::from_toml_str("n = 7").is_err());
        assert!(ExperimentConfig::from_toml_str("lambda = -1.0").is_err());
        assert!(ExperimentConfig::from_toml_str("unknown = 1").is_err());
        assert!(matches!(ExperimentConfig::from_toml_str("m = ["), Err(Error::Format(_))));
    }

    #[test]
    fn phases_get_distinct_seeds() {
        let cfg = ExperimentConfig::default();
        let s = [Phase::Collect, Phase::TrainGan, Phase::Evaluate].map(|p| cfg.phase_seed(p));
        assert!(s[0] != s[1] && s[1] != s[2] && s[0] != s[2]);
    }
}
