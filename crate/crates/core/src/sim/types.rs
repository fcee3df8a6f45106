use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Static description of one host.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HostSpec {
    /// Compute units the host can execute per interval.
    pub cpu_capacity: f64,
    /// MB.
    pub ram_capacity: f64,
    /// MB/s.
    pub disk_bandwidth: f64,
    /// MB/s, per direction.
    pub net_bandwidth: f64,
    /// W.
    pub power_idle: f64,
    /// W.
    pub power_max: f64,
}

impl HostSpec {
    pub fn validate(&self) -> Result<()> {
        let caps = [
            self.cpu_capacity,
            self.ram_capacity,
            self.disk_bandwidth,
            self.net_bandwidth,
        ];
        if caps.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::param(format!("host capacities must be positive: {self:?}")));
        }
        if !(self.power_idle >= 0.0 && self.power_max >= self.power_idle && self.power_max.is_finite()) {
            return Err(Error::param(format!(
                "need power_max >= power_idle >= 0, got {} and {}",
                self.power_max, self.power_idle
            )));
        }
        Ok(())
    }

    /// Linear power model.
    pub fn power(&self, utilization: f64) -> f64 {
        self.power_idle + (self.power_max - self.power_idle) * utilization.clamp(0.0, 1.0)
    }

    /// Eight 4 GB hosts followed by eight 8 GB hosts.
    pub fn default_cluster() -> Vec<HostSpec> {
        Self::two_tier(16)
    }

    /// `m` hosts, the first half small, the second half large.
    pub fn two_tier(m: usize) -> Vec<HostSpec> {
        (0..m)
            .map(|i| if i < m / 2 { Self::small() } else { Self::large() })
            .collect()
    }

    pub fn small() -> HostSpec {
        HostSpec {
            cpu_capacity: 100.0,
            ram_capacity: 4096.0,
            disk_bandwidth: 80.0,
            net_bandwidth: 100.0,
            power_idle: 2.5,
            power_max: 6.0,
        }
    }

    pub fn large() -> HostSpec {
        HostSpec {
            ram_capacity: 8192.0,
            power_idle: 2.8,
            power_max: 6.6,
            ..Self::small()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AppClass {
    A,
    B,
    C,
}

impl AppClass {
    pub const ALL: [AppClass; 3] = [AppClass::A, AppClass::B, AppClass::C];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// A containerised unit of work.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: u64,
    pub app_class: AppClass,
    /// Compute units.
    pub total_demand: f64,
    /// MB.
    pub ram_footprint: f64,
    /// Share of the task's time spent on I/O, in [0, 1].
    pub io_intensity: f64,
    pub arrival_interval: u64,
    /// Seconds from arrival.
    pub deadline: f64,
    /// Compute units completed so far.
    pub progress: f64,
}

impl Task {
    pub fn validate(&self) -> Result<()> {
        let ok = self.total_demand > 0.0
            && self.ram_footprint >= 0.0
            && (0.0..=1.0).contains(&self.io_intensity)
            && self.deadline > 0.0
            && (0.0..=self.total_demand).contains(&self.progress);
        if ok {
            Ok(())
        } else {
            Err(Error::data(format!("malformed task {self:?}")))
        }
    }

    pub fn remaining(&self) -> f64 {
        (self.total_demand - self.progress).max(0.0)
    }
}

/// Fault class; the discriminant is the class label used everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FaultClass {
    Cpu = 1,
    Ram = 2,
    Network = 3,
}

impl FaultClass {
    /// In label priority order.
    pub const ALL: [FaultClass; 3] = [FaultClass::Cpu, FaultClass::Ram, FaultClass::Network];

    pub fn label(self) -> u8 {
        self as u8
    }

    pub fn from_label(label: u8) -> Option<Self> {
        match label {
            1 => Some(FaultClass::Cpu),
            2 => Some(FaultClass::Ram),
            3 => Some(FaultClass::Network),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub host: usize,
    pub start_interval: u64,
    pub duration: u64,
    pub class: FaultClass,
    /// In (0, 1].
    pub severity: f64,
}

impl FaultEvent {
    pub fn active_at(&self, interval: u64) -> bool {
        interval >= self.start_interval && interval < self.start_interval + self.duration
    }
}

/// Scheduled fault injections.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultPlan {
    pub events: Vec<FaultEvent>,
}

impl FaultPlan {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        for e in &self.events {
            if e.host >= m {
                return Err(Error::param(format!("fault on host {} but m = {m}", e.host)));
            }
            if e.duration == 0 {
                return Err(Error::param("fault duration must be at least 1"));
            }
            if !(e.severity > 0.0 && e.severity <= 1.0) {
                return Err(Error::param(format!("fault severity {} outside (0, 1]", e.severity)));
            }
        }
        Ok(())
    }

    /// Strongest active severity of each class on each host, `[host][class - 1]`.
    pub fn severities(&self, m: usize, interval: u64) -> Vec<[f64; 3]> {
        let mut out: Vec<[f64; 3]> = vec![[0.0; 3]; m];
        for e in self.events.iter().filter(|e| e.active_at(interval)) {
            let slot = &mut out[e.host][e.class.label() as usize - 1];
            *slot = slot.max(e.severity);
        }
        out
    }

    /// Draws a plan with [`FaultRates`]. Events on a host never overlap.
    pub fn generate(rates: &FaultRates, m: usize, intervals: u64, seed: u64) -> Result<Self> {
        rates.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total: f64 = rates.class_weights.iter().sum();
        let mut events = Vec::new();
        let mut busy_until = vec![0u64; m];
        for t in 0..intervals {
            for (host, busy) in busy_until.iter_mut().enumerate() {
                // Draw unconditionally so one host's history does not shift the others.
                let start = rng.random::<f64>() < rates.rate;
                let duration = rng.random_range(rates.duration.0..=rates.duration.1);
                let mut pick = rng.random::<f64>() * total;
                let u = rng.random::<f64>();
                if !start || t < *busy {
                    continue;
                }
                let mut class = FaultClass::Network;
                for (c, w) in FaultClass::ALL.iter().zip(rates.class_weights) {
                    if pick < w {
                        class = *c;
                        break;
                    }
                    pick -= w;
                }
                let (lo, hi) = rates.severity[class.label() as usize - 1];
                events.push(FaultEvent {
                    host,
                    start_interval: t,
                    duration,
                    class,
                    severity: lo + (hi - lo) * u,
                });
                *busy = t + duration;
            }
        }
        Ok(Self { events })
    }
}

/// Parameters of the random fault generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FaultRates {
    /// Probability that a fault starts on an idle host in a given interval.
    pub rate: f64,
    /// Inclusive range of event lengths in intervals.
    pub duration: (u64, u64),
    /// Relative frequency of CPU, RAM and network faults.
    pub class_weights: [f64; 3],
    /// Severity ranges `(lo, hi)` for CPU, RAM and network faults.
    pub severity: [(f64, f64); 3],
}

impl Default for FaultRates {
    fn default() -> Self {
        Self {
            rate: 0.01,
            duration: (3, 8),
            class_weights: [1.0, 1.0, 1.0],
            severity: [(0.92, 1.0), (0.5, 1.0), (0.92, 1.0)],
        }
    }
}

impl FaultRates {
    pub fn heavy() -> Self {
        Self {
            rate: 0.03,
            ..Self::default()
        }
    }

    pub fn zero() -> Self {
        Self {
            rate: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::param(format!("fault rate {} outside [0, 1]", self.rate)));
        }
        if self.duration.0 == 0 || self.duration.1 < self.duration.0 {
            return Err(Error::param(format!("bad fault duration range {:?}", self.duration)));
        }
        if self.class_weights.iter().any(|w| *w < 0.0) || self.class_weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::param("fault class weights must be non-negative with a positive sum"));
        }
        for (lo, hi) in self.severity {
            if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
                return Err(Error::param(format!("bad severity range ({lo}, {hi})")));
            }
        }
        Ok(())
    }
}

/// Per-host class labels; 0 means healthy.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FaultLabels(pub Vec<u8>);

impl FaultLabels {
    pub fn healthy(m: usize) -> Self {
        Self(vec![0; m])
    }

    pub fn validate(&self, c: u8) -> Result<()> {
        match self.0.iter().find(|l| **l > c) {
            Some(l) => Err(Error::data(format!("label {l} exceeds class count {c}"))),
            None => Ok(()),
        }
    }

    pub fn any_fault(&self) -> bool {
        self.0.iter().any(|l| *l > 0)
    }

    pub fn faulty_hosts(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|i| self.0[*i] > 0).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_is_linear_and_clamped() {
        let h = HostSpec::small();
        assert_eq!(h.power(0.0), h.power_idle);
        assert_eq!(h.power(1.0), h.power_max);
        assert_eq!(h.power(2.0), h.power_max);
        assert!((h.power(0.5) - 4.25).abs() < 1e-12);
    }

    #[test]
    fn host_validation() {
        assert!(HostSpec::small().validate().is_ok());
        let bad = HostSpec {
            power_idle: 7.0,
            ..HostSpec::small()
        };
        assert!(bad.validate().is_err());
        let bad = HostSpec {
            net_bandwidth: 0.0,
            ..HostSpec::small()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn generated_plans_respect_invariants() {
        let plan = FaultPlan::generate(&FaultRates::heavy(), 6, 300, 4).unwrap();
        assert!(!plan.events.is_empty());
        plan.validate(6).unwrap();
        for h in 0..6 {
            let mut ev: Vec<_> = plan.events.iter().filter(|e| e.host == h).collect();
            ev.sort_by_key(|e| e.start_interval);
            for w in ev.windows(2) {
                assert!(w[0].start_interval + w[0].duration <= w[1].start_interval);
            }
        }
        assert_eq!(plan, FaultPlan::generate(&FaultRates::heavy(), 6, 300, 4).unwrap());
    }

    #[test]
    fn zero_rate_gives_empty_plan() {
        let plan = FaultPlan::generate(&FaultRates::zero(), 16, 500, 1).unwrap();
        assert!(plan.events.is_empty());
    }

    #[test]
    fn severities_take_strongest_active_event() {
        let plan = FaultPlan {
            events: vec![
                FaultEvent { host: 1, start_interval: 2, duration: 2, class: FaultClass::Cpu, severity: 0.3 },
                FaultEvent { host: 1, start_interval: 3, duration: 1, class: FaultClass::Cpu, severity: 0.6 },
                FaultEvent { host: 0, start_interval: 3, duration: 1, class: FaultClass::Network, severity: 0.4 },
            ],
        };
        let s = plan.severities(2, 3);
        assert_eq!(s[1], [0.6, 0.0, 0.0]);
        assert_eq!(s[0], [0.0, 0.0, 0.4]);
        assert_eq!(plan.severities(2, 4), vec![[0.0; 3]; 2]);
    }

    #[test]
    fn label_bounds() {
        assert!(FaultLabels(vec![0, 3, 1]).validate(3).is_ok());
        assert!(FaultLabels(vec![0, 4]).validate(3).is_err());
    }
}
