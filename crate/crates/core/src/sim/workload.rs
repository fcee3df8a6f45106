use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::types::{AppClass, Task};
use crate::error::{Error, Result};

/// Uniform parameter ranges for one application class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    /// Compute units.
    pub demand: (f64, f64),
    /// MB.
    pub ram: (f64, f64),
    pub io: (f64, f64),
    /// Deadline as a multiple of the task's run time on an idle reference host.
    pub slack: (f64, f64),
}

/// Task generator settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadConfig {
    /// Profiles for classes A, B and C.
    pub classes: [ClassProfile; 3],
    /// Compute units per interval of the host used to turn demand into time.
    pub reference_capacity: f64,
    /// Largest share of a host's CPU one task can use.
    pub task_share: f64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            classes: [
                // compute-heavy
                ClassProfile {
                    demand: (90.0, 165.0),
                    ram: (300.0, 700.0),
                    io: (0.1, 0.3),
                    slack: (2.0, 3.0),
                },
                ClassProfile {
                    demand: (45.0, 105.0),
                    ram: (150.0, 400.0),
                    io: (0.2, 0.5),
                    slack: (2.5, 4.0),
                },
                // I/O-heavy
                ClassProfile {
                    demand: (30.0, 75.0),
                    ram: (100.0, 300.0),
                    io: (0.5, 0.9),
                    slack: (3.0, 5.0),
                },
            ],
            reference_capacity: 100.0,
            task_share: 0.4,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<()> {
        let range_ok = |(lo, hi): (f64, f64), min: f64| lo.is_finite() && hi.is_finite() && lo >= min && hi >= lo;
        for (i, c) in self.classes.iter().enumerate() {
            let ok = range_ok(c.demand, f64::MIN_POSITIVE)
                && range_ok(c.ram, 0.0)
                && range_ok(c.io, 0.0)
                && c.io.1 <= 1.0
                && range_ok(c.slack, f64::MIN_POSITIVE);
            if !ok {
                return Err(Error::param(format!("invalid profile for app class {i}: {c:?}")));
            }
        }
        if !(self.reference_capacity > 0.0) {
            return Err(Error::param("reference capacity must be positive"));
        }
        if !(self.task_share > 0.0 && self.task_share <= 1.0) {
            return Err(Error::param(format!("task share {} outside (0, 1]", self.task_share)));
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Draws `Poisson(lambda)` new tasks arriving at `interval`.
///
/// Task ids are taken from `next_id`, which is advanced.
pub fn generate_workloads<R: Rng + ?Sized>(
    rng: &mut R,
    lambda: f64,
    config: &WorkloadConfig,
    interval: u64,
    interval_seconds: f64,
    next_id: &mut u64,
) -> Result<Vec<Task>> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::param(format!("arrival rate must be non-negative, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(Vec::new());
    }
    let count = Poisson::new(lambda)
        .map_err(|e| Error::param(e.to_string()))?
        .sample(rng) as usize;
    let mut tasks = Vec::with_capacity(count);
    for _ in 0..count {
        let app_class = AppClass::ALL[rng.random_range(0..3)];
        let p = &config.classes[app_class.index()];
        let total_demand = uniform(rng, p.demand);
        let ram_footprint = uniform(rng, p.ram);
        let io_intensity = uniform(rng, p.io);
        let slack = uniform(rng, p.slack);
        let standalone = total_demand / (config.reference_capacity * config.task_share) * interval_seconds;
        tasks.push(Task {
            id: *next_id,
            app_class,
            total_demand,
            ram_footprint,
            io_intensity,
            arrival_interval: interval,
            deadline: standalone * slack,
            progress: 0.0,
        });
        *next_id += 1;
    }
    Ok(tasks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn draw(seed: u64, lambda: f64) -> Vec<Task> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut id = 0;
        generate_workloads(&mut rng, lambda, &WorkloadConfig::default(), 3, 300.0, &mut id).unwrap()
    }

    #[test]
    fn zero_rate_is_empty() {
        assert!(draw(1, 0.0).is_empty());
    }

    #[test]
    fn negative_rate_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut id = 0;
        assert!(matches!(
            generate_workloads(&mut rng, -1.0, &WorkloadConfig::default(), 0, 300.0, &mut id),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn same_seed_same_tasks() {
        assert_eq!(draw(9, 15.0), draw(9, 15.0));
    }

    #[test]
    fn mean_count_tracks_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut id = 0;
        let cfg = WorkloadConfig::default();
        let total: usize = (0..1000)
            .map(|t| generate_workloads(&mut rng, 15.0, &cfg, t, 300.0, &mut id).unwrap().len())
            .sum();
        let mean = total as f64 / 1000.0;
        assert!((14.0..=16.0).contains(&mean), "mean {mean}");
        assert_eq!(id as usize, total);
    }

    #[test]
    fn tasks_are_valid_and_use_every_class() {
        let tasks = draw(5, 200.0);
        for t in &tasks {
            t.validate().unwrap();
            assert_eq!(t.arrival_interval, 3);
        }
        for c in AppClass::ALL {
            assert!(tasks.iter().any(|t| t.app_class == c));
        }
    }
}
