//! Seeded synthetic fault data with clearly separable class signatures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fpe::FpeSample;
use crate::sim::{Assignment, FaultLabels, MetricsWindow, Schedule, NUM_FEATURES};

/// Settings for [`synthetic_fpe_dataset`].
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub m: usize,
    pub windows: usize,
    pub k: usize,
    /// Per-host probability of a fault episode starting in a healthy interval.
    pub fault_start: f64,
    /// Inclusive episode length range.
    pub duration: (usize, usize),
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            m: 4,
            windows: 1000,
            k: 5,
            fault_start: 0.08,
            duration: (3, 6),
            seed: 0,
        }
    }
}

/// Features pushed into a high band by each fault class.
fn signature(class: u8) -> &'static [usize] {
    match class {
        1 => &[0, 7],
        2 => &[1, 3],
        _ => &[4, 5],
    }
}

/// Normalised host series where each fault class lifts its own features
/// into `[0.85, 1]` while healthy features stay in `[0.1, 0.6]`.
///
/// Sample `t` holds the window ending at interval `t` and that interval's
/// labels, so every labelled fault is visible in its window.
pub fn synthetic_fpe_dataset(cfg: &SyntheticConfig) -> Result<Vec<FpeSample>> {
    if cfg.m == 0 || cfg.k == 0 || cfg.windows == 0 || cfg.duration.0 == 0 || cfg.duration.1 < cfg.duration.0 {
        return Err(Error::param(format!("bad synthetic config {cfg:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let steps = cfg.windows + cfg.k - 1;
    let m = cfg.m;
    let base: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..NUM_FEATURES).map(|_| rng.random_range(0.15..0.5)).collect())
        .collect();

    let mut labels = vec![vec![0u8; m]; steps];
    let mut frames = vec![vec![vec![0.0; NUM_FEATURES]; m]; steps];
    let mut remaining = vec![(0usize, 0u8); m];
    for t in 0..steps {
        for i in 0..m {
            if remaining[i].0 == 0 && rng.random::<f64>() < cfg.fault_start {
                let len = rng.random_range(cfg.duration.0..=cfg.duration.1);
                remaining[i] = (len, rng.random_range(1..=3));
            }
            for f in 0..NUM_FEATURES {
                frames[t][i][f] = (base[i][f] + rng.random_range(-0.1..0.1)).clamp(0.0, 1.0);
            }
            if remaining[i].0 > 0 {
                let class = remaining[i].1;
                labels[t][i] = class;
                for &f in signature(class) {
                    frames[t][i][f] = rng.random_range(0.85..1.0);
                }
                remaining[i].0 -= 1;
            }
        }
    }

    let mut out = Vec::with_capacity(cfg.windows);
    for t in cfg.k - 1..steps {
        let mut data = Vec::with_capacity(cfg.k * m * NUM_FEATURES);
        for frame in &frames[t + 1 - cfg.k..=t] {
            for row in frame {
                data.extend_from_slice(row);
            }
        }
        let window = MetricsWindow::from_data(cfg.k, m, NUM_FEATURES, data)?;
        let mut schedule = Schedule::new(m);
        for task in 0..2 * m as u64 {
            let h = rng.random_range(0..m);
            schedule.push(Assignment { task_id: task, current: Some(h), host: h })?;
        }
        out.push(FpeSample { window, schedule, labels: FaultLabels(labels[t].clone()) });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let cfg = SyntheticConfig { windows: 50, ..Default::default() };
        let a = synthetic_fpe_dataset(&cfg).unwrap();
        assert_eq!(a.len(), 50);
        assert_eq!(a, synthetic_fpe_dataset(&cfg).unwrap());
        assert!(a.iter().any(|s| s.labels.any_fault()));
        for s in &a {
            assert_eq!((s.window.k, s.window.m, s.window.n), (5, 4, 8));
        }
    }

    #[test]
    fn labelled_faults_show_their_signature() {
        let data = synthetic_fpe_dataset(&SyntheticConfig { windows: 200, ..Default::default() }).unwrap();
        for s in &data {
            for (i, &y) in s.labels.0.iter().enumerate() {
                let last = s.window.k - 1;
                let high = signature(if y == 0 { 1 } else { y }).iter().all(|f| s.window.at(last, i, *f) >= 0.85);
                if y > 0 {
                    assert!(high);
                }
            }
        }
    }
}
