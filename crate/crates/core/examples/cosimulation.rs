//! Scores alternative placements of one interval by co-simulating them on a snapshot.

use proactive_ft::harness::{Driver, ExperimentConfig, Phase};
use proactive_ft::sim::cosimulate;

fn main() -> anyhow::Result<()> {
    let cfg = ExperimentConfig::default();
    let mut driver = Driver::new(&cfg, Phase::Evaluate)?;
    let mut pending = driver.begin()?;
    for _ in 0..20 {
        driver.finish(&pending.baseline, &pending.arrivals)?;
        pending = driver.begin()?;
    }
    let snapshot = driver.state.snapshot(&pending.arrivals);
    let base = &pending.baseline;
    let occ = base.occupancy();
    let crowded = (0..base.m()).max_by_key(|&j| occ[j]).unwrap_or(0);
    let packed = base.with_hosts(&vec![crowded; base.len()])?;
    for horizon in [1, 3, 5] {
        let s = cosimulate(&snapshot, base, horizon, cfg.qos_weight)?;
        let n = cosimulate(&snapshot, &packed, horizon, cfg.qos_weight)?;
        println!("horizon {horizon}: baseline {s:.4}, all on host {crowded} {n:.4}");
    }
    Ok(())
}
