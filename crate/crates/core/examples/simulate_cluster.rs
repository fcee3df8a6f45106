//! Runs the baseline scheduler on the default 16-host cluster under heavy faults.

use proactive_ft::harness::{run_closed_loop, ExperimentConfig};
use proactive_ft::sim::FaultRates;

fn main() -> anyhow::Result<()> {
    let cfg = ExperimentConfig { faults: FaultRates::heavy(), ..Default::default() };
    let out = run_closed_loop(&cfg, None, 50)?;
    for t in out.trace.iter().step_by(10) {
        let r = &t.record;
        let faulty = r.labels.faulty_hosts();
        println!(
            "interval {:>3}: {:>3} active, {:>2} completed, {:.1} Wh, faulty hosts {faulty:?}",
            t.interval,
            r.active_tasks,
            r.completed.len(),
            r.energy_wh
        );
    }
    let rep = &out.report;
    println!("SLO violations {:.4}, energy {:.4} kWh, mean response {:.1}s", rep.slo_violation_fraction, rep.energy_kwh, rep.mean_response_time_s);
    Ok(())
}
