//! Compares the baseline with the full fault-tolerance loop on a held-out stream.

use proactive_ft::fpe::{train_fpe, Fpe};
use proactive_ft::gan::{train_gan, GanModel};
use proactive_ft::harness::{collect_fpe_dataset, run_closed_loop, ExperimentConfig, LiveCluster, Models, Phase};
use proactive_ft::sim::FaultRates;

fn main() -> anyhow::Result<()> {
    let cfg = ExperimentConfig { faults: FaultRates::heavy(), ..Default::default() };
    let (samples, _) = collect_fpe_dataset(&cfg)?;
    let mut fpe = Fpe::new(cfg.fpe_config(), cfg.seed)?;
    train_fpe(&mut fpe, &samples, &cfg.fpe_train_config())?;
    let mut gan = GanModel::new(cfg.gan_config(), cfg.seed)?;
    train_gan(&fpe, &mut gan, &mut LiveCluster::new(&cfg, Phase::TrainGan)?, &cfg.gan_train_config())?;

    let base = run_closed_loop(&cfg, None, cfg.eval_intervals)?;
    let ours = run_closed_loop(&cfg, Some(Models { fpe: &fpe, gan: &gan }), cfg.eval_intervals)?;
    for (name, out) in [("baseline", &base), ("preemptive", &ours)] {
        let r = &out.report;
        println!(
            "{name:<10} SLO {:.4}  energy {:.4} kWh  response {:.0}s  migrations {}  ratio {:?}",
            r.slo_violation_fraction, r.energy_kwh, r.mean_response_time_s, r.migration_count, r.improvement_ratio
        );
    }
    if let Some(o) = ours.timing.overhead_ratio() {
        println!("model time / scheduler time = {o:.1}");
    }
    Ok(())
}
