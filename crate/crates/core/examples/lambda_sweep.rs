//! Sweeps the arrival rate and reports interval F1 and SLO violations of the full loop.

use proactive_ft::fpe::{train_fpe, Fpe};
use proactive_ft::gan::{train_gan, GanModel};
use proactive_ft::harness::{collect_fpe_dataset, run_closed_loop, ExperimentConfig, LiveCluster, Models, Phase};
use proactive_ft::metrics::{any_fault, detection_metrics};

fn main() -> anyhow::Result<()> {
    for lambda in [1.0, 5.0, 10.0, 15.0] {
        let cfg = ExperimentConfig { lambda, ..Default::default() };
        let (samples, _) = collect_fpe_dataset(&cfg)?;
        let mut fpe = Fpe::new(cfg.fpe_config(), cfg.seed)?;
        train_fpe(&mut fpe, &samples, &cfg.fpe_train_config())?;
        let mut gan = GanModel::new(cfg.gan_config(), cfg.seed)?;
        train_gan(&fpe, &mut gan, &mut LiveCluster::new(&cfg, Phase::TrainGan)?, &cfg.gan_train_config())?;
        let out = run_closed_loop(&cfg, Some(Models { fpe: &fpe, gan: &gan }), cfg.eval_intervals)?;
        let (pred, truth): (Vec<bool>, Vec<bool>) = out
            .trace
            .iter()
            .filter_map(|t| t.decision.as_ref().map(|d| (d.fault_predicted, any_fault(&t.record.labels))))
            .unzip();
        let det = detection_metrics(&pred, &truth)?;
        println!(
            "λ={lambda:>4}: F1 {:.3}  SLO {:.4}  energy {:.4} kWh  CPU {:.2}",
            det.f1, out.report.slo_violation_fraction, out.report.energy_kwh, out.report.mean_cpu_utilization
        );
    }
    Ok(())
}
