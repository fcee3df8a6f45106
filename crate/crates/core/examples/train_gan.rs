//! Trains the encoder, then the migration generator and discriminator online
//! against a live cluster, and reports how often amended schedules won.

use proactive_ft::fpe::{train_fpe, Fpe};
use proactive_ft::gan::{train_gan, GanModel};
use proactive_ft::harness::{collect_fpe_dataset, ExperimentConfig, LiveCluster, Phase};
use proactive_ft::metrics::improvement_ratio;
use proactive_ft::sim::FaultRates;

fn main() -> anyhow::Result<()> {
    let cfg = ExperimentConfig { faults: FaultRates::heavy(), gan_intervals: 600, ..Default::default() };
    let (samples, _) = collect_fpe_dataset(&cfg)?;
    let mut fpe = Fpe::new(cfg.fpe_config(), cfg.seed)?;
    let (_, fpe_report) = train_fpe(&mut fpe, &samples, &cfg.fpe_train_config())?;
    println!("encoder: {} epochs on {} samples", fpe_report.epochs_run, samples.len());

    let mut gan = GanModel::new(cfg.gan_config(), cfg.seed)?;
    let report = train_gan(&fpe, &mut gan, &mut LiveCluster::new(&cfg, Phase::TrainGan)?, &cfg.gan_train_config())?;
    for (i, chunk) in report.decisions.chunks(150).enumerate() {
        let better = chunk.iter().filter(|d| d.sim_n > d.sim_s).count();
        let worse = chunk.iter().filter(|d| d.sim_n < d.sim_s).count();
        let agree = chunk
            .iter()
            .filter(|d| match (d.sim_s, d.sim_n) {
                (Some(s), Some(n)) => d.chose_new == (n >= s),
                _ => false,
            })
            .count();
        println!(
            "block {i}: candidate better {better}, worse {worse}, discriminator agrees {agree}/{}, ratio {:?}",
            chunk.len(),
            improvement_ratio(chunk)
        );
    }
    Ok(())
}
