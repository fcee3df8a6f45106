//! Saves models trained at one cluster size and reloads them on a larger one.

use proactive_ft::fpe::{train_fpe, Fpe};
use proactive_ft::gan::{infer, GanModel};
use proactive_ft::harness::{collect_fpe_dataset, gan_stream, load_checkpoint, save_checkpoint, Checkpoint, ExperimentConfig, Phase};

fn main() -> anyhow::Result<()> {
    let small = ExperimentConfig { m: 8, fpe_intervals: 200, ..Default::default() };
    let (samples, _) = collect_fpe_dataset(&small)?;
    let mut fpe = Fpe::new(small.fpe_config(), 1)?;
    let (protos, _) = train_fpe(&mut fpe, &samples, &small.fpe_train_config())?;
    let gan = GanModel::new(small.gan_config(), 1)?;

    let dir = std::env::temp_dir().join("proactive-ft-checkpoint");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.json");
    save_checkpoint(&path, &Checkpoint::new(Some(&fpe), Some(&protos), Some(&gan), None))?;
    let ckpt = load_checkpoint(&path)?;
    let (fpe2, gan2) = (ckpt.fpe()?.expect("encoder"), ckpt.gan()?.expect("gan"));
    println!("reloaded {} parameter tensors from {}", ckpt.params.len(), path.display());

    let large = ExperimentConfig { m: 16, ..small };
    let mut carry = fpe2.zero_carry(large.m);
    for item in gan_stream(&large, Phase::Evaluate)?.take(5) {
        let it = item?;
        let inf = infer(&fpe2, &gan2, &it.window, &it.schedule, &carry, it.interval)?;
        carry = inf.next_carry.clone();
        println!(
            "m=16 interval {}: {} hosts flagged, D = [{:.3}, {:.3}]",
            it.interval,
            (0..inf.detection.m()).filter(|&i| inf.detection.detected(i)).count(),
            inf.record.d[0],
            inf.record.d[1]
        );
    }
    Ok(())
}
