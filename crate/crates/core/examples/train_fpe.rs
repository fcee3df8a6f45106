//! Trains the fault encoder on seeded synthetic data and scores the holdout.

use std::time::Instant;

use proactive_ft::fpe::{detect_sequence, train_fpe, Fpe, FpeConfig, FpeTrainConfig};
use proactive_ft::harness::synthetic::{synthetic_fpe_dataset, SyntheticConfig};
use proactive_ft::metrics::{classification_accuracy, detection_metrics, diagnosis_metrics};

fn main() -> anyhow::Result<()> {
    let data = synthetic_fpe_dataset(&SyntheticConfig { seed: 7, ..Default::default() })?;
    let split = data.len() * 8 / 10;
    let (train, test) = data.split_at(split);

    let mut model = Fpe::new(FpeConfig::default(), 7)?;
    let start = Instant::now();
    let (protos, report) = train_fpe(&mut model, train, &FpeTrainConfig { seed: 7, ..Default::default() })?;
    println!(
        "trained {} epochs (best {}) in {:.1}s, final val loss {:.4}",
        report.epochs_run,
        report.best_epoch,
        start.elapsed().as_secs_f64(),
        report.validation_loss[report.best_epoch - 1]
    );

    let out = detect_sequence(&model, test)?;
    let pred: Vec<bool> = out.iter().map(|o| o.any_detected()).collect();
    let truth: Vec<bool> = test.iter().map(|s| s.labels.any_fault()).collect();
    let det = detection_metrics(&pred, &truth)?;
    println!("interval detection: acc {:.4} p {:.4} r {:.4} f1 {:.4}", det.accuracy, det.precision, det.recall, det.f1);

    let labels: Vec<_> = test.iter().map(|s| s.labels.clone()).collect();
    let classes: Vec<Vec<u8>> = out
        .iter()
        .map(|o| (0..o.m()).map(|i| protos.classify(o.embeddings.row_slice(i))).collect())
        .collect();
    if let Some(acc) = classification_accuracy(&classes, &labels)? {
        println!("classification accuracy on faulty hosts: {acc:.4}");
    }
    let scores: Vec<Vec<f64>> = out.iter().map(|o| (0..o.m()).map(|i| o.scores.at(i, 1)).collect()).collect();
    let diag = diagnosis_metrics(&scores, &labels)?;
    println!("diagnosis: {diag:?}");
    Ok(())
}
