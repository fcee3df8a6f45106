//! Ranks hosts by anomaly score and computes detection and diagnosis metrics.

use proactive_ft::metrics::{detection_metrics, diagnosis_metrics, improvement_ratio};
use proactive_ft::gan::DecisionRecord;
use proactive_ft::sim::FaultLabels;

fn main() -> anyhow::Result<()> {
    // three intervals over four hosts
    let scores = vec![vec![0.9, 0.1, 0.2, 0.3], vec![0.2, 0.8, 0.7, 0.1], vec![0.1, 0.1, 0.1, 0.1]];
    let truth = vec![FaultLabels(vec![1, 0, 0, 0]), FaultLabels(vec![0, 0, 2, 0]), FaultLabels::healthy(4)];
    let diag = diagnosis_metrics(&scores, &truth)?;
    println!("HitRate@100% {:?}  NDCG@100% {:?}", diag.hitrate_100, diag.ndcg_100);

    let pred = [true, true, false, true];
    let actual = [true, false, false, true];
    let det = detection_metrics(&pred, &actual)?;
    println!("accuracy {:.3} precision {:.3} recall {:.3} F1 {:.3}", det.accuracy, det.precision, det.recall, det.f1);

    let records: Vec<DecisionRecord> =
        (0..10).map(|i| DecisionRecord::new(i, if i % 3 == 0 { [0.6, 0.4] } else { [0.3, 0.7] }, true, 1)).collect();
    println!("improvement ratio {:?}", improvement_ratio(&records));
    Ok(())
}
