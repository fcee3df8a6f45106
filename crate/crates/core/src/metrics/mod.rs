//! Detection, diagnosis, decision and QoS metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gan::DecisionRecord;
use crate::sim::{AppClass, FaultLabels, HostSpec, IntervalRecord};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Confusion-matrix metrics; zero denominators give 0.
pub fn detection_metrics(pred: &[bool], truth: &[bool]) -> Result<DetectionReport> {
    if pred.len() != truth.len() {
        return Err(Error::shape(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::data("no predictions to score"));
    }
    let mut r = DetectionReport::default();
    for (p, t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => r.tp += 1,
            (true, false) => r.fp += 1,
            (false, true) => r.fn_ += 1,
            (false, false) => r.tn += 1,
        }
    }
    r.accuracy = ratio(r.tp + r.tn, pred.len());
    r.precision = ratio(r.tp, r.tp + r.fp);
    r.recall = ratio(r.tp, r.tp + r.fn_);
    r.f1 = if r.precision + r.recall > 0.0 {
        2.0 * r.precision * r.recall / (r.precision + r.recall)
    } else {
        0.0
    };
    Ok(r)
}

/// Interval-level flag: any host faulty.
pub fn any_fault(labels: &FaultLabels) -> bool {
    labels.any_fault()
}

/// Hosts by descending score; equal scores keep host order.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b)));
    order
}

fn check_ranked(scores: &[Vec<f64>], truth: &[FaultLabels]) -> Result<()> {
    if scores.len() != truth.len() {
        return Err(Error::shape(format!("{} score rows for {} label rows", scores.len(), truth.len())));
    }
    for (s, t) in scores.iter().zip(truth) {
        if s.len() != t.len() {
            return Err(Error::shape(format!("{} scores for {} hosts", s.len(), t.len())));
        }
    }
    Ok(())
}

/// Mean share of faulty hosts found in the top-|GT| ranked hosts, over
/// intervals with at least one fault. `None` when no interval is faulty.
pub fn hitrate_at_100(scores: &[Vec<f64>], truth: &[FaultLabels]) -> Result<Option<f64>> {
    check_ranked(scores, truth)?;
    let mut total = 0.0;
    let mut count = 0;
    for (s, t) in scores.iter().zip(truth) {
        let gt = t.faulty_hosts();
        if gt.is_empty() {
            continue;
        }
        let top = &ranking(s)[..gt.len()];
        total += gt.iter().filter(|h| top.contains(h)).count() as f64 / gt.len() as f64;
        count += 1;
    }
    Ok((count > 0).then(|| total / count as f64))
}

/// Binary-relevance NDCG truncated at |GT|, averaged over faulty intervals.
pub fn ndcg_at_100(scores: &[Vec<f64>], truth: &[FaultLabels]) -> Result<Option<f64>> {
    check_ranked(scores, truth)?;
    let mut total = 0.0;
    let mut count = 0;
    for (s, t) in scores.iter().zip(truth) {
        let gt = t.faulty_hosts();
        if gt.is_empty() {
            continue;
        }
        let discount = |rank: usize| 1.0 / ((rank + 2) as f64).log2();
        let dcg: f64 = ranking(s)[..gt.len()]
            .iter()
            .enumerate()
            .filter(|(_, h)| gt.contains(h))
            .map(|(r, _)| discount(r))
            .sum();
        let ideal: f64 = (0..gt.len()).map(discount).sum();
        total += dcg / ideal;
        count += 1;
    }
    Ok((count > 0).then(|| total / count as f64))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub hitrate_100: Option<f64>,
    pub ndcg_100: Option<f64>,
}

pub fn diagnosis_metrics(scores: &[Vec<f64>], truth: &[FaultLabels]) -> Result<DiagnosisReport> {
    Ok(DiagnosisReport {
        hitrate_100: hitrate_at_100(scores, truth)?,
        ndcg_100: ndcg_at_100(scores, truth)?,
    })
}

/// Share of truly faulty hosts whose predicted class matches; `None` without faults.
pub fn classification_accuracy(pred: &[Vec<u8>], truth: &[FaultLabels]) -> Result<Option<f64>> {
    if pred.len() != truth.len() {
        return Err(Error::shape("prediction and label counts differ"));
    }
    let mut hit = 0;
    let mut total = 0;
    for (p, t) in pred.iter().zip(truth) {
        for (a, b) in p.iter().zip(&t.0) {
            if *b > 0 {
                total += 1;
                hit += usize::from(a == b);
            }
        }
    }
    Ok((total > 0).then(|| hit as f64 / total as f64))
}

/// Among intervals where a fault was predicted, the share whose candidate
/// schedule the discriminator preferred strictly. `None` without candidates.
pub fn improvement_ratio(records: &[DecisionRecord]) -> Option<f64> {
    let candidates: Vec<_> = records.iter().filter(|r| r.fault_predicted).collect();
    if candidates.is_empty() {
        return None;
    }
    let better = candidates.iter().filter(|r| r.d[1] > r.d[0]).count();
    Some(better as f64 / candidates.len() as f64)
}

pub fn overhead_ratio(model_time_s: f64, scheduler_time_s: f64) -> Result<f64> {
    if !(scheduler_time_s > 0.0) {
        return Err(Error::data(format!("scheduler time must be positive, got {scheduler_time_s}")));
    }
    Ok(model_time_s / scheduler_time_s)
}

/// Aggregate QoS of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub intervals: usize,
    pub improvement_ratio: Option<f64>,
    pub overhead_ratio: Option<f64>,
    pub energy_kwh: f64,
    pub completed_tasks: usize,
    pub mean_response_time_s: f64,
    /// Violations over completed tasks.
    pub slo_violation_fraction: f64,
    /// Per app class A, B, C; `None` when a class completed nothing.
    pub slo_violation_by_class: [Option<f64>; 3],
    pub migration_count: usize,
    pub mean_cpu_utilization: f64,
    pub mean_ram_utilization: f64,
}

/// Sums and means over a run's interval records.
pub fn qos_summary(records: &[IntervalRecord], hosts: &[HostSpec]) -> Result<RunReport> {
    if records.is_empty() {
        return Err(Error::data("no interval records"));
    }
    let mut report = RunReport {
        intervals: records.len(),
        ..Default::default()
    };
    let mut response = 0.0;
    let mut violated = 0;
    let mut class_total = [0usize; 3];
    let mut class_violated = [0usize; 3];
    let mut cpu = 0.0;
    let mut ram = 0.0;
    for r in records {
        if r.raw_features.len() != hosts.len() {
            return Err(Error::shape(format!("record for {} hosts, cluster has {}", r.raw_features.len(), hosts.len())));
        }
        report.energy_kwh += r.energy_wh / 1000.0;
        report.migration_count += r.migration_count;
        for c in &r.completed {
            report.completed_tasks += 1;
            response += c.response_time;
            class_total[c.app_class.index()] += 1;
            if c.slo_violated {
                violated += 1;
                class_violated[c.app_class.index()] += 1;
            }
        }
        for (f, h) in r.raw_features.iter().zip(hosts) {
            cpu += (f[0] / h.cpu_capacity).min(1.0);
            ram += (f[1] / h.ram_capacity).min(1.0);
        }
    }
    let host_intervals = (records.len() * hosts.len()) as f64;
    report.mean_response_time_s = if report.completed_tasks > 0 {
        response / report.completed_tasks as f64
    } else {
        0.0
    };
    report.slo_violation_fraction = ratio(violated, report.completed_tasks);
    for c in AppClass::ALL {
        let i = c.index();
        report.slo_violation_by_class[i] = (class_total[i] > 0).then(|| class_violated[i] as f64 / class_total[i] as f64);
    }
    report.mean_cpu_utilization = cpu / host_intervals;
    report.mean_ram_utilization = ram / host_intervals;
    Ok(report)
}
