use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Phase};
use crate::error::{Error, Result};
use crate::fpe::{Fpe, FpeSample};
use crate::gan::{infer, DecisionRecord, GanInterval, GanModel, TrainingCluster};
use crate::metrics::{improvement_ratio, overhead_ratio, qos_summary, RunReport};
use crate::sim::{
    normalize_window, Assignment, ClusterState, FaultPlan, HostSpec, IntervalRecord, MetricsWindow, Schedule, SimEnv,
    Task, NUM_FEATURES,
};
use crate::tensor::Tensor;

/// Least-loaded first fit.
///
/// Running tasks stay put. Each arrival, in order, goes to the host with
/// the lowest projected CPU utilisation: last interval's utilisation plus
/// the demand already assigned this round, over capacity. Ties go to the
/// lowest index.
pub fn baseline_schedule(state: &ClusterState, arrivals: &[Task]) -> Schedule {
    let env = state.env();
    let mut projected: Vec<f64> = env
        .hosts
        .iter()
        .zip(&state.last_features)
        .map(|(h, f)| f[0] / h.cpu_capacity)
        .collect();
    let mut schedule = state.stay_schedule();
    for t in arrivals {
        let mut best = 0;
        for j in 1..projected.len() {
            if projected[j] < projected[best] {
                best = j;
            }
        }
        projected[best] += t.remaining() / env.hosts[best].cpu_capacity;
        schedule
            .push(Assignment { task_id: t.id, current: None, host: best })
            .expect("arrival ids are fresh and hosts in range");
    }
    schedule
}

/// The last `k` raw feature frames, zero-padded at the start.
#[derive(Clone, Debug)]
pub struct WindowTracker {
    frames: VecDeque<Vec<Vec<f64>>>,
}

impl WindowTracker {
    pub fn new(k: usize, m: usize) -> Self {
        Self { frames: std::iter::repeat_n(vec![vec![0.0; NUM_FEATURES]; m], k).collect() }
    }

    pub fn push(&mut self, frame: Vec<Vec<f64>>) {
        self.frames.pop_front();
        self.frames.push_back(frame);
    }

    pub fn window(&self, hosts: &[HostSpec], max_containers: f64) -> Result<MetricsWindow> {
        let raw: Vec<_> = self.frames.iter().cloned().collect();
        normalize_window(&raw, hosts, max_containers)
    }
}

/// Simulator environment of one phase, with a fault plan long enough for
/// the warmup, the phase and a co-simulation horizon past its end.
pub fn build_env(cfg: &ExperimentConfig, phase: Phase) -> Result<Arc<SimEnv>> {
    cfg.validate()?;
    let seed = cfg.phase_seed(phase);
    let span = cfg.warmup + cfg.intervals(phase) + cfg.gan_train.horizon + 1;
    let faults = FaultPlan::generate(&cfg.faults, cfg.m, span as u64, seed)?;
    Ok(Arc::new(SimEnv::new(cfg.hosts(), cfg.sim_params(), cfg.workload.clone(), faults)?))
}

/// Live cluster plus its window, driven one interval at a time.
#[derive(Clone, Debug)]
pub struct Driver {
    pub state: ClusterState,
    pub tracker: WindowTracker,
    lambda: f64,
}

/// The inputs of the interval about to run.
#[derive(Clone, Debug)]
pub struct Pending {
    pub interval: u64,
    pub window: MetricsWindow,
    pub arrivals: Vec<Task>,
    pub baseline: Schedule,
    /// Seconds spent in the baseline scheduler.
    pub scheduler_s: f64,
}

impl Driver {
    /// Fresh cluster for `phase`, after running the warmup on the baseline.
    pub fn new(cfg: &ExperimentConfig, phase: Phase) -> Result<Self> {
        let env = build_env(cfg, phase)?;
        let mut d = Self {
            state: ClusterState::new(env, cfg.phase_seed(phase).wrapping_add(1)),
            tracker: WindowTracker::new(cfg.k, cfg.m),
            lambda: cfg.lambda,
        };
        for _ in 0..cfg.warmup {
            let p = d.begin()?;
            d.finish(&p.baseline, &p.arrivals)?;
        }
        Ok(d)
    }

    pub fn begin(&mut self) -> Result<Pending> {
        let env = Arc::clone(self.state.env());
        let window = self.tracker.window(&env.hosts, env.params.max_containers)?;
        let arrivals = self.state.draw_arrivals(self.lambda)?;
        let start = Instant::now();
        let baseline = baseline_schedule(&self.state, &arrivals);
        let scheduler_s = start.elapsed().as_secs_f64();
        Ok(Pending { interval: self.state.interval_index, window, arrivals, baseline, scheduler_s })
    }

    pub fn finish(&mut self, schedule: &Schedule, arrivals: &[Task]) -> Result<IntervalRecord> {
        let record = self.state.advance(schedule, arrivals)?;
        self.tracker.push(record.raw_features.clone());
        Ok(record)
    }
}

/// Encoder training data from a run without preemptive migration.
///
/// Sample `t` pairs the window of the `k` intervals before `t` and the
/// baseline schedule of `t` with the labels observed during `t`.
pub fn collect_fpe_dataset(cfg: &ExperimentConfig) -> Result<(Vec<FpeSample>, Vec<IntervalRecord>)> {
    let mut driver = Driver::new(cfg, Phase::Collect)?;
    let n = cfg.intervals(Phase::Collect);
    let mut samples = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let p = driver.begin()?;
        let record = driver.finish(&p.baseline, &p.arrivals)?;
        samples.push(FpeSample { window: p.window, schedule: p.baseline, labels: record.labels.clone() });
        records.push(record);
    }
    Ok((samples, records))
}

/// Training stream for the GAN. The live cluster executes the baseline.
pub fn gan_stream(cfg: &ExperimentConfig, phase: Phase) -> Result<impl Iterator<Item = Result<GanInterval>>> {
    let mut driver = Driver::new(cfg, phase)?;
    let mut left = cfg.intervals(phase);
    Ok(std::iter::from_fn(move || {
        if left == 0 {
            return None;
        }
        left -= 1;
        Some((|| {
            let p = driver.begin()?;
            let snapshot = driver.state.snapshot(&p.arrivals);
            driver.finish(&p.baseline, &p.arrivals)?;
            Ok(GanInterval { interval: p.interval, window: p.window, schedule: p.baseline, snapshot })
        })())
    }))
}

/// Live cluster for GAN training. Each interval runs the placement the
/// trainer hands back; an interval never handed back runs its baseline.
#[derive(Clone, Debug)]
pub struct LiveCluster {
    driver: Driver,
    left: usize,
    pending: Option<(Schedule, Vec<Task>)>,
}

impl LiveCluster {
    pub fn new(cfg: &ExperimentConfig, phase: Phase) -> Result<Self> {
        Ok(Self { driver: Driver::new(cfg, phase)?, left: cfg.intervals(phase), pending: None })
    }

    fn flush(&mut self) -> Result<()> {
        if let Some((baseline, arrivals)) = self.pending.take() {
            self.driver.finish(&baseline, &arrivals)?;
        }
        Ok(())
    }
}

impl TrainingCluster for LiveCluster {
    fn observe(&mut self) -> Option<Result<GanInterval>> {
        if let Err(e) = self.flush() {
            return Some(Err(e));
        }
        if self.left == 0 {
            return None;
        }
        self.left -= 1;
        Some(self.driver.begin().map(|p| {
            let snapshot = self.driver.state.snapshot(&p.arrivals);
            self.pending = Some((p.baseline.clone(), p.arrivals));
            GanInterval { interval: p.interval, window: p.window, schedule: p.baseline, snapshot }
        }))
    }

    fn execute(&mut self, schedule: &Schedule) -> Result<()> {
        match self.pending.take() {
            Some((_, arrivals)) => self.driver.finish(schedule, &arrivals).map(|_| ()),
            None => Err(Error::param("no interval awaiting a placement")),
        }
    }
}

/// One line of a run trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub interval: u64,
    /// Placement executed, one host per row of `schedule`.
    pub schedule: Schedule,
    pub decision: Option<DecisionRecord>,
    pub record: IntervalRecord,
}

/// Wall-clock split of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub model_s: f64,
    pub scheduler_s: f64,
}

impl Timing {
    /// Model over scheduler time; `None` when nothing was modelled or timed.
    pub fn overhead_ratio(&self) -> Option<f64> {
        if self.model_s > 0.0 {
            overhead_ratio(self.model_s, self.scheduler_s).ok()
        } else {
            None
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub trace: Vec<TraceRecord>,
    pub timing: Timing,
}

/// Trained encoder and GAN used by the closed loop.
#[derive(Clone, Copy, Debug)]
pub struct Models<'a> {
    pub fpe: &'a Fpe,
    pub gan: &'a GanModel,
}

/// Baseline scheduling with optional preemptive amendment, `intervals` long.
///
/// With `models` set to `None` the baseline runs alone.
pub fn run_closed_loop(cfg: &ExperimentConfig, models: Option<Models<'_>>, intervals: usize) -> Result<RunOutput> {
    let mut driver = Driver::new(cfg, Phase::Evaluate)?;
    let mut trace = Vec::with_capacity(intervals);
    let mut timing = Timing::default();
    let mut carry: Option<Tensor> = None;
    for _ in 0..intervals {
        let p = driver.begin()?;
        timing.scheduler_s += p.scheduler_s;
        let (schedule, decision) = match models {
            Some(Models { fpe, gan }) => {
                let c = carry.take().unwrap_or_else(|| fpe.zero_carry(cfg.m));
                let start = Instant::now();
                let inf = infer(fpe, gan, &p.window, &p.baseline, &c, p.interval)?;
                timing.model_s += start.elapsed().as_secs_f64();
                carry = Some(inf.next_carry);
                (inf.schedule, Some(inf.record))
            }
            None => (p.baseline, None),
        };
        let record = driver.finish(&schedule, &p.arrivals)?;
        trace.push(TraceRecord { interval: p.interval, schedule, decision, record });
    }
    let report = evaluate_trace(&trace, &cfg.hosts())?;
    Ok(RunOutput { report, trace, timing })
}

/// QoS summary and improvement ratio recomputed from a trace.
pub fn evaluate_trace(trace: &[TraceRecord], hosts: &[HostSpec]) -> Result<RunReport> {
    if trace.is_empty() {
        return Err(Error::data("empty trace"));
    }
    let records: Vec<IntervalRecord> = trace.iter().map(|t| t.record.clone()).collect();
    let mut report = qos_summary(&records, hosts)?;
    let decisions: Vec<DecisionRecord> = trace.iter().filter_map(|t| t.decision.clone()).collect();
    report.improvement_ratio = improvement_ratio(&decisions);
    Ok(report)
}

/// One JSON document per line.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn from_jsonl<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::format(format!("line {}: {e}", i + 1))))
        .collect()
}
