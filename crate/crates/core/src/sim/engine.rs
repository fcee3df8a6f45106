use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schedule::{Assignment, Schedule};
use super::types::{AppClass, FaultClass, FaultLabels, FaultPlan, HostSpec, Task};
use super::window::NUM_FEATURES;
use super::workload::{generate_workloads, WorkloadConfig};
use crate::error::{Error, Result};

/// Simulation constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub interval_seconds: f64,
    pub subticks: usize,
    pub cpu_threshold: f64,
    pub ram_threshold: f64,
    pub net_threshold: f64,
    /// A condition must hold this long within an interval to produce a label.
    pub sustain_seconds: f64,
    /// MB leaked per second by a severity-1 RAM fault.
    pub leak_mb_per_s: f64,
    /// MB/s a fully I/O-bound task sends.
    pub task_net_tx: f64,
    pub task_net_rx: f64,
    pub task_disk_read: f64,
    pub task_disk_write: f64,
    /// Normalisation bound of the container-count feature.
    pub max_containers: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            interval_seconds: 300.0,
            subticks: 20,
            cpu_threshold: 0.9,
            ram_threshold: 0.9,
            net_threshold: 0.9,
            sustain_seconds: 60.0,
            leak_mb_per_s: 1.0 / 3.0,
            task_net_tx: 20.0,
            task_net_rx: 12.0,
            task_disk_read: 10.0,
            task_disk_write: 6.0,
            max_containers: 12.0,
        }
    }
}

impl SimParams {
    pub fn subtick_seconds(&self) -> f64 {
        self.interval_seconds / self.subticks as f64
    }

    /// Consecutive sub-ticks needed for a sustained condition.
    pub fn sustain_subticks(&self) -> usize {
        ((self.sustain_seconds / self.subtick_seconds()) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.interval_seconds,
            self.max_containers,
            self.sustain_seconds,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.subticks == 0 {
            return Err(Error::param("interval length, sub-ticks, sustain time and container bound must be positive"));
        }
        let rates = [
            self.leak_mb_per_s,
            self.task_net_tx,
            self.task_net_rx,
            self.task_disk_read,
            self.task_disk_write,
        ];
        if rates.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param("traffic and leak rates must be non-negative"));
        }
        Ok(())
    }
}

/// The immutable part of a simulation: hardware, constants, workload model and faults.
#[derive(Clone, Debug, PartialEq)]
pub struct SimEnv {
    pub hosts: Vec<HostSpec>,
    pub params: SimParams,
    pub workload: WorkloadConfig,
    pub faults: FaultPlan,
}

impl SimEnv {
    pub fn new(hosts: Vec<HostSpec>, params: SimParams, workload: WorkloadConfig, faults: FaultPlan) -> Result<Self> {
        if hosts.is_empty() {
            return Err(Error::param("cluster needs at least one host"));
        }
        for h in &hosts {
            h.validate()?;
        }
        params.validate()?;
        workload.validate()?;
        faults.validate(hosts.len())?;
        Ok(Self { hosts, params, workload, faults })
    }

    pub fn m(&self) -> usize {
        self.hosts.len()
    }

    /// Energy of every host at full power for `intervals` intervals, in Wh.
    pub fn max_energy_wh(&self, intervals: usize) -> f64 {
        let p: f64 = self.hosts.iter().map(|h| h.power_max).sum();
        p * intervals as f64 * self.params.interval_seconds / 3600.0
    }
}

/// An active task and where it runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resident {
    pub task: Task,
    pub host: usize,
    /// Compute units per second achieved in the last sub-tick.
    pub last_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletedTask {
    pub id: u64,
    pub app_class: AppClass,
    pub response_time: f64,
    pub slo_violated: bool,
}

/// Accounting for one simulated interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub interval: u64,
    /// `m × n` raw host features, see [`super::window::FEATURE_NAMES`].
    pub raw_features: Vec<Vec<f64>>,
    pub energy_wh: f64,
    pub host_energy_wh: Vec<f64>,
    pub completed: Vec<CompletedTask>,
    pub migration_count: usize,
    pub migration_time_s: f64,
    pub labels: FaultLabels,
    /// Tasks still running at the end of the interval.
    pub active_tasks: usize,
    /// Running tasks projected to miss their deadline at their last observed rate.
    pub at_risk_tasks: usize,
}

impl IntervalRecord {
    pub fn slo_violations(&self) -> usize {
        self.completed.iter().filter(|c| c.slo_violated).count()
    }
}

/// Mutable simulation state. Cloning it is a full snapshot.
#[derive(Clone, Debug)]
pub struct ClusterState {
    env: Arc<SimEnv>,
    pub active: Vec<Resident>,
    pub leaked_ram: Vec<f64>,
    pub interval_index: u64,
    rng: ChaCha8Rng,
    next_task_id: u64,
    /// Raw features of the previous interval, zeros before the first.
    pub last_features: Vec<Vec<f64>>,
}

/// A frozen state plus the arrivals of the interval to replay.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub state: ClusterState,
    pub arrivals: Vec<Task>,
}

impl ClusterState {
    pub fn new(env: Arc<SimEnv>, seed: u64) -> Self {
        let m = env.m();
        Self {
            env,
            active: Vec::new(),
            leaked_ram: vec![0.0; m],
            interval_index: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_task_id: 0,
            last_features: vec![vec![0.0; NUM_FEATURES]; m],
        }
    }

    pub fn env(&self) -> &Arc<SimEnv> {
        &self.env
    }

    pub fn m(&self) -> usize {
        self.env.m()
    }

    /// Draws this interval's arrivals from the state's generator.
    pub fn draw_arrivals(&mut self, lambda: f64) -> Result<Vec<Task>> {
        let env = Arc::clone(&self.env);
        generate_workloads(
            &mut self.rng,
            lambda,
            &env.workload,
            self.interval_index,
            env.params.interval_seconds,
            &mut self.next_task_id,
        )
    }

    /// Schedule that keeps every active task where it is and adds no arrivals.
    pub fn stay_schedule(&self) -> Schedule {
        let rows = self
            .active
            .iter()
            .map(|r| Assignment { task_id: r.task.id, current: Some(r.host), host: r.host })
            .collect();
        Schedule::from_rows(self.m(), rows).expect("active tasks are placed on valid hosts")
    }

    pub fn snapshot(&self, arrivals: &[Task]) -> Snapshot {
        Snapshot { state: self.clone(), arrivals: arrivals.to_vec() }
    }

    /// Advances in place.
    pub fn advance(&mut self, schedule: &Schedule, arrivals: &[Task]) -> Result<IntervalRecord> {
        let (next, record) = self.step(schedule, arrivals)?;
        *self = next;
        Ok(record)
    }

    fn check_schedule(&self, schedule: &Schedule, arrivals: &[Task]) -> Result<BTreeMap<u64, usize>> {
        let m = self.m();
        if schedule.m() != m {
            return Err(Error::schedule(format!("schedule has {} hosts, cluster has {m}", schedule.m())));
        }
        let mut placement = BTreeMap::new();
        for r in schedule.rows() {
            if r.host >= m {
                return Err(Error::schedule(format!("task {} placed on host {} but m = {m}", r.task_id, r.host)));
            }
            if placement.insert(r.task_id, r.host).is_some() {
                return Err(Error::schedule(format!("task {} scheduled twice", r.task_id)));
            }
        }
        if placement.len() != self.active.len() + arrivals.len() {
            return Err(Error::schedule(format!(
                "schedule covers {} tasks, expected {} active and {} arriving",
                placement.len(),
                self.active.len(),
                arrivals.len()
            )));
        }
        for r in &self.active {
            if !placement.contains_key(&r.task.id) {
                return Err(Error::schedule(format!("active task {} missing from schedule", r.task.id)));
            }
        }
        for t in arrivals {
            t.validate()?;
            if !placement.contains_key(&t.id) {
                return Err(Error::schedule(format!("arriving task {} missing from schedule", t.id)));
            }
        }
        for a in schedule.rows() {
            if let Some(cur) = a.current {
                let actual = self.active.iter().find(|r| r.task.id == a.task_id).map(|r| r.host);
                if actual != Some(cur) {
                    return Err(Error::schedule(format!(
                        "task {} listed on host {cur} but runs on {:?}",
                        a.task_id, actual
                    )));
                }
            }
        }
        Ok(placement)
    }

    /// Simulates one interval without touching `self`.
    pub fn step(&self, schedule: &Schedule, arrivals: &[Task]) -> Result<(ClusterState, IntervalRecord)> {
        let placement = self.check_schedule(schedule, arrivals)?;
        let env = Arc::clone(&self.env);
        let p = &env.params;
        let hosts = &env.hosts;
        let m = hosts.len();
        let dt = p.subtick_seconds();
        let interval = self.interval_index;
        let start_time = interval as f64 * p.interval_seconds;
        let need = p.sustain_subticks();

        let mut next = self.clone();
        let mut migration_count = 0;
        let mut migration_time_s = 0.0;
        // (task index, src, dst, downtime)
        let mut downtime = Vec::new();
        for r in next.active.iter_mut() {
            let target = placement[&r.task.id];
            if target != r.host {
                let bw = hosts[r.host].net_bandwidth.min(hosts[target].net_bandwidth);
                let d = r.task.ram_footprint / bw;
                downtime.push((r.task.id, r.host, target, d));
                migration_count += 1;
                migration_time_s += d;
                r.host = target;
            }
        }
        for t in arrivals {
            next.active.push(Resident { task: t.clone(), host: placement[&t.id], last_rate: 0.0 });
        }
        let down_of = |id: u64| downtime.iter().find(|d| d.0 == id).map_or(0.0, |d| d.3);

        let severity = env.faults.severities(m, interval);
        for (h, s) in severity.iter().enumerate() {
            if s[1] == 0.0 {
                next.leaked_ram[h] = 0.0;
            }
        }

        let mut feat = vec![vec![0.0; NUM_FEATURES]; m];
        let mut host_energy = vec![0.0; m];
        let mut run = vec![[0usize; 3]; m];
        let mut sustained = vec![[false; 3]; m];
        let mut completed = Vec::new();

        for s in 0..p.subticks {
            let t0 = s as f64 * dt;
            let t1 = t0 + dt;
            let mut finished = Vec::new();
            for h in 0..m {
                let spec = &hosts[h];
                let [cpu_sev, ram_sev, net_sev] = severity[h];
                next.leaked_ram[h] += p.leak_mb_per_s * ram_sev * dt;

                let idx: Vec<usize> = (0..next.active.len()).filter(|i| next.active[*i].host == h).collect();
                let avail: Vec<f64> = idx
                    .iter()
                    .map(|i| {
                        let d = down_of(next.active[*i].task.id);
                        ((t1 - t0.max(d)) / dt).clamp(0.0, 1.0)
                    })
                    .collect();

                let ram_used: f64 = idx.iter().map(|i| next.active[*i].task.ram_footprint).sum::<f64>() + next.leaked_ram[h];
                let ram_factor = if ram_used > spec.ram_capacity { spec.ram_capacity / ram_used } else { 1.0 };

                let mut tx = 0.0;
                let mut rx = 0.0;
                let mut disk_r = 0.0;
                let mut disk_w = 0.0;
                for (i, a) in idx.iter().zip(&avail) {
                    let io = next.active[*i].task.io_intensity;
                    tx += io * p.task_net_tx * a;
                    rx += io * p.task_net_rx * a;
                    disk_r += io * p.task_disk_read * a;
                    disk_w += io * p.task_disk_write * a;
                }
                let bw_free = spec.net_bandwidth * (1.0 - net_sev);
                let demand = tx.max(rx);
                let net_factor = if demand > bw_free { bw_free / demand } else { 1.0 };

                let tick_capacity = spec.cpu_capacity * dt / p.interval_seconds;
                let capacity = tick_capacity * (1.0 - cpu_sev);
                let share = capacity.min(tick_capacity * env.workload.task_share);
                let caps: Vec<f64> = idx
                    .iter()
                    .zip(&avail)
                    .map(|(i, a)| {
                        let task = &next.active[*i].task;
                        let io = task.io_intensity;
                        let f = ((1.0 - io) + io * net_factor) * ram_factor * a;
                        task.remaining().min(f * share)
                    })
                    .collect();
                let alloc = water_fill(capacity, &caps);
                for (i, a) in idx.iter().zip(&alloc) {
                    let r = &mut next.active[*i];
                    r.task.progress = (r.task.progress + a).min(r.task.total_demand);
                    r.last_rate = a / dt;
                    if r.task.total_demand - r.task.progress <= 1e-9 * r.task.total_demand.max(1.0) {
                        r.task.progress = r.task.total_demand;
                        finished.push(r.task.id);
                    }
                }

                // migration traffic during downtime
                let mut mig_tx = 0.0;
                let mut mig_rx = 0.0;
                for &(_, src, dst, d) in &downtime {
                    let overlap = ((d.min(t1) - t0) / dt).clamp(0.0, 1.0);
                    if overlap > 0.0 {
                        let rate = hosts[src].net_bandwidth.min(hosts[dst].net_bandwidth) * overlap;
                        if src == h {
                            mig_tx += rate;
                        }
                        if dst == h {
                            mig_rx += rate;
                        }
                    }
                }
                let hog = net_sev * spec.net_bandwidth;
                let tx_total = tx + hog + mig_tx;
                let rx_total = rx + hog + mig_rx;

                let used = alloc.iter().sum::<f64>() + cpu_sev * tick_capacity;
                let util = (used / tick_capacity).clamp(0.0, 1.0);
                let power = spec.power(util);
                host_energy[h] += power * dt / 3600.0;

                let f = &mut feat[h];
                f[0] += used;
                f[1] += ram_used / p.subticks as f64;
                f[2] += disk_r / p.subticks as f64;
                f[3] += disk_w / p.subticks as f64;
                f[4] += tx_total.min(spec.net_bandwidth) / p.subticks as f64;
                f[5] += rx_total.min(spec.net_bandwidth) / p.subticks as f64;
                f[6] += idx.len() as f64 / p.subticks as f64;
                f[7] += power / p.subticks as f64;

                let conditions = [
                    util > p.cpu_threshold,
                    ram_sev > 0.0 || ram_used / spec.ram_capacity > p.ram_threshold,
                    tx_total.max(rx_total) > p.net_threshold * spec.net_bandwidth,
                ];
                for c in 0..3 {
                    if conditions[c] {
                        run[h][c] += 1;
                        if run[h][c] >= need {
                            sustained[h][c] = true;
                        }
                    } else {
                        run[h][c] = 0;
                    }
                }
            }
            if !finished.is_empty() {
                let now = start_time + t1;
                next.active.retain(|r| {
                    if !finished.contains(&r.task.id) {
                        return true;
                    }
                    let response_time = now - r.task.arrival_interval as f64 * p.interval_seconds;
                    completed.push(CompletedTask {
                        id: r.task.id,
                        app_class: r.task.app_class,
                        response_time,
                        slo_violated: response_time > r.task.deadline,
                    });
                    false
                });
            }
        }

        let labels = FaultLabels(
            sustained
                .iter()
                .map(|s| FaultClass::ALL.iter().zip(s).find(|(_, on)| **on).map_or(0, |(c, _)| c.label()))
                .collect(),
        );
        let end_time = start_time + p.interval_seconds;
        let at_risk_tasks = next
            .active
            .iter()
            .filter(|r| {
                let elapsed = end_time - r.task.arrival_interval as f64 * p.interval_seconds;
                if r.last_rate <= 0.0 {
                    return true;
                }
                elapsed + r.task.remaining() / r.last_rate > r.task.deadline
            })
            .count();

        next.interval_index += 1;
        next.last_features = feat.clone();
        let record = IntervalRecord {
            interval,
            raw_features: feat,
            energy_wh: host_energy.iter().sum(),
            host_energy_wh: host_energy,
            completed,
            migration_count,
            migration_time_s,
            labels,
            active_tasks: next.active.len(),
            at_risk_tasks,
        };
        Ok((next, record))
    }
}

/// Max-min fair split of `capacity` among tasks with individual caps.
pub fn water_fill(capacity: f64, caps: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..caps.len()).collect();
    order.sort_by(|a, b| caps[*a].total_cmp(&caps[*b]).then(a.cmp(b)));
    let mut out = vec![0.0; caps.len()];
    let mut left = capacity.max(0.0);
    for (done, &i) in order.iter().enumerate() {
        let share = left / (caps.len() - done) as f64;
        let a = caps[i].max(0.0).min(share);
        out[i] = a;
        left -= a;
    }
    out
}

/// `−(w · energy_norm + (1 − w) · slo_fraction)` over consecutive records.
///
/// Tasks still running after the last record count as violations when
/// projected to miss their deadline.
pub fn qos_score(records: &[IntervalRecord], env: &SimEnv, w: f64) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let energy: f64 = records.iter().map(|r| r.energy_wh).sum();
    let energy_norm = energy / env.max_energy_wh(records.len());
    let last = records.last().expect("non-empty");
    let done: usize = records.iter().map(|r| r.completed.len()).sum();
    let violated: usize = records.iter().map(|r| r.slo_violations()).sum();
    let denom = done + last.active_tasks;
    let slo = if denom == 0 {
        0.0
    } else {
        (violated + last.at_risk_tasks) as f64 / denom as f64
    };
    -(w * energy_norm + (1.0 - w) * slo)
}

/// Replays `schedule` on a copy of the snapshot for `horizon` intervals and scores it.
///
/// Later intervals receive no new arrivals and keep every task in place.
pub fn cosimulate(snapshot: &Snapshot, schedule: &Schedule, horizon: usize, w: f64) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::param("co-simulation horizon must be at least 1"));
    }
    let mut state = snapshot.state.clone();
    let mut records = vec![state.advance(schedule, &snapshot.arrivals)?];
    for _ in 1..horizon {
        let stay = state.stay_schedule();
        records.push(state.advance(&stay, &[])?);
    }
    Ok(qos_score(&records, state.env(), w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::types::FaultEvent;

    // one task may use a whole host unless a test says otherwise
    fn env(hosts: Vec<HostSpec>, faults: FaultPlan) -> Arc<SimEnv> {
        let workload = WorkloadConfig { task_share: 1.0, ..WorkloadConfig::default() };
        Arc::new(SimEnv::new(hosts, SimParams::default(), workload, faults).unwrap())
    }

    fn task(id: u64, demand: f64, deadline: f64) -> Task {
        Task {
            id,
            app_class: AppClass::A,
            total_demand: demand,
            ram_footprint: 200.0,
            io_intensity: 0.0,
            arrival_interval: 0,
            deadline,
            progress: 0.0,
        }
    }

    fn place(m: usize, rows: &[(u64, Option<usize>, usize)]) -> Schedule {
        Schedule::from_rows(
            m,
            rows.iter().map(|(id, cur, h)| Assignment { task_id: *id, current: *cur, host: *h }).collect(),
        )
        .unwrap()
    }

    #[test]
    fn full_capacity_task_finishes_in_one_interval() {
        let state = ClusterState::new(env(vec![HostSpec::small()], FaultPlan::none()), 1);
        let t = task(0, 100.0, 1000.0);
        let (next, rec) = state.step(&place(1, &[(0, None, 0)]), &[t]).unwrap();
        assert_eq!(rec.completed.len(), 1);
        assert_eq!(rec.completed[0].response_time, 300.0);
        assert!(!rec.completed[0].slo_violated);
        assert!(next.active.is_empty());
    }

    #[test]
    fn task_share_caps_one_task() {
        let w = WorkloadConfig { task_share: 0.5, ..WorkloadConfig::default() };
        let e = Arc::new(SimEnv::new(vec![HostSpec::small()], SimParams::default(), w, FaultPlan::none()).unwrap());
        let mut state = ClusterState::new(e, 1);
        let r1 = state.advance(&place(1, &[(0, None, 0)]), &[task(0, 100.0, 1000.0)]).unwrap();
        assert!(r1.completed.is_empty());
        assert!((r1.raw_features[0][0] - 50.0).abs() < 1e-9);
        assert_eq!(r1.labels.0, vec![0]);
        let r2 = state.advance(&place(1, &[(0, Some(0), 0), (1, None, 0)]), &[task(1, 100.0, 1000.0)]).unwrap();
        assert_eq!(r2.completed[0].response_time, 600.0);
        assert_eq!(r2.labels.0, vec![1]);
    }

    #[test]
    fn idle_cluster_draws_idle_power() {
        let hosts = HostSpec::two_tier(4);
        let state = ClusterState::new(env(hosts.clone(), FaultPlan::none()), 1);
        let (_, rec) = state.step(&Schedule::new(4), &[]).unwrap();
        for (e, h) in rec.host_energy_wh.iter().zip(&hosts) {
            assert!((e - h.power_idle * 300.0 / 3600.0).abs() < 1e-12);
        }
        assert_eq!(rec.labels, FaultLabels::healthy(4));
    }

    #[test]
    fn half_cpu_fault_doubles_runtime() {
        let faults = FaultPlan {
            events: vec![FaultEvent { host: 0, start_interval: 0, duration: 5, class: FaultClass::Cpu, severity: 0.5 }],
        };
        let mut state = ClusterState::new(env(vec![HostSpec::small()], faults), 1);
        let r1 = state.advance(&place(1, &[(0, None, 0)]), &[task(0, 100.0, 1000.0)]).unwrap();
        assert!(r1.completed.is_empty());
        assert_eq!(r1.labels.0, vec![1]);
        let r2 = state.advance(&state.stay_schedule(), &[]).unwrap();
        assert_eq!(r2.completed.len(), 1);
        assert_eq!(r2.completed[0].response_time, 600.0);
    }

    #[test]
    fn ram_fault_leaks_and_labels() {
        let faults = FaultPlan {
            events: vec![FaultEvent { host: 1, start_interval: 0, duration: 1, class: FaultClass::Ram, severity: 1.0 }],
        };
        let state = ClusterState::new(env(HostSpec::two_tier(2), faults), 1);
        let (next, rec) = state.step(&Schedule::new(2), &[]).unwrap();
        assert_eq!(rec.labels.0, vec![0, 2]);
        assert!((next.leaked_ram[1] - 100.0).abs() < 1e-9);
        let (after, rec2) = next.step(&Schedule::new(2), &[]).unwrap();
        assert_eq!(rec2.labels.0, vec![0, 0]);
        assert_eq!(after.leaked_ram[1], 0.0);
    }

    #[test]
    fn network_fault_labels_and_slows_io_tasks() {
        let faults = FaultPlan {
            events: vec![FaultEvent { host: 0, start_interval: 0, duration: 1, class: FaultClass::Network, severity: 0.95 }],
        };
        let e = env(HostSpec::two_tier(2), faults);
        let state = ClusterState::new(e, 1);
        let mut a = task(0, 100.0, 1000.0);
        a.io_intensity = 0.8;
        let mut b = a.clone();
        b.id = 1;
        let (next, rec) = state.step(&place(2, &[(0, None, 0), (1, None, 1)]), &[a, b]).unwrap();
        // host 1 runs flat out, which the CPU rule also flags
        assert_eq!(rec.labels.0, vec![3, 1]);
        assert_eq!(rec.completed.iter().map(|c| c.id).collect::<Vec<_>>(), vec![1]);
        assert_eq!(next.active.len(), 1);
    }

    #[test]
    fn label_priority_cpu_over_ram() {
        let faults = FaultPlan {
            events: vec![
                FaultEvent { host: 0, start_interval: 0, duration: 1, class: FaultClass::Ram, severity: 1.0 },
                FaultEvent { host: 0, start_interval: 0, duration: 1, class: FaultClass::Cpu, severity: 0.95 },
            ],
        };
        let state = ClusterState::new(env(vec![HostSpec::small()], faults), 1);
        let (_, rec) = state.step(&Schedule::new(1), &[]).unwrap();
        assert_eq!(rec.labels.0, vec![1]);
    }

    #[test]
    fn migration_costs_downtime() {
        let e = env(HostSpec::two_tier(2), FaultPlan::none());
        let mut state = ClusterState::new(e, 1);
        state.advance(&place(2, &[(0, None, 0)]), &[task(0, 1000.0, 1e6)]).unwrap();
        let before = state.active[0].task.progress;
        let rec = state.advance(&place(2, &[(0, Some(0), 1)]), &[]).unwrap();
        assert_eq!(rec.migration_count, 1);
        assert!((rec.migration_time_s - 2.0).abs() < 1e-12);
        let gained = state.active[0].task.progress - before;
        assert!(gained < 100.0 && gained > 95.0, "{gained}");
        assert_eq!(state.active[0].host, 1);
    }

    #[test]
    fn invalid_schedules_rejected() {
        let state = ClusterState::new(env(HostSpec::two_tier(2), FaultPlan::none()), 1);
        let t = task(0, 10.0, 100.0);
        assert!(matches!(state.step(&Schedule::new(3), &[]), Err(Error::Schedule(_))));
        assert!(matches!(state.step(&Schedule::new(2), &[t.clone()]), Err(Error::Schedule(_))));
        assert!(matches!(state.step(&place(2, &[(5, None, 0)]), &[t]), Err(Error::Schedule(_))));
    }

    #[test]
    fn water_fill_is_fair_and_bounded() {
        let a = water_fill(10.0, &[1.0, 8.0, 8.0]);
        assert_eq!(a, vec![1.0, 4.5, 4.5]);
        let a = water_fill(10.0, &[1.0, 2.0]);
        assert_eq!(a, vec![1.0, 2.0]);
        assert!(water_fill(0.0, &[3.0]).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn snapshot_replay_matches_live_step() {
        let faults = FaultPlan::generate(&crate::sim::FaultRates::heavy(), 4, 20, 3).unwrap();
        let mut state = ClusterState::new(env(HostSpec::two_tier(4), faults), 11);
        for _ in 0..5 {
            let arrivals = state.draw_arrivals(4.0).unwrap();
            let mut sched = state.stay_schedule();
            for (i, t) in arrivals.iter().enumerate() {
                sched.push(Assignment { task_id: t.id, current: None, host: i % 4 }).unwrap();
            }
            let snap = state.snapshot(&arrivals);
            let (_, live) = state.step(&sched, &arrivals).unwrap();
            let (_, replay) = snap.state.step(&sched, &snap.arrivals).unwrap();
            assert_eq!(live, replay);
            let score = cosimulate(&snap, &sched, 1, 0.5).unwrap();
            assert_eq!(score.to_bits(), qos_score(&[live], state.env(), 0.5).to_bits());
            state.advance(&sched, &arrivals).unwrap();
        }
    }

    #[test]
    fn idle_score_is_weighted_idle_energy() {
        let e = env(HostSpec::two_tier(2), FaultPlan::none());
        let state = ClusterState::new(Arc::clone(&e), 1);
        let snap = state.snapshot(&[]);
        let score = cosimulate(&snap, &Schedule::new(2), 1, 0.5).unwrap();
        let idle: f64 = e.hosts.iter().map(|h| h.power_idle).sum::<f64>() / e.hosts.iter().map(|h| h.power_max).sum::<f64>();
        assert!((score + 0.5 * idle).abs() < 1e-12);
        assert!(cosimulate(&snap, &Schedule::new(2), 0, 0.5).is_err());
    }

    #[test]
    fn leaving_a_faulted_host_scores_higher() {
        let faults = FaultPlan {
            events: vec![FaultEvent { host: 0, start_interval: 1, duration: 3, class: FaultClass::Cpu, severity: 0.95 }],
        };
        let mut state = ClusterState::new(env(HostSpec::two_tier(2), faults), 1);
        state.advance(&place(2, &[(0, None, 0)]), &[task(0, 150.0, 700.0)]).unwrap();
        let snap = state.snapshot(&[]);
        let stay = cosimulate(&snap, &place(2, &[(0, Some(0), 0)]), 1, 0.5).unwrap();
        let moved = cosimulate(&snap, &place(2, &[(0, Some(0), 1)]), 1, 0.5).unwrap();
        assert!(moved > stay, "moved {moved} stay {stay}");
    }
}
