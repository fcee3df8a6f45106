use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::model::{compose_schedule, select_schedule, GanInput, GanModel};
use super::types::DecisionRecord;
use crate::error::{Error, Result};
use crate::fpe::{FaultDetectionOutput, Fpe};
use crate::sim::{cosimulate, MetricsWindow, Schedule, Snapshot};
use crate::tensor::{AdamW, Graph, Tensor, Var};

/// One interval of the training stream.
#[derive(Clone, Debug)]
pub struct GanInterval {
    pub interval: u64,
    pub window: MetricsWindow,
    /// Baseline decision for the interval.
    pub schedule: Schedule,
    /// Cluster state before the interval, with its arrivals.
    pub snapshot: Snapshot,
}

/// Source of training intervals that also runs the placement chosen for each.
pub trait TrainingCluster {
    /// The next interval, or `None` when the run is over.
    fn observe(&mut self) -> Option<Result<GanInterval>>;
    /// Runs `schedule` for the interval last observed.
    fn execute(&mut self, schedule: &Schedule) -> Result<()>;
}

/// Recorded intervals; chosen placements are dropped.
#[derive(Clone, Debug)]
pub struct Replay<I>(pub I);

impl<I: Iterator<Item = Result<GanInterval>>> TrainingCluster for Replay<I> {
    fn observe(&mut self) -> Option<Result<GanInterval>> {
        self.0.next()
    }

    fn execute(&mut self, _: &Schedule) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanTrainConfig {
    pub optimizer: AdamW,
    /// Intervals replayed per co-simulation.
    pub horizon: usize,
    /// Energy weight in the QoS score.
    pub qos_weight: f64,
    /// Std of Gaussian noise added to Δ to decode extra candidates the
    /// discriminator is trained on. Zero disables them.
    pub explore: f64,
    /// Noisy candidates per interval.
    pub explore_samples: usize,
    pub seed: u64,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        Self {
            optimizer: AdamW::default(),
            horizon: 5,
            qos_weight: 0.5,
            explore: 0.6,
            explore_samples: 4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GanTrainReport {
    pub decisions: Vec<DecisionRecord>,
    pub discriminator_loss: Vec<f64>,
    pub generator_loss: Vec<f64>,
    /// Intervals dropped because a co-simulation failed.
    pub skipped: usize,
}

/// `−m · log D[y]`: the two-sided cross-entropy collapses to one term
/// because `1 − D[0] = D[1]` for a two-way softmax.
pub fn gan_loss(g: &mut Graph, logits: Var, prefer_new: bool, m: usize) -> Result<Var> {
    let ls = g.log_softmax_rows(logits)?;
    let pick = g.constant(Tensor::row(if prefer_new { &[0.0, 1.0] } else { &[1.0, 0.0] }));
    let picked = g.mul(ls, pick)?;
    let total = g.sum(picked);
    Ok(g.scale(total, -(m as f64)))
}

fn add(a: &Tensor, b: &Tensor) -> Tensor {
    let mut out = a.clone();
    for (o, v) in out.data_mut().iter_mut().zip(b.data()) {
        *o += v;
    }
    out
}

fn candidate(gan: &GanModel, input: &GanInput, s: &Schedule) -> Result<(Option<Tensor>, Schedule)> {
    let mut g = Graph::new();
    match gan.generate(&mut g, &gan.generator.store, input)? {
        Some((delta, _)) => {
            let delta = g.value(delta).clone();
            let (_, n) = compose_schedule(s, &delta)?;
            Ok((Some(delta), n))
        }
        None => Ok((None, s.clone())),
    }
}

/// Discriminator probabilities for the pair `(S, N)` with `N` fixed.
pub fn score_pair(gan: &GanModel, input: &GanInput, n: Option<&Tensor>) -> Result<[f64; 2]> {
    let mut g = Graph::new();
    let nv = n.map(|t| g.constant(t.clone()));
    let (d, _) = gan.discriminate(&mut g, &gan.discriminator.store, input, nv)?;
    let d = g.value(d).data();
    Ok([d[0], d[1]])
}

/// Encoder pass, masked embedding and GAN input for one interval.
pub fn prepare(fpe: &Fpe, window: &MetricsWindow, schedule: &Schedule, carry: &Tensor) -> Result<(FaultDetectionOutput, GanInput, Tensor)> {
    let (det, next) = fpe.detect(window, schedule, carry)?;
    let input = GanInput::new(schedule, &det.fault_embedding, window)?;
    Ok((det, input, next))
}

fn carry_for(fpe: &Fpe, carry: Option<Tensor>, m: usize) -> Tensor {
    match carry {
        Some(c) if c.rows() == m => c,
        _ => fpe.zero_carry(m),
    }
}

/// Online adversarial training against the co-simulator.
///
/// Per interval the discriminator is fitted to which of `S` and `N` scored
/// better, with `N` held fixed; then the generator is pushed towards
/// candidates the updated discriminator prefers, with the discriminator
/// held fixed. The cluster then runs whichever of the two the updated
/// discriminator selects. The encoder is never updated.
pub fn train_gan<C: TrainingCluster>(fpe: &Fpe, gan: &mut GanModel, cluster: &mut C, config: &GanTrainConfig) -> Result<GanTrainReport> {
    if config.explore < 0.0 || !config.explore.is_finite() {
        return Err(Error::param(format!("exploration std {}", config.explore)));
    }
    let noise = Normal::new(0.0, config.explore.max(f64::MIN_POSITIVE)).map_err(|e| Error::param(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = GanTrainReport::default();
    let mut carry: Option<Tensor> = None;
    while let Some(item) = cluster.observe() {
        let step = item?;
        let m = step.schedule.m();
        let c = carry_for(fpe, carry.take(), m);
        let (det, input, next) = prepare(fpe, &step.window, &step.schedule, &c)?;
        carry = Some(next);

        let (delta, n_sched) = candidate(gan, &input, &step.schedule)?;
        let n_tensor = delta.as_ref().map(|d| add(&input.s, d));
        let mut trials = vec![(n_tensor.clone(), n_sched.clone())];
        if config.explore > 0.0 {
            if let Some(base) = delta.as_ref() {
                for _ in 0..config.explore_samples {
                    let mut d = base.clone();
                    let cols = d.cols();
                    for (i, v) in d.data_mut().iter_mut().enumerate() {
                        *v += noise.sample(&mut rng) * input.movable.data()[i / cols];
                    }
                    let explored = compose_schedule(&step.schedule, &d)?.1;
                    trials.push((Some(add(&input.s, &d)), explored));
                }
            }
        }

        let sim_s = match cosimulate(&step.snapshot, &step.schedule, config.horizon, config.qos_weight) {
            Ok(v) => v,
            Err(_) => {
                report.skipped += 1;
                cluster.execute(&step.schedule)?;
                continue;
            }
        };
        let dv = score_pair(gan, &input, n_tensor.as_ref())?;
        let mut sim_n = sim_s;
        for (i, (nt, sched)) in trials.iter().enumerate() {
            // an unchanged schedule carries no comparison so it is only scored
            let sim = if *sched == step.schedule {
                None
            } else {
                match cosimulate(&step.snapshot, sched, config.horizon, config.qos_weight) {
                    Ok(v) => Some(v),
                    Err(_) => {
                        report.skipped += 1;
                        continue;
                    }
                }
            };
            let mut g = Graph::new();
            let nv = nt.as_ref().map(|t| g.constant(t.clone()));
            let (_, logits) = gan.discriminate(&mut g, &gan.discriminator.store, &input, nv)?;
            if i == 0 {
                sim_n = sim.unwrap_or(sim_s);
            }
            if let Some(sim) = sim {
                let l_d = gan_loss(&mut g, logits, sim >= sim_s, m)?;
                let grads = g.backward(l_d)?;
                gan.discriminator.store.zero_grad();
                gan.discriminator.store.accumulate(&g, &grads);
                config.optimizer.step(&mut gan.discriminator.store);
                report.discriminator_loss.push(g.value(l_d).item());
            }
        }

        // generator step through the frozen discriminator
        let mut g = Graph::new();
        if let Some((delta, _)) = gan.generate(&mut g, &gan.generator.store, &input)? {
            let s = g.constant(input.s.clone());
            let n = g.add(s, delta)?;
            let (_, logits) = gan.discriminate(&mut g, &gan.discriminator.store, &input, Some(n))?;
            let l_g = gan_loss(&mut g, logits, true, m)?;
            let grads = g.backward(l_g)?;
            gan.generator.store.zero_grad();
            gan.generator.store.accumulate(&g, &grads);
            config.optimizer.step(&mut gan.generator.store);
            report.generator_loss.push(g.value(l_g).item());
        }

        let mut rec = DecisionRecord::new(step.interval, dv, det.any_detected(), n_sched.migration_count());
        rec.sim_s = Some(sim_s);
        rec.sim_n = Some(sim_n);
        report.decisions.push(rec);
        cluster.execute(&select_schedule(dv, &step.schedule, &n_sched))?;
    }
    Ok(report)
}

/// Result of one inference pass.
#[derive(Clone, Debug)]
pub struct Inference {
    pub schedule: Schedule,
    pub candidate: Schedule,
    pub record: DecisionRecord,
    pub detection: FaultDetectionOutput,
    pub next_carry: Tensor,
}

/// Encoder, generator, discriminator, then selection. No co-simulation.
pub fn infer(
    fpe: &Fpe,
    gan: &GanModel,
    window: &MetricsWindow,
    schedule: &Schedule,
    carry: &Tensor,
    interval: u64,
) -> Result<Inference> {
    let carry = if carry.rows() == schedule.m() { carry.clone() } else { fpe.zero_carry(schedule.m()) };
    let (det, input, next) = prepare(fpe, window, schedule, &carry)?;
    let (delta, n_sched) = candidate(gan, &input, schedule)?;
    let n = delta.map(|d| add(&input.s, &d));
    let d = score_pair(gan, &input, n.as_ref())?;
    let record = DecisionRecord::new(interval, d, det.any_detected(), n_sched.migration_count());
    Ok(Inference {
        schedule: select_schedule(d, schedule, &n_sched),
        candidate: n_sched,
        record,
        detection: det,
        next_carry: next,
    })
}
