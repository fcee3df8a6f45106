use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpe::{schedule_view, VIEW_DIM};
use crate::sim::{MetricsWindow, Schedule};
use crate::tensor::{FeedForward, Graph, Linear, MultiHeadAttention, ParamId, ParamStore, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    /// Width of the fault embedding rows.
    pub embed: usize,
    /// Metrics per host in the encoder window.
    pub features: usize,
    pub heads: usize,
    pub head_dim: usize,
    /// Rank of the task-by-host readout.
    pub readout: usize,
    pub disc_hidden: usize,
    /// Learned projections of the fault embedding seen by the discriminator.
    pub fault_channels: usize,
    /// Learned projections of the host context seen by the discriminator.
    pub context_channels: usize,
    /// Inverse temperature of the soft placement the discriminator reads.
    pub sharpness: f64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            embed: 8,
            features: 8,
            heads: 2,
            head_dim: 8,
            readout: 8,
            disc_hidden: 16,
            fault_channels: 4,
            context_channels: 4,
            sharpness: 2.0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.embed,
            self.features,
            self.heads,
            self.head_dim,
            self.readout,
            self.disc_hidden,
            self.fault_channels,
            self.context_channels,
        ];
        if counts.contains(&0) {
            return Err(Error::param(format!("zero-sized GAN dimension in {self:?}")));
        }
        if !(self.sharpness > 0.0 && self.sharpness.is_finite()) {
            return Err(Error::param(format!("sharpness {}", self.sharpness)));
        }
        Ok(())
    }

    /// Columns of a host token: fault embedding, schedule view, latest metrics.
    pub fn token_dim(&self) -> usize {
        self.embed + VIEW_DIM + self.features
    }

    /// Width of the discriminator input vector.
    pub fn disc_inputs(&self) -> usize {
        DISC_FIXED + self.fault_channels + self.context_channels
    }
}

const DISC_FIXED: usize = 7;
/// Column of the latest CPU utilisation inside the host context.
const CPU_COLUMN: usize = VIEW_DIM;

/// Everything the pair sees for one interval.
#[derive(Clone, Debug, PartialEq)]
pub struct GanInput {
    /// `p × m` one-hot baseline placement.
    pub s: Tensor,
    /// `m × E` masked fault embedding.
    pub fault_embedding: Tensor,
    /// `m × (5 + n)` schedule view and latest metrics per host.
    pub context: Tensor,
    /// `p × 1`, 1 for running tasks and 0 for new arrivals, which stay where `S` puts them.
    pub movable: Tensor,
}

impl GanInput {
    pub fn new(schedule: &Schedule, fault_embedding: &Tensor, window: &MetricsWindow) -> Result<Self> {
        let m = schedule.m();
        if fault_embedding.rows() != m || window.m != m {
            return Err(Error::shape(format!(
                "schedule over {m} hosts, fault embedding {:?}, window over {} hosts",
                fault_embedding.shape(),
                window.m
            )));
        }
        Ok(Self {
            s: schedule.to_tensor(),
            fault_embedding: fault_embedding.clone(),
            context: host_context(schedule, window),
            movable: movable_rows(schedule),
        })
    }

    pub fn m(&self) -> usize {
        self.fault_embedding.rows()
    }

    pub fn p(&self) -> usize {
        self.s.rows()
    }

    /// 1 for hosts with a non-zero fault embedding row.
    pub fn fault_flags(&self) -> Tensor {
        let m = self.m();
        let flags = (0..m)
            .map(|i| f64::from(self.fault_embedding.row_slice(i).iter().any(|&v| v != 0.0)))
            .collect::<Vec<_>>();
        Tensor::matrix(m, 1, flags).expect("flag shape")
    }
}

/// 1 for rows that already run somewhere.
pub fn movable_rows(schedule: &Schedule) -> Tensor {
    let v = schedule.rows().iter().map(|r| f64::from(r.current.is_some())).collect::<Vec<_>>();
    Tensor::matrix(v.len(), 1, v).expect("mask shape")
}

/// Schedule view next to the last window frame, one row per host.
pub fn host_context(schedule: &Schedule, window: &MetricsWindow) -> Tensor {
    let view = schedule_view(schedule);
    let m = schedule.m();
    let last = window.k - 1;
    let mut out = Tensor::zeros(&[m, VIEW_DIM + window.n]);
    for i in 0..m {
        for c in 0..VIEW_DIM {
            out.set(i, c, view.at(i, c));
        }
        for f in 0..window.n {
            out.set(i, VIEW_DIM + f, window.at(last, i, f));
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct Generator {
    pub store: ParamStore,
    attention: MultiHeadAttention,
    task_proj: Linear,
    host_proj: Linear,
    gain: ParamId,
    bias: ParamId,
}

#[derive(Clone, Debug)]
pub struct Discriminator {
    pub store: ParamStore,
    fault_proj: ParamId,
    context_proj: ParamId,
    head: FeedForward,
}

/// Generator and discriminator with separate parameter stores.
#[derive(Clone, Debug)]
pub struct GanModel {
    pub config: GanConfig,
    pub generator: Generator,
    pub discriminator: Discriminator,
}

impl GanModel {
    pub fn new(config: GanConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = config.token_dim();
        let mut gs = ParamStore::new();
        let attention = MultiHeadAttention::new(
            &mut gs,
            "gen.att",
            config.heads,
            t,
            t,
            config.head_dim,
            config.head_dim,
            &mut rng,
        )?;
        let task_proj = Linear::new(&mut gs, "gen.task", config.heads * config.head_dim, config.readout, &mut rng)?;
        let host_proj = Linear::new(&mut gs, "gen.host", t, config.readout, &mut rng)?;
        let gain = gs.add_filled("gen.ln.gain", 1, 1, 1.0)?;
        let bias = gs.add_zeros("gen.ln.bias", 1, 1)?;

        let mut ds = ParamStore::new();
        let fault_proj = ds.add_glorot("disc.fault", config.embed, config.fault_channels, &mut rng)?;
        let context_proj = ds.add_glorot("disc.context", config.token_dim() - config.embed, config.context_channels, &mut rng)?;
        let head = FeedForward::new(&mut ds, "disc.ff", config.disc_inputs(), config.disc_hidden, 2, &mut rng)?;
        Ok(Self {
            generator: Generator { store: gs, attention, task_proj, host_proj, gain, bias },
            discriminator: Discriminator { store: ds, fault_proj, context_proj, head },
            config,
        })
    }

    fn check(&self, input: &GanInput) -> Result<()> {
        let m = input.m();
        if input.fault_embedding.cols() != self.config.embed
            || input.context.shape() != [m, VIEW_DIM + self.config.features]
            || input.s.cols() != m
            || input.movable.shape() != [input.p(), 1]
        {
            return Err(Error::shape(format!(
                "GAN input S {:?}, E^F {:?}, context {:?} for config {:?}",
                input.s.shape(),
                input.fault_embedding.shape(),
                input.context.shape(),
                self.config
            )));
        }
        Ok(())
    }

    /// `Δ = tanh(γ·LN(S + A) + β)` where `A` is the task-by-host readout of
    /// attention from each task's host token over all host tokens. Rows of
    /// new arrivals are zeroed.
    ///
    /// Returns `(Δ, A)`. With no tasks both are `None`.
    pub fn generate(&self, g: &mut Graph, store: &ParamStore, input: &GanInput) -> Result<Option<(Var, Var)>> {
        self.check(input)?;
        if input.p() == 0 {
            return Ok(None);
        }
        let gen = &self.generator;
        let m = input.m();
        let tokens = g.constant(concat_cols(&input.fault_embedding, &input.context)?);
        let s = g.constant(input.s.clone());
        let queries = g.matmul(s, tokens)?;
        let (ctx, _) = gen.attention.forward(g, store, queries, tokens, tokens)?;
        let left = gen.task_proj.forward(g, store, ctx)?;
        let right = gen.host_proj.forward(g, store, tokens)?;
        let right_t = g.transpose(right);
        let a = g.matmul(left, right_t)?;
        let x = g.add(s, a)?;
        let ones = g.constant(Tensor::filled(&[1, m], 1.0));
        let zeros = g.constant(Tensor::zeros(&[1, m]));
        let ln = g.layer_norm(x, ones, zeros)?;
        let gain = g.param(store, gen.gain);
        let bias = g.param(store, gen.bias);
        let y = g.mul(ln, gain)?;
        let y = g.add(y, bias)?;
        let delta = g.tanh(y);
        let movable = g.constant(input.movable.clone());
        Ok(Some((g.mul(delta, movable)?, a)))
    }

    /// Two-way softmax over discriminator logits for the pair `(S, N)`.
    pub fn discriminate(&self, g: &mut Graph, store: &ParamStore, input: &GanInput, n: Option<Var>) -> Result<(Var, Var)> {
        self.check(input)?;
        let feats = match n {
            Some(n) => self.features(g, store, input, n)?,
            None => g.constant(Tensor::zeros(&[1, self.config.disc_inputs()])),
        };
        let logits = self.discriminator.head.forward(g, store, feats)?;
        let d = g.softmax(logits, 1)?;
        Ok((d, logits))
    }

    /// Pooled features of the candidate against the baseline: how much of
    /// the load stays put, how sharp the rows are, and where load moves
    /// relative to flagged hosts, CPU utilisation and current occupancy.
    fn features(&self, g: &mut Graph, store: &ParamStore, input: &GanInput, n: Var) -> Result<Var> {
        let p = input.p() as f64;
        let s = g.constant(input.s.clone());
        let sharp = g.scale(n, self.config.sharpness);
        let soft = g.softmax(sharp, 1)?;

        let kept = g.mul(soft, s)?;
        let kept = g.sum(kept);
        let stay = g.scale(kept, 1.0 / p);
        let peaks = g.row_max(n)?;
        let peak = g.mean(peaks);

        let occ_s = g.sum_axis(s, 0)?;
        let occ_s = g.scale(occ_s, 1.0 / p);
        let occ_n = g.sum_axis(soft, 0)?;
        let occ_n = g.scale(occ_n, 1.0 / p);
        let shift = g.sub(occ_n, occ_s)?;
        // net tasks moved per host
        let shift = g.scale(shift, p);

        let flags = g.constant(input.fault_flags());
        let on_faulty = g.matmul(occ_s, flags)?;
        let to_faulty = g.matmul(occ_n, flags)?;
        let shift_faulty = g.matmul(shift, flags)?;
        let cpu = g.constant(column(&input.context, CPU_COLUMN));
        let shift_cpu = g.matmul(shift, cpu)?;
        let occ_s_t = g.transpose(occ_s);
        let crowding = g.matmul(shift, occ_s_t)?;

        let ef = g.constant(input.fault_embedding.clone());
        let wf = g.param(store, self.discriminator.fault_proj);
        let channels = g.matmul(ef, wf)?;
        let shift_channels = g.matmul(shift, channels)?;
        let crowding = g.scale(crowding, input.m() as f64);
        let ctx = g.constant(input.context.clone());
        let wc = g.param(store, self.discriminator.context_proj);
        let ctx_channels = g.matmul(ctx, wc)?;
        let shift_ctx = g.matmul(shift, ctx_channels)?;

        g.concat(
            &[stay, peak, on_faulty, to_faulty, shift_faulty, shift_cpu, crowding, shift_channels, shift_ctx],
            1,
        )
    }
}

fn concat_cols(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let rows = (0..a.rows())
        .map(|i| a.row_slice(i).iter().chain(b.row_slice(i)).copied().collect())
        .collect::<Vec<Vec<f64>>>();
    Tensor::from_rows(&rows)
}

fn column(t: &Tensor, c: usize) -> Tensor {
    let v = (0..t.rows()).map(|i| t.at(i, c)).collect();
    Tensor::matrix(t.rows(), 1, v).expect("column shape")
}

/// `N = S + Δ` and the per-row argmax placement.
///
/// Ties go to the host `S` already uses for that row, otherwise to the lowest index.
pub fn compose_schedule(s: &Schedule, delta: &Tensor) -> Result<(Tensor, Schedule)> {
    let st = s.to_tensor();
    if delta.shape() != st.shape() {
        return Err(Error::shape(format!("Δ {:?} for S {:?}", delta.shape(), st.shape())));
    }
    let mut n = st.clone();
    for (o, d) in n.data_mut().iter_mut().zip(delta.data()) {
        *o += d;
    }
    let hosts = s
        .rows()
        .iter()
        .enumerate()
        .map(|(i, r)| row_argmax(n.row_slice(i), r.host))
        .collect::<Vec<_>>();
    Ok((n, s.with_hosts(&hosts)?))
}

fn row_argmax(row: &[f64], incumbent: usize) -> usize {
    let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if row[incumbent] == best {
        return incumbent;
    }
    row.iter().position(|&v| v == best).unwrap_or(incumbent)
}

/// The candidate when `D[1] ≥ D[0]`, the baseline otherwise.
pub fn select_schedule(d: [f64; 2], s: &Schedule, n: &Schedule) -> Schedule {
    if d[1] >= d[0] {
        n.clone()
    } else {
        s.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Assignment;

    fn schedule(m: usize, placements: &[(Option<usize>, usize)]) -> Schedule {
        let rows = placements
            .iter()
            .enumerate()
            .map(|(i, &(current, host))| Assignment { task_id: i as u64, current, host })
            .collect();
        Schedule::from_rows(m, rows).unwrap()
    }

    fn input(s: &Schedule, ef: Tensor) -> GanInput {
        let w = MetricsWindow::from_data(2, s.m(), 8, (0..2 * s.m() * 8).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap();
        GanInput::new(s, &ef, &w).unwrap()
    }

    fn zero_store(store: &mut ParamStore) {
        for p in store.iter_mut() {
            p.value.data_mut().fill(0.0);
        }
    }

    #[test]
    fn zero_readout_and_embedding_give_tanh_of_normalised_s() {
        let mut gan = GanModel::new(GanConfig::default(), 3).unwrap();
        let s = schedule(4, &[(Some(0), 0), (None, 2)]);
        let x = input(&s, Tensor::zeros(&[4, 8]));
        for p in gan.generator.store.iter_mut() {
            if p.name.starts_with("gen.task") {
                p.value.data_mut().fill(0.0);
            }
        }
        let mut g = Graph::new();
        let (delta, a) = gan.generate(&mut g, &gan.generator.store, &x).unwrap().unwrap();
        assert!(g.value(a).data().iter().all(|&v| v == 0.0));
        // one-hot row of length 4: mean 1/4, variance 3/16
        let sd = (3.0f64 / 16.0 + crate::tensor::LAYER_NORM_EPS).sqrt();
        let hot = (0.75 / sd).tanh();
        let cold = (-0.25 / sd).tanh();
        let d = g.value(delta);
        assert!((d.at(0, 0) - hot).abs() < 1e-12);
        assert!((d.at(0, 1) - cold).abs() < 1e-12);
        // new arrivals are pinned
        assert!(d.row_slice(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn delta_stays_inside_open_interval() {
        let gan = GanModel::new(GanConfig::default(), 9).unwrap();
        let s = schedule(3, &[(Some(0), 0), (Some(1), 1), (None, 2), (Some(2), 0)]);
        let ef = Tensor::from_rows(&vec![vec![0.9; 8], vec![0.0; 8], vec![0.3; 8]]).unwrap();
        let mut g = Graph::new();
        let (delta, _) = gan.generate(&mut g, &gan.generator.store, &input(&s, ef)).unwrap().unwrap();
        assert!(g.value(delta).data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn zero_discriminator_is_indifferent() {
        let mut gan = GanModel::new(GanConfig::default(), 1).unwrap();
        zero_store(&mut gan.discriminator.store);
        let s = schedule(3, &[(Some(0), 0), (None, 1)]);
        let x = input(&s, Tensor::zeros(&[3, 8]));
        let mut g = Graph::new();
        let n = g.constant(s.to_tensor());
        let (d, _) = gan.discriminate(&mut g, &gan.discriminator.store, &x, Some(n)).unwrap();
        assert_eq!(g.value(d).data(), &[0.5, 0.5]);
    }

    #[test]
    fn discriminator_output_is_a_distribution() {
        let gan = GanModel::new(GanConfig::default(), 5).unwrap();
        let s = schedule(4, &[(Some(0), 0), (Some(3), 3), (None, 1)]);
        let ef = Tensor::from_rows(&vec![vec![0.5; 8], vec![0.0; 8], vec![0.0; 8], vec![0.1; 8]]).unwrap();
        let x = input(&s, ef);
        let mut g = Graph::new();
        let (delta, _) = gan.generate(&mut g, &gan.generator.store, &x).unwrap().unwrap();
        let st = g.constant(x.s.clone());
        let n = g.add(st, delta).unwrap();
        let (d, _) = gan.discriminate(&mut g, &gan.discriminator.store, &x, Some(n)).unwrap();
        let d = g.value(d);
        assert!((d.data()[0] + d.data()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_schedule_has_no_delta() {
        let gan = GanModel::new(GanConfig::default(), 5).unwrap();
        let s = Schedule::new(2);
        let x = input(&s, Tensor::zeros(&[2, 8]));
        let mut g = Graph::new();
        assert!(gan.generate(&mut g, &gan.generator.store, &x).unwrap().is_none());
        let (d, _) = gan.discriminate(&mut g, &gan.discriminator.store, &x, None).unwrap();
        assert!((g.value(d).data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_delta_keeps_placements() {
        let s = schedule(3, &[(Some(0), 0), (Some(2), 2), (None, 1)]);
        let (n, placed) = compose_schedule(&s, &Tensor::zeros(&[3, 3])).unwrap();
        assert_eq!(placed, s);
        assert_eq!(n, s.to_tensor());
    }

    #[test]
    fn larger_gain_elsewhere_moves_the_task() {
        let s = schedule(3, &[(Some(0), 0)]);
        let delta = Tensor::from_rows(&[vec![-0.5, 0.9, 0.0]]).unwrap();
        let (_, placed) = compose_schedule(&s, &delta).unwrap();
        assert_eq!(placed.hosts(), vec![1]);
        assert_eq!(placed.migration_count(), 1);
    }

    #[test]
    fn ties_prefer_incumbent_then_lowest() {
        assert_eq!(row_argmax(&[1.0, 1.0, 1.0], 2), 2);
        assert_eq!(row_argmax(&[0.2, 1.0, 1.0], 0), 1);
    }

    #[test]
    fn selection_boundary_keeps_candidate() {
        let s = schedule(2, &[(Some(0), 0)]);
        let n = schedule(2, &[(Some(0), 1)]);
        assert_eq!(select_schedule([0.3, 0.7], &s, &n), n);
        assert_eq!(select_schedule([0.7, 0.3], &s, &n), s);
        assert_eq!(select_schedule([0.5, 0.5], &s, &n), n);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let s = schedule(3, &[(Some(0), 0)]);
        assert!(compose_schedule(&s, &Tensor::zeros(&[1, 2])).is_err());
    }
}
