use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{MetricsWindow, Schedule};
use crate::tensor::{FeedForward, Graph, GruCell, Linear, MultiHeadAttention, ParamId, ParamStore, Tensor, Var};

/// Width of the per-host schedule view used as attention query/key input.
pub const VIEW_DIM: usize = 5;

const LEAKY_SLOPE: f64 = 0.2;
const NO_EDGE: f64 = -1e9;

/// Layer sizes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FpeConfig {
    /// Window length.
    pub k: usize,
    /// Features per host per interval.
    pub n: usize,
    /// GAT and GRU output width.
    pub d: usize,
    pub heads: usize,
    /// Value width per head; the fused width is `heads * head_dim`.
    pub head_dim: usize,
    /// Decoder hidden width.
    pub hidden: usize,
    /// Prototype embedding size.
    pub embed: usize,
    /// Number of fault classes.
    pub classes: usize,
}

impl Default for FpeConfig {
    fn default() -> Self {
        Self {
            k: 5,
            n: 8,
            d: 16,
            heads: 2,
            head_dim: 8,
            hidden: 32,
            embed: 8,
            classes: 3,
        }
    }
}

impl FpeConfig {
    pub fn fused(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.k, self.n, self.d, self.heads, self.head_dim, self.hidden, self.embed, self.classes];
        if dims.contains(&0) {
            return Err(Error::param(format!("all encoder sizes must be positive: {self:?}")));
        }
        if self.classes > u8::MAX as usize - 1 {
            return Err(Error::param("too many fault classes"));
        }
        Ok(())
    }
}

/// Graph handles produced by one forward pass.
#[derive(Clone, Debug)]
pub struct FpeVars {
    pub o1: Var,
    pub o2: Var,
    pub fused: Var,
    /// `m × 2` detection scores.
    pub scores: Var,
    /// `m × E` prototype embeddings.
    pub embeddings: Var,
    /// `m × (m + 1)` graph attention, last column is the global node.
    pub gat_attention: Var,
    /// One `m × m` matrix per fusion head.
    pub fusion_attention: Vec<Var>,
}

/// Per-host detection and embedding for one window.
#[derive(Clone, Debug, PartialEq)]
pub struct FaultDetectionOutput {
    /// `m × 2`, row `i` is `[P(no fault), P(fault)]`.
    pub scores: Tensor,
    /// `m × E`.
    pub embeddings: Tensor,
    /// `m × E` with rows zeroed where no fault is detected.
    pub fault_embedding: Tensor,
    pub gat_attention: Tensor,
    pub fusion_attention: Vec<Tensor>,
}

impl FaultDetectionOutput {
    pub fn m(&self) -> usize {
        self.scores.rows()
    }

    pub fn detected(&self, host: usize) -> bool {
        self.scores.at(host, 1) >= self.scores.at(host, 0)
    }

    pub fn any_detected(&self) -> bool {
        (0..self.m()).any(|i| self.detected(i))
    }
}

/// Row `i` is `P_i` when `D^A_i[1] ≥ D^A_i[0]`, zeros otherwise.
pub fn build_fault_embedding(scores: &Tensor, embeddings: &Tensor) -> Result<Tensor> {
    if scores.rows() != embeddings.rows() || scores.cols() != 2 {
        return Err(Error::shape(format!(
            "scores {:?} and embeddings {:?}",
            scores.shape(),
            embeddings.shape()
        )));
    }
    let mut out = Tensor::zeros(embeddings.shape());
    for i in 0..scores.rows() {
        if scores.at(i, 1) >= scores.at(i, 0) {
            for j in 0..embeddings.cols() {
                out.set(i, j, embeddings.at(i, j));
            }
        }
    }
    Ok(out)
}

/// `m × VIEW_DIM` per-host summary of a schedule: share of tasks placed on
/// the host, share of new arrivals, share of incoming and outgoing
/// migrations, and a constant.
pub fn schedule_view(schedule: &Schedule) -> Tensor {
    let m = schedule.m();
    let p = schedule.len().max(1) as f64;
    let mut view = Tensor::zeros(&[m, VIEW_DIM]);
    for r in schedule.rows() {
        view.set(r.host, 0, view.at(r.host, 0) + 1.0 / p);
        match r.current {
            None => view.set(r.host, 1, view.at(r.host, 1) + 1.0 / p),
            Some(c) if c != r.host => {
                view.set(r.host, 2, view.at(r.host, 2) + 1.0 / p);
                view.set(c, 3, view.at(c, 3) + 1.0 / p);
            }
            _ => {}
        }
    }
    for i in 0..m {
        view.set(i, 4, 1.0);
    }
    view
}

/// Additive attention mask over hosts plus the global node: every host sees
/// itself and the global node, and `j` also sees `i` for each migration `i → j`.
pub fn neighbourhood_mask(m: usize, edges: &[(usize, usize)]) -> Tensor {
    let mut mask = Tensor::filled(&[m, m + 1], NO_EDGE);
    for i in 0..m {
        mask.set(i, i, 0.0);
        mask.set(i, m, 0.0);
    }
    for &(src, dst) in edges {
        mask.set(dst, src, 0.0);
    }
    mask
}

/// Fault prototype encoder.
#[derive(Clone, Debug)]
pub struct Fpe {
    pub config: FpeConfig,
    pub store: ParamStore,
    theta: ParamId,
    att_self: ParamId,
    att_neigh: ParamId,
    gru: GruCell,
    fusion: MultiHeadAttention,
    skip: Linear,
    detector: FeedForward,
    embedder: FeedForward,
}

impl Fpe {
    pub fn new(config: FpeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let input = config.k * config.n;
        let d = config.d;
        let theta = store.add_glorot("gat.theta", input, d, &mut rng)?;
        let att_self = store.add_glorot("gat.a_self", d, 1, &mut rng)?;
        let att_neigh = store.add_glorot("gat.a_neigh", d, 1, &mut rng)?;
        let gru = GruCell::new(&mut store, "gru", input, d, &mut rng)?;
        let fusion = MultiHeadAttention::new(
            &mut store,
            "fusion",
            config.heads,
            VIEW_DIM + 2 * d,
            2 * d,
            config.head_dim,
            config.head_dim,
            &mut rng,
        )?;
        let skip = Linear::new(&mut store, "fusion.skip", 2 * d, config.fused(), &mut rng)?;
        let detector = FeedForward::new(&mut store, "detector", config.fused(), config.hidden, 2, &mut rng)?;
        let embedder = FeedForward::new(&mut store, "embedder", config.fused(), config.hidden, config.embed, &mut rng)?;
        Ok(Self {
            config,
            store,
            theta,
            att_self,
            att_neigh,
            gru,
            fusion,
            skip,
            detector,
            embedder,
        })
    }

    fn check_window(&self, window: &MetricsWindow) -> Result<()> {
        if window.k != self.config.k || window.n != self.config.n {
            return Err(Error::shape(format!(
                "window is {}x{}x{}, encoder expects k = {}, n = {}",
                window.k, window.m, window.n, self.config.k, self.config.n
            )));
        }
        Ok(())
    }

    pub fn zero_carry(&self, m: usize) -> Tensor {
        Tensor::zeros(&[m, self.config.d])
    }

    /// Graph attention over hosts plus a global node; returns `(O1, attention)`.
    pub fn gat_encode(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        window: &MetricsWindow,
        schedule: &Schedule,
    ) -> Result<(Var, Var)> {
        self.check_window(window)?;
        let m = window.m;
        if schedule.m() != m {
            return Err(Error::shape(format!("schedule over {} hosts, window over {m}", schedule.m())));
        }
        let x = g.constant(window.host_matrix());
        let theta = g.param(store, self.theta);
        let z = g.matmul(x, theta)?;
        let global = g.mean_axis(z, 0)?;
        let nodes = g.concat(&[z, global], 0)?;
        let a_self = g.param(store, self.att_self);
        let a_neigh = g.param(store, self.att_neigh);
        let s_self = g.matmul(z, a_self)?;
        let s_neigh = g.matmul(nodes, a_neigh)?;
        let s_neigh = g.transpose(s_neigh);
        let scores = g.add(s_self, s_neigh)?;
        let scores = g.leaky_relu(scores, LEAKY_SLOPE);
        let mask = g.constant(neighbourhood_mask(m, &schedule.migration_edges()));
        let scores = g.add(scores, mask)?;
        let att = g.softmax(scores, 1)?;
        let agg = g.matmul(att, nodes)?;
        Ok((g.sigmoid(agg), att))
    }

    /// One recurrent step over each host's flattened window.
    pub fn gru_encode(&self, g: &mut Graph, store: &ParamStore, window: &MetricsWindow, carry: &Tensor) -> Result<Var> {
        self.check_window(window)?;
        if carry.shape() != [window.m, self.config.d] {
            return Err(Error::shape(format!(
                "carry {:?} for {} hosts of width {}",
                carry.shape(),
                window.m,
                self.config.d
            )));
        }
        let x = g.constant(window.host_matrix());
        let h = g.constant(carry.clone());
        self.gru.forward(g, store, x, h)
    }

    /// Attention fusion of the two encodings, keyed by the schedule view.
    pub fn fuse(&self, g: &mut Graph, store: &ParamStore, view: Var, o1: Var, o2: Var) -> Result<(Var, Vec<Var>)> {
        let values = g.concat(&[o1, o2], 1)?;
        let tokens = g.concat(&[view, values], 1)?;
        let (att, weights) = self.fusion.forward(g, store, tokens, tokens, values)?;
        let skip = self.skip.forward(g, store, values)?;
        Ok((g.add(att, skip)?, weights))
    }

    /// Per-host decoders: detection scores and sigmoid embeddings.
    pub fn decode_hosts(&self, g: &mut Graph, store: &ParamStore, fused: Var) -> Result<(Var, Var)> {
        let logits = self.detector.forward(g, store, fused)?;
        let scores = g.softmax(logits, 1)?;
        let emb = self.embedder.forward(g, store, fused)?;
        Ok((scores, g.sigmoid(emb)))
    }

    /// Detection logits and embeddings; used by the losses.
    pub(crate) fn decode_logits(&self, g: &mut Graph, store: &ParamStore, fused: Var) -> Result<(Var, Var)> {
        let logits = self.detector.forward(g, store, fused)?;
        let emb = self.embedder.forward(g, store, fused)?;
        Ok((logits, g.sigmoid(emb)))
    }

    /// Full forward pass on `g` with parameters from `store`.
    pub fn forward_with(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        window: &MetricsWindow,
        schedule: &Schedule,
        carry: &Tensor,
    ) -> Result<(FpeVars, Var)> {
        let (o1, gat_attention) = self.gat_encode(g, store, window, schedule)?;
        let o2 = self.gru_encode(g, store, window, carry)?;
        let view = g.constant(schedule_view(schedule));
        let (fused, fusion_attention) = self.fuse(g, store, view, o1, o2)?;
        let (logits, embeddings) = self.decode_logits(g, store, fused)?;
        let scores = g.softmax(logits, 1)?;
        Ok((
            FpeVars {
                o1,
                o2,
                fused,
                scores,
                embeddings,
                gat_attention,
                fusion_attention,
            },
            logits,
        ))
    }

    /// Inference; returns the detection output and the next carry.
    pub fn detect(
        &self,
        window: &MetricsWindow,
        schedule: &Schedule,
        carry: &Tensor,
    ) -> Result<(FaultDetectionOutput, Tensor)> {
        let mut g = Graph::new();
        let (vars, _) = self.forward_with(&mut g, &self.store, window, schedule, carry)?;
        let scores = g.value(vars.scores).clone();
        let embeddings = g.value(vars.embeddings).clone();
        let fault_embedding = build_fault_embedding(&scores, &embeddings)?;
        let out = FaultDetectionOutput {
            scores,
            embeddings,
            fault_embedding,
            gat_attention: g.value(vars.gat_attention).clone(),
            fusion_attention: vars.fusion_attention.iter().map(|v| g.value(*v).clone()).collect(),
        };
        Ok((out, g.value(vars.o2).clone()))
    }
}
