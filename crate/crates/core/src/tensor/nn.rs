//! Layers assembled from graph primitives. Inputs are row-major batches:
//! one row per item, features along columns.

use rand::Rng;

use super::dense::Tensor;
use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// `y = x W + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            weight: store.add_glorot(format!("{name}.weight"), input, output, rng)?,
            bias: store.add_zeros(format!("{name}.bias"), 1, output)?,
            input,
            output,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        linear(g, x, w, b)
    }
}

pub fn linear(g: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var> {
    let xw = g.matmul(x, w)?;
    g.add(xw, b)
}

/// Two linear layers with a ReLU between them.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub hidden: Linear,
    pub out: Linear,
}

impl FeedForward {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            hidden: Linear::new(store, &format!("{name}.0"), input, hidden, rng)?,
            out: Linear::new(store, &format!("{name}.1"), hidden, output, rng)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.hidden.forward(g, store, x)?;
        let h = g.relu(h);
        self.out.forward(g, store, h)
    }
}

/// GRU cell weights; each gate reads the concatenation `[x; h]`.
#[derive(Clone, Debug)]
pub struct GruCell {
    pub update: Linear,
    pub reset: Linear,
    pub candidate: Linear,
    pub hidden: usize,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            update: Linear::new(store, &format!("{name}.z"), input + hidden, hidden, rng)?,
            reset: Linear::new(store, &format!("{name}.r"), input + hidden, hidden, rng)?,
            candidate: Linear::new(store, &format!("{name}.n"), input + hidden, hidden, rng)?,
            hidden,
        })
    }

    /// One step: `z = σ(W_z[x;h]+b_z)`, `r = σ(W_r[x;h]+b_r)`,
    /// `ñ = tanh(W_n[x; r⊙h]+b_n)`, `h' = (1−z)⊙ñ + z⊙h`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, h: Var) -> Result<Var> {
        if g.value(h).cols() != self.hidden {
            return Err(Error::shape(format!(
                "gru hidden width {} but state has {}",
                self.hidden,
                g.value(h).cols()
            )));
        }
        let xh = g.concat(&[x, h], 1)?;
        let z = self.update.forward(g, store, xh)?;
        let z = g.sigmoid(z);
        let r = self.reset.forward(g, store, xh)?;
        let r = g.sigmoid(r);
        let rh = g.mul(r, h)?;
        let xrh = g.concat(&[x, rh], 1)?;
        let n = self.candidate.forward(g, store, xrh)?;
        let n = g.tanh(n);
        // ñ + z⊙(h − ñ)
        let diff = g.sub(h, n)?;
        let zd = g.mul(z, diff)?;
        g.add(n, zd)
    }
}

/// `softmax(Q Kᵀ / √d_k + mask) V`. Returns the output and the attention weights.
///
/// `mask` is added to the scores before the softmax; use a large negative
/// value to exclude a key.
pub fn scaled_dot_attention(
    g: &mut Graph,
    q: Var,
    k: Var,
    v: Var,
    mask: Option<&Tensor>,
) -> Result<(Var, Var)> {
    let dk = g.value(q).cols();
    if dk != g.value(k).cols() || g.value(k).rows() != g.value(v).rows() {
        return Err(Error::shape(format!(
            "attention with Q {:?}, K {:?}, V {:?}",
            g.value(q).shape(),
            g.value(k).shape(),
            g.value(v).shape()
        )));
    }
    let kt = g.transpose(k);
    let scores = g.matmul(q, kt)?;
    let mut scores = g.scale(scores, 1.0 / (dk.max(1) as f64).sqrt());
    if let Some(m) = mask {
        let mv = g.constant(m.clone());
        scores = g.add(scores, mv)?;
    }
    let weights = g.softmax(scores, 1)?;
    let out = g.matmul(weights, v)?;
    Ok((out, weights))
}

/// One attention head: learned projections of queries, keys and values.
#[derive(Clone, Debug)]
pub struct AttentionHead {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
}

/// `Concat(H_1, …, H_h)` with `H_i = Attention(Q W_i^Q, K W_i^K, V W_i^V)`.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub heads: Vec<AttentionHead>,
}

impl MultiHeadAttention {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        heads: usize,
        query_in: usize,
        value_in: usize,
        key_dim: usize,
        value_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 {
            return Err(Error::param("attention needs at least one head"));
        }
        let heads = (0..heads)
            .map(|i| {
                Ok(AttentionHead {
                    query: Linear::new(store, &format!("{name}.h{i}.q"), query_in, key_dim, rng)?,
                    key: Linear::new(store, &format!("{name}.h{i}.k"), query_in, key_dim, rng)?,
                    value: Linear::new(store, &format!("{name}.h{i}.v"), value_in, value_dim, rng)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { heads })
    }

    /// Returns the concatenated head outputs and each head's attention weights.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        q_in: Var,
        k_in: Var,
        v_in: Var,
    ) -> Result<(Var, Vec<Var>)> {
        let mut outs = Vec::with_capacity(self.heads.len());
        let mut weights = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let q = head.query.forward(g, store, q_in)?;
            let k = head.key.forward(g, store, k_in)?;
            let v = head.value.forward(g, store, v_in)?;
            let (o, w) = scaled_dot_attention(g, q, k, v, None)?;
            outs.push(o);
            weights.push(w);
        }
        Ok((g.concat(&outs, 1)?, weights))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_all(store: &mut ParamStore) {
        for p in store.iter_mut() {
            p.value.data_mut().fill(0.0);
        }
    }

    #[test]
    fn gru_with_zero_params_halves_hidden() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "gru", 3, 4, &mut rng).unwrap();
        zero_all(&mut store);
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_rows(&[vec![0.3, -1.0, 2.0]]).unwrap());
        let h = g.constant(Tensor::row(&[1.0, -2.0, 0.5, 4.0]));
        let out = cell.forward(&mut g, &store, x, h).unwrap();
        assert_eq!(g.value(out).data(), &[0.5, -1.0, 0.25, 2.0]);
    }

    #[test]
    fn uniform_attention_averages_values() {
        let mut g = Graph::new();
        let q = g.constant(Tensor::filled(&[3, 2], 0.7));
        let k = g.constant(Tensor::filled(&[3, 2], 0.7));
        let v = g.constant(
            Tensor::from_rows(&[vec![1.0, 0.0], vec![2.0, 3.0], vec![6.0, -3.0]]).unwrap(),
        );
        let (o, w) = scaled_dot_attention(&mut g, q, k, v, None).unwrap();
        for r in 0..3 {
            assert!((g.value(o).at(r, 0) - 3.0).abs() < 1e-12);
            assert!(g.value(o).at(r, 1).abs() < 1e-12);
            assert!((g.value(w).at(r, 2) - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_mask_excludes_keys() {
        let mut g = Graph::new();
        let q = g.constant(Tensor::zeros(&[1, 2]));
        let k = g.constant(Tensor::zeros(&[2, 2]));
        let v = g.constant(Tensor::from_rows(&[vec![1.0], vec![5.0]]).unwrap());
        let mask = Tensor::row(&[0.0, -1e9]);
        let (o, _) = scaled_dot_attention(&mut g, q, k, v, Some(&mask)).unwrap();
        assert_eq!(g.value(o).item(), 1.0);
    }

    #[test]
    fn multi_head_concatenates_head_widths() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let mha = MultiHeadAttention::new(&mut store, "mha", 3, 5, 4, 6, 2, &mut rng).unwrap();
        let mut g = Graph::new();
        let x = g.constant(Tensor::filled(&[7, 5], 0.1));
        let v = g.constant(Tensor::filled(&[7, 4], 0.2));
        let (o, w) = mha.forward(&mut g, &store, x, x, v).unwrap();
        assert_eq!(g.value(o).shape(), &[7, 6]);
        assert_eq!(w.len(), 3);
    }
}
