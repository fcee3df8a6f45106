//! Finite-difference checks over every graph operation, the layers, the
//! full encoder loss at toy sizes and both adversarial losses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::fpe::{fpe_losses, Fpe, FpeConfig, PrototypeSet, TripletNegatives};
use crate::gan::{gan_loss, GanConfig, GanInput, GanModel};
use crate::sim::{Assignment, MetricsWindow, Schedule};
use crate::tensor::{
    grad_check, scaled_dot_attention, FeedForward, GradCheckConfig, GradCheckReport, Graph, GruCell, Linear,
    MultiHeadAttention, ParamStore, Tensor, Var,
};

#[derive(Clone, Debug)]
pub struct SuiteEntry {
    pub name: &'static str,
    pub report: GradCheckReport,
}

struct Case {
    rng: ChaCha8Rng,
    config: GradCheckConfig,
    out: Vec<SuiteEntry>,
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let v = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::matrix(rows, cols, v).expect("shape")
}

/// Entries at least 0.1 away from zero, so kinks stay outside the stencil.
fn signed(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let v = (0..rows * cols)
        .map(|_| {
            let x: f64 = rng.random_range(0.1..1.0);
            if rng.random_bool(0.5) {
                x
            } else {
                -x
            }
        })
        .collect();
    Tensor::matrix(rows, cols, v).expect("shape")
}

/// `Σ x ⊙ r` for a fixed random `r`, so every output entry matters.
fn readout(g: &mut Graph, x: Var, r: &Tensor) -> Result<Var> {
    let rv = g.constant(r.clone());
    let y = g.mul(x, rv)?;
    Ok(g.sum(y))
}

impl Case {
    fn run<F>(&mut self, name: &'static str, store: &mut ParamStore, loss: F) -> Result<()>
    where
        F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
    {
        let report = grad_check(store, self.config, loss)?;
        self.out.push(SuiteEntry { name, report });
        Ok(())
    }

    /// One parameter `a` of the given shape and a weighted readout of `f(a)`.
    fn unary<F>(&mut self, name: &'static str, a: Tensor, f: F) -> Result<()>
    where
        F: Fn(&mut Graph, Var) -> Result<Var>,
    {
        let mut store = ParamStore::new();
        let id = store.add("a", a)?;
        let probe = {
            let mut g = Graph::new();
            let x = g.param(&store, id);
            let y = f(&mut g, x)?;
            let shape = g.value(y).shape().to_vec();
            uniform(&mut self.rng, shape[0], shape[1], -1.0, 1.0)
        };
        self.run(name, &mut store, |g, s| {
            let x = g.param(s, id);
            let y = f(g, x)?;
            readout(g, y, &probe)
        })
    }

    fn binary<F>(&mut self, name: &'static str, a: Tensor, b: Tensor, f: F) -> Result<()>
    where
        F: Fn(&mut Graph, Var, Var) -> Result<Var>,
    {
        let mut store = ParamStore::new();
        let ia = store.add("a", a)?;
        let ib = store.add("b", b)?;
        let probe = {
            let mut g = Graph::new();
            let (x, y) = (g.param(&store, ia), g.param(&store, ib));
            let z = f(&mut g, x, y)?;
            let shape = g.value(z).shape().to_vec();
            uniform(&mut self.rng, shape[0], shape[1], -1.0, 1.0)
        };
        self.run(name, &mut store, |g, s| {
            let (x, y) = (g.param(s, ia), g.param(s, ib));
            let z = f(g, x, y)?;
            readout(g, z, &probe)
        })
    }
}

fn ops(c: &mut Case) -> Result<()> {
    let r = &mut c.rng;
    let (a23, b32, a23b, row3, col2) = (
        uniform(r, 2, 3, -1.0, 1.0),
        uniform(r, 3, 2, -1.0, 1.0),
        uniform(r, 2, 3, -1.0, 1.0),
        uniform(r, 1, 3, -1.0, 1.0),
        uniform(r, 2, 1, -1.0, 1.0),
    );
    let (kinked, positive, distinct) = (signed(r, 3, 4), uniform(r, 3, 4, 0.2, 2.0), signed(r, 3, 4));

    c.binary("matmul", a23.clone(), b32, |g, x, y| g.matmul(x, y))?;
    c.unary("transpose", a23.clone(), |g, x| Ok(g.transpose(x)))?;
    c.binary("add", a23.clone(), a23b.clone(), |g, x, y| g.add(x, y))?;
    c.binary("add broadcast row", a23.clone(), row3.clone(), |g, x, y| g.add(x, y))?;
    c.binary("sub broadcast column", a23.clone(), col2.clone(), |g, x, y| g.sub(x, y))?;
    c.binary("mul", a23.clone(), a23b.clone(), |g, x, y| g.mul(x, y))?;
    c.binary("mul broadcast row", a23.clone(), row3, |g, x, y| g.mul(x, y))?;
    c.unary("scale", a23.clone(), |g, x| Ok(g.scale(x, -1.7)))?;
    c.unary("add_scalar", a23.clone(), |g, x| Ok(g.add_scalar(x, 0.3)))?;
    c.unary("map", a23.clone(), |g, x| Ok(g.map(x, |v| v * v * v, |v, _| 3.0 * v * v)))?;
    c.unary("sigmoid", a23.clone(), |g, x| Ok(g.sigmoid(x)))?;
    c.unary("tanh", a23.clone(), |g, x| Ok(g.tanh(x)))?;
    c.unary("relu", kinked.clone(), |g, x| Ok(g.relu(x)))?;
    c.unary("leaky_relu", kinked, |g, x| Ok(g.leaky_relu(x, 0.2)))?;
    c.unary("exp", a23.clone(), |g, x| Ok(g.exp(x)))?;
    c.unary("ln", positive, |g, x| Ok(g.ln(x)))?;
    c.unary("log_softmax_rows", a23.clone(), |g, x| g.log_softmax_rows(x))?;
    c.unary("softmax rows", a23.clone(), |g, x| g.softmax(x, 1))?;
    c.unary("softmax columns", a23.clone(), |g, x| g.softmax(x, 0))?;
    let mut store = ParamStore::new();
    let x = store.add("x", a23.clone())?;
    let gain = store.add("gain", uniform(&mut c.rng, 1, 3, 0.5, 1.5))?;
    let bias = store.add("bias", uniform(&mut c.rng, 1, 3, -0.5, 0.5))?;
    let probe = uniform(&mut c.rng, 2, 3, -1.0, 1.0);
    c.run("layer_norm", &mut store, |g, s| {
        let (xv, gv, bv) = (g.param(s, x), g.param(s, gain), g.param(s, bias));
        let y = g.layer_norm(xv, gv, bv)?;
        readout(g, y, &probe)
    })?;
    c.binary("concat rows", a23.clone(), a23b.clone(), |g, x, y| g.concat(&[x, y], 0))?;
    c.binary("concat columns", a23.clone(), col2, |g, x, y| g.concat(&[x, y], 1))?;
    c.unary("slice_cols", a23.clone(), |g, x| g.slice_cols(x, 1, 2))?;
    c.unary("gather_rows", a23.clone(), |g, x| g.gather_rows(x, &[1, 0, 1]))?;
    c.unary("sum", a23.clone(), |g, x| Ok(g.sum(x)))?;
    c.unary("mean", a23.clone(), |g, x| Ok(g.mean(x)))?;
    c.unary("sum_axis rows", a23.clone(), |g, x| g.sum_axis(x, 0))?;
    c.unary("sum_axis columns", a23.clone(), |g, x| g.sum_axis(x, 1))?;
    c.unary("mean_axis rows", a23.clone(), |g, x| g.mean_axis(x, 0))?;
    c.unary("mean_axis columns", a23.clone(), |g, x| g.mean_axis(x, 1))?;
    c.unary("row_norm", a23, |g, x| Ok(g.row_norm(x)))?;
    c.unary("row_max", distinct, |g, x| g.row_max(x))?;
    Ok(())
}

fn layers(c: &mut Case) -> Result<()> {
    let x = uniform(&mut c.rng, 3, 4, -1.0, 1.0);
    let h = uniform(&mut c.rng, 3, 5, -1.0, 1.0);
    let probe = uniform(&mut c.rng, 3, 5, -1.0, 1.0);

    let mut store = ParamStore::new();
    let lin = Linear::new(&mut store, "lin", 4, 5, &mut c.rng)?;
    nudge(&mut store, &mut c.rng);
    c.run("linear", &mut store, |g, s| {
        let xv = g.constant(x.clone());
        let y = lin.forward(g, s, xv)?;
        readout(g, y, &probe)
    })?;

    let mut store = ParamStore::new();
    let ff = FeedForward::new(&mut store, "ff", 4, 6, 5, &mut c.rng)?;
    nudge(&mut store, &mut c.rng);
    c.run("feed-forward", &mut store, |g, s| {
        let xv = g.constant(x.clone());
        let y = ff.forward(g, s, xv)?;
        readout(g, y, &probe)
    })?;

    let mut store = ParamStore::new();
    let gru = GruCell::new(&mut store, "gru", 4, 5, &mut c.rng)?;
    nudge(&mut store, &mut c.rng);
    c.run("gru cell", &mut store, |g, s| {
        let (xv, hv) = (g.constant(x.clone()), g.constant(h.clone()));
        let y = gru.forward(g, s, xv, hv)?;
        readout(g, y, &probe)
    })?;

    let mut store = ParamStore::new();
    let q = store.add("q", uniform(&mut c.rng, 3, 4, -1.0, 1.0))?;
    let k = store.add("k", uniform(&mut c.rng, 4, 4, -1.0, 1.0))?;
    let v = store.add("v", uniform(&mut c.rng, 4, 5, -1.0, 1.0))?;
    let mut mask = Tensor::zeros(&[3, 4]);
    mask.set(0, 3, -1e9);
    mask.set(2, 0, -1e9);
    c.run("masked attention", &mut store, |g, s| {
        let (qv, kv, vv) = (g.param(s, q), g.param(s, k), g.param(s, v));
        let (y, _) = scaled_dot_attention(g, qv, kv, vv, Some(&mask))?;
        readout(g, y, &probe)
    })?;

    let mut store = ParamStore::new();
    let mha = MultiHeadAttention::new(&mut store, "mha", 2, 4, 4, 3, 3, &mut c.rng)?;
    nudge(&mut store, &mut c.rng);
    let probe6 = uniform(&mut c.rng, 3, 6, -1.0, 1.0);
    c.run("multi-head attention", &mut store, |g, s| {
        let xv = g.constant(x.clone());
        let (y, _) = mha.forward(g, s, xv, xv, xv)?;
        readout(g, y, &probe6)
    })?;
    Ok(())
}

/// Moves zero-initialised biases off zero so their checks are not trivial.
fn nudge(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    for p in store.iter_mut() {
        for v in p.value.data_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
}

fn toy_schedule(m: usize, placements: &[(Option<usize>, usize)]) -> Result<Schedule> {
    let rows = placements
        .iter()
        .enumerate()
        .map(|(i, &(current, host))| Assignment { task_id: i as u64, current, host })
        .collect();
    Schedule::from_rows(m, rows)
}

fn encoder(c: &mut Case) -> Result<()> {
    let (m, k, n, e) = (3, 2, 4, 4);
    let config = FpeConfig { k, n, d: 4, heads: 2, head_dim: 3, hidden: 5, embed: e, classes: 3 };
    let model = Fpe::new(config, c.rng.random())?;
    let mut store = model.store.clone();
    nudge(&mut store, &mut c.rng);
    let data = (0..k * m * n).map(|_| c.rng.random_range(0.0..1.0)).collect();
    let window = MetricsWindow::from_data(k, m, n, data)?;
    let schedule = toy_schedule(m, &[(Some(0), 1), (Some(2), 2), (None, 0)])?;
    let carry = uniform(&mut c.rng, m, 4, -0.5, 0.5);
    let protos = PrototypeSet::random(3, e, 0.9, 0.05, &mut c.rng)?;
    let labels = [0u8, 1, 3];
    c.run("encoder loss L1 + L2", &mut store, |g, s| {
        let (vars, logits) = model.forward_with(g, s, &window, &schedule, &carry)?;
        let (l1, l2) = fpe_losses(g, logits, vars.embeddings, &labels, &protos, TripletNegatives::Mean)?;
        g.add(l1, l2)
    })
}

fn adversarial(c: &mut Case) -> Result<()> {
    let m = 3;
    let config = GanConfig { embed: 4, features: 4, heads: 2, head_dim: 3, readout: 3, disc_hidden: 5, ..GanConfig::default() };
    let gan = GanModel::new(config, c.rng.random())?;
    let schedule = toy_schedule(m, &[(Some(0), 0), (Some(1), 1), (Some(0), 0), (None, 2)])?;
    let ef = Tensor::from_rows(&[vec![0.8, 0.1, 0.6, 0.3], vec![0.0; 4], vec![0.2, 0.9, 0.4, 0.7]])?;
    let window = MetricsWindow::from_data(2, m, 4, (0..2 * m * 4).map(|_| c.rng.random_range(0.0..1.0)).collect())?;
    let input = GanInput::new(&schedule, &ef, &window)?;

    let mut store = gan.generator.store.clone();
    nudge(&mut store, &mut c.rng);
    c.run("generator loss", &mut store, |g, s| {
        let (delta, _) = gan.generate(g, s, &input)?.expect("tasks present");
        let sv = g.constant(input.s.clone());
        let n = g.add(sv, delta)?;
        let (_, logits) = gan.discriminate(g, &gan.discriminator.store, &input, Some(n))?;
        gan_loss(g, logits, true, m)
    })?;

    let n = {
        let mut g = Graph::new();
        let (delta, _) = gan.generate(&mut g, &gan.generator.store, &input)?.expect("tasks present");
        let mut n = input.s.clone();
        for (o, d) in n.data_mut().iter_mut().zip(g.value(delta).data()) {
            *o += d;
        }
        n
    };
    let mut store = gan.discriminator.store.clone();
    nudge(&mut store, &mut c.rng);
    for (name, prefer_new) in [("discriminator loss, N preferred", true), ("discriminator loss, S preferred", false)] {
        c.run(name, &mut store, |g, s| {
            let nv = g.constant(n.clone());
            let (_, logits) = gan.discriminate(g, s, &input, Some(nv))?;
            gan_loss(g, logits, prefer_new, m)
        })?;
    }
    Ok(())
}

/// Every check, in a fixed order. Relative tolerance 1e-3.
pub fn gradient_suite(seed: u64) -> Result<Vec<SuiteEntry>> {
    let mut c = Case { rng: ChaCha8Rng::seed_from_u64(seed), config: GradCheckConfig::default(), out: Vec::new() };
    ops(&mut c)?;
    layers(&mut c)?;
    encoder(&mut c)?;
    adversarial(&mut c)?;
    Ok(c.out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_check_passes() {
        let suite = gradient_suite(7).unwrap();
        assert!(suite.len() > 40);
        for e in &suite {
            assert!(e.report.passed(), "{}: {:?}", e.name, e.report);
        }
    }
}
