use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Class prototypes `P^C_0 … P^C_c` and their update schedule.
///
/// Index 0 is the healthy class and never takes part in losses or
/// classification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSet {
    pub vectors: Vec<Vec<f64>>,
    /// Current step size.
    pub alpha: f64,
    /// Per-update decay of `alpha`.
    pub decay: f64,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl PrototypeSet {
    /// Uniform random prototypes in `[0, 1]^embed`.
    pub fn random<R: Rng + ?Sized>(classes: usize, embed: usize, alpha: f64, decay: f64, rng: &mut R) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) || !(0.0..1.0).contains(&decay) {
            return Err(Error::param(format!("need alpha in (0, 1] and decay in [0, 1), got {alpha}, {decay}")));
        }
        let vectors = (0..=classes)
            .map(|_| (0..embed).map(|_| rng.random::<f64>()).collect())
            .collect();
        Ok(Self { vectors, alpha, decay })
    }

    pub fn classes(&self) -> usize {
        self.vectors.len() - 1
    }

    pub fn embed(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    /// Distances from `p` to prototypes `1..=c`.
    pub fn distances(&self, p: &[f64]) -> Vec<f64> {
        self.vectors[1..].iter().map(|v| distance(p, v)).collect()
    }

    /// Nearest fault class in `1..=c`; ties go to the smallest index.
    pub fn classify(&self, p: &[f64]) -> u8 {
        let d = self.distances(p);
        let mut best = 0;
        for j in 1..d.len() {
            if d[j] < d[best] {
                best = j;
            }
        }
        best as u8 + 1
    }

    /// Moves class `label`'s prototype toward `p` by the current step size.
    pub fn pull(&mut self, label: u8, p: &[f64]) {
        let a = self.alpha;
        for (c, v) in self.vectors[label as usize].iter_mut().zip(p) {
            *c = (1.0 - a) * *c + a * v;
        }
    }

    /// Conditional updates for one window: each faulty host's embedding
    /// pulls its true prototype when that prototype is already its nearest.
    /// Returns the number of prototypes moved.
    pub fn update(&mut self, embeddings: &Tensor, labels: &[u8]) -> usize {
        let mut moved = 0;
        for (i, &y) in labels.iter().enumerate() {
            if y == 0 {
                continue;
            }
            let p = embeddings.row_slice(i);
            let d = self.distances(p);
            let own = d[y as usize - 1];
            if d.iter().all(|x| own <= *x) {
                self.pull(y, p);
                moved += 1;
            }
        }
        moved
    }

    /// `α ← (1 − ε) α`.
    pub fn decay_step(&mut self) {
        self.alpha *= 1.0 - self.decay;
    }

    pub fn within_unit_box(&self) -> bool {
        self.vectors.iter().flatten().all(|v| (0.0..=1.0).contains(v))
    }
}

/// How the distances to the wrong prototypes enter the triplet loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TripletNegatives {
    /// Plain sum. With more than two classes the push away from the
    /// negatives can outweigh the pull to the true prototype.
    Sum,
    /// Sum divided by `c − 1`; identical to `Sum` for two classes.
    #[default]
    Mean,
}

/// Detection NLL and triplet loss for one window.
///
/// `logits` is `m × 2` before the softmax, `embeddings` is `m × E`. The
/// prototypes enter as constants.
pub fn fpe_losses(
    g: &mut Graph,
    logits: Var,
    embeddings: Var,
    labels: &[u8],
    prototypes: &PrototypeSet,
    negatives: TripletNegatives,
) -> Result<(Var, Var)> {
    let m = g.value(logits).rows();
    if labels.len() != m || g.value(embeddings).rows() != m {
        return Err(Error::shape(format!("{} labels for {m} hosts", labels.len())));
    }
    let c = prototypes.classes();
    if let Some(bad) = labels.iter().find(|y| **y as usize > c) {
        return Err(Error::data(format!("label {bad} outside 0..={c}")));
    }

    let logp = g.log_softmax_rows(logits)?;
    let mut pick = Tensor::zeros(&[m, 2]);
    for (i, y) in labels.iter().enumerate() {
        pick.set(i, usize::from(*y > 0), 1.0);
    }
    let pick = g.constant(pick);
    let chosen = g.mul(logp, pick)?;
    let total = g.sum(chosen);
    let l1 = g.scale(total, -1.0);

    let neg = match negatives {
        TripletNegatives::Sum => -1.0,
        TripletNegatives::Mean => -1.0 / (c as f64 - 1.0).max(1.0),
    };
    let mut terms = Vec::new();
    for j in 1..=c {
        let mut coeff = Tensor::zeros(&[m, 1]);
        let mut used = false;
        for (i, &y) in labels.iter().enumerate() {
            if y > 0 {
                coeff.set(i, 0, if y as usize == j { 1.0 } else { neg });
                used = true;
            }
        }
        if !used {
            continue;
        }
        let proto = g.constant(Tensor::row(&prototypes.vectors[j]));
        let diff = g.sub(embeddings, proto)?;
        let dist = g.row_norm(diff);
        let coeff = g.constant(coeff);
        let weighted = g.mul(dist, coeff)?;
        terms.push(g.sum(weighted));
    }
    let l2 = match terms.split_first() {
        None => g.constant(Tensor::scalar(0.0)),
        Some((first, rest)) => {
            let mut acc = *first;
            for t in rest {
                acc = g.add(acc, *t)?;
            }
            acc
        }
    };
    Ok((l1, l2))
}
