//! Tape-based reverse-mode differentiation over rank-2 tensors.
//!
//! Every operator appends a node holding its forward value to the tape. Nodes
//! are created in topological order, so [`Graph::backward`] walks the tape
//! once in reverse.

use super::dense::Tensor;
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param { store: u64, index: usize },
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    /// Elementwise map; `deriv` holds dy/dx per element.
    Unary { x: Var, deriv: Vec<f64> },
    SoftmaxRows(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols { x: Var, start: usize },
    GatherRows { x: Var, index: Vec<usize> },
    Sum(Var),
    SumRows(Var),
    SumCols(Var),
    RowNorm(Var),
    RowMax { x: Var, arg: Vec<usize> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients of one scalar with respect to every node of a graph.
#[derive(Debug)]
pub struct Grads {
    grads: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn broadcast_shape(a: &Tensor, b: &Tensor) -> Result<(usize, usize)> {
    if !a.is_matrix() || !b.is_matrix() {
        return Err(Error::shape("elementwise ops need rank-2 operands"));
    }
    let dim = |x: usize, y: usize| -> Option<usize> {
        if x == y {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else if y == 1 {
            Some(x)
        } else {
            None
        }
    };
    match (dim(a.rows(), b.rows()), dim(a.cols(), b.cols())) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(Error::shape(format!(
            "cannot broadcast {:?} with {:?}",
            a.shape(),
            b.shape()
        ))),
    }
}

#[inline]
fn bcast(t: &Tensor, r: usize, c: usize) -> f64 {
    let rr = if t.rows() == 1 { 0 } else { r };
    let cc = if t.cols() == 1 { 0 } else { c };
    t.at(rr, cc)
}

/// Sums a broadcast gradient back down to `shape`.
fn reduce_to(g: &Tensor, rows: usize, cols: usize) -> Tensor {
    if g.rows() == rows && g.cols() == cols {
        return g.clone();
    }
    let mut out = Tensor::zeros(&[rows, cols]);
    for r in 0..g.rows() {
        for c in 0..g.cols() {
            let rr = if rows == 1 { 0 } else { r };
            let cc = if cols == 1 { 0 } else { c };
            let v = out.at(rr, cc) + g.at(r, c);
            out.set(rr, cc, v);
        }
    }
    out
}

fn matmul_raw(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; n * m];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..n {
        let arow = &ad[i * k..(i + 1) * k];
        let orow = &mut out[i * m..(i + 1) * m];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &bd[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::matrix(n, m, out).expect("matmul shape")
}

fn transpose_raw(a: &Tensor) -> Tensor {
    let (r, c) = (a.rows(), a.cols());
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a.at(i, j);
        }
    }
    Tensor::matrix(c, r, out).expect("transpose shape")
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// A leaf that receives no gradient routing.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let value = store.value(id).clone();
        self.push(
            value,
            Op::Param {
                store: store.id(),
                index: id.0,
            },
        )
    }

    pub(crate) fn param_nodes(&self) -> impl Iterator<Item = (Var, u64, usize)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n.op {
            Op::Param { store, index } => Some((Var(i), store, index)),
            _ => None,
        })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.val(a), self.val(b));
        if !av.is_matrix() || !bv.is_matrix() || av.cols() != bv.rows() {
            return Err(Error::shape(format!(
                "matmul {:?} x {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let out = matmul_raw(av, bv);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = transpose_raw(self.val(a));
        self.push(out, Op::Transpose(a))
    }

    fn zip_broadcast(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (av, bv) = (self.val(a), self.val(b));
        let (r, c) = broadcast_shape(av, bv)?;
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                out.push(f(bcast(av, i, j), bcast(bv, i, j)));
            }
        }
        Tensor::matrix(r, c, out)
    }

    /// Elementwise sum with row/column broadcasting of size-1 dimensions.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_broadcast(a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_broadcast(a, b, |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_broadcast(a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.val(a).map(|x| x * c);
        self.push(out, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.val(a).map(|x| x + c);
        self.push(out, Op::AddScalar(a))
    }

    /// Elementwise `f` with a caller-supplied derivative `df(x, f(x))`.
    pub fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, df: impl Fn(f64, f64) -> f64) -> Var {
        let xv = self.val(x);
        let out = xv.map(&f);
        let deriv = xv
            .data()
            .iter()
            .zip(out.data())
            .map(|(&a, &y)| df(a, y))
            .collect();
        self.push(out, Op::Unary { x, deriv })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |a| a.max(0.0), |a, _| if a > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.map(
            x,
            move |a| if a > 0.0 { a } else { slope * a },
            move |a, _| if a > 0.0 { 1.0 } else { slope },
        )
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.map(x, f64::exp, |_, y| y)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.map(x, f64::ln, |a, _| 1.0 / a)
    }

    /// `x − logsumexp(x)` along each row.
    pub fn log_softmax_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.val(x);
        if xv.cols() == 0 {
            return Err(Error::shape("log-softmax over empty rows"));
        }
        let shift: Vec<f64> = (0..xv.rows())
            .map(|i| xv.row_slice(i).iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let shift = self.constant(Tensor::matrix(shift.len(), 1, shift)?);
        let centered = self.sub(x, shift)?;
        let e = self.exp(centered);
        let s = self.sum_axis(e, 1)?;
        let lse = self.ln(s);
        self.sub(centered, lse)
    }

    /// Softmax along `axis` (0 = down columns, 1 = along rows).
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        match axis {
            1 => self.softmax_rows(x),
            0 => {
                let t = self.transpose(x);
                let s = self.softmax_rows(t)?;
                Ok(self.transpose(s))
            }
            _ => Err(Error::shape(format!("softmax axis {axis} on a rank-2 tensor"))),
        }
    }

    fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.val(x);
        if !xv.is_matrix() || xv.cols() == 0 || xv.rows() == 0 {
            return Err(Error::shape(format!("softmax over empty axis {:?}", xv.shape())));
        }
        let (r, c) = (xv.rows(), xv.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = xv.row_slice(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (j, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                out[i * c + j] = e;
                total += e;
            }
            for o in &mut out[i * c..(i + 1) * c] {
                *o /= total;
            }
        }
        let out = Tensor::matrix(r, c, out)?;
        Ok(self.push(out, Op::SoftmaxRows(x)))
    }

    /// Normalizes each row to zero mean and unit variance, then applies the
    /// `[1, cols]` affine `gain`, `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let xv = self.val(x);
        let (r, c) = (xv.rows(), xv.cols());
        let (gv, bv) = (self.val(gain), self.val(bias));
        if gv.shape() != [1, c] || bv.shape() != [1, c] || c == 0 {
            return Err(Error::shape(format!(
                "layer_norm of {:?} with gain {:?} and bias {:?}",
                xv.shape(),
                gv.shape(),
                bv.shape()
            )));
        }
        let mut xhat = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = xv.row_slice(i);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[i] = is;
            for j in 0..c {
                let h = (row[j] - mean) * is;
                xhat[i * c + j] = h;
                out[i * c + j] = gv.data()[j] * h + bv.data()[j];
            }
        }
        let out = Tensor::matrix(r, c, out)?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        ))
    }

    /// Concatenates along `axis` (0 stacks rows, 1 joins columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat of nothing"));
        }
        match axis {
            1 => {
                let rows = self.val(parts[0]).rows();
                if parts.iter().any(|&p| self.val(p).rows() != rows) {
                    return Err(Error::shape("concat along columns needs equal row counts"));
                }
                let cols: usize = parts.iter().map(|&p| self.val(p).cols()).sum();
                let mut out = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    for &p in parts {
                        out.extend_from_slice(self.val(p).row_slice(r));
                    }
                }
                let out = Tensor::matrix(rows, cols, out)?;
                Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
            }
            0 => {
                let cols = self.val(parts[0]).cols();
                if parts.iter().any(|&p| self.val(p).cols() != cols) {
                    return Err(Error::shape("concat along rows needs equal column counts"));
                }
                let rows: usize = parts.iter().map(|&p| self.val(p).rows()).sum();
                let mut out = Vec::with_capacity(rows * cols);
                for &p in parts {
                    out.extend_from_slice(self.val(p).data());
                }
                let out = Tensor::matrix(rows, cols, out)?;
                Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
            }
            _ => Err(Error::shape(format!("concat axis {axis}"))),
        }
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.val(x);
        if start + len > xv.cols() {
            return Err(Error::shape(format!(
                "column slice {start}..{} of {:?}",
                start + len,
                xv.shape()
            )));
        }
        let mut out = Vec::with_capacity(xv.rows() * len);
        for r in 0..xv.rows() {
            out.extend_from_slice(&xv.row_slice(r)[start..start + len]);
        }
        let out = Tensor::matrix(xv.rows(), len, out)?;
        Ok(self.push(out, Op::SliceCols { x, start }))
    }

    /// Row `i` of the result is row `index[i]` of `x`.
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let xv = self.val(x);
        if let Some(bad) = index.iter().find(|&&i| i >= xv.rows()) {
            return Err(Error::shape(format!("row {bad} out of {}", xv.rows())));
        }
        let mut out = Vec::with_capacity(index.len() * xv.cols());
        for &i in index {
            out.extend_from_slice(xv.row_slice(i));
        }
        let out = Tensor::matrix(index.len(), xv.cols(), out)?;
        Ok(self.push(
            out,
            Op::GatherRows {
                x,
                index: index.to_vec(),
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.val(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.val(x).len().max(1) as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Reduces `axis` away: axis 0 gives `[1, cols]`, axis 1 gives `[rows, 1]`.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xv = self.val(x);
        let (r, c) = (xv.rows(), xv.cols());
        match axis {
            0 => {
                let mut out = vec![0.0; c];
                for i in 0..r {
                    for (o, v) in out.iter_mut().zip(xv.row_slice(i)) {
                        *o += v;
                    }
                }
                let out = Tensor::matrix(1, c, out)?;
                Ok(self.push(out, Op::SumRows(x)))
            }
            1 => {
                let out = (0..r).map(|i| xv.row_slice(i).iter().sum()).collect();
                let out = Tensor::matrix(r, 1, out)?;
                Ok(self.push(out, Op::SumCols(x)))
            }
            _ => Err(Error::shape(format!("sum axis {axis}"))),
        }
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xv = self.val(x);
        let n = if axis == 0 { xv.rows() } else { xv.cols() };
        let s = self.sum_axis(x, axis)?;
        Ok(self.scale(s, 1.0 / n.max(1) as f64))
    }

    /// Euclidean norm of each row, `[rows, 1]`. The gradient at a zero row is zero.
    pub fn row_norm(&mut self, x: Var) -> Var {
        let xv = self.val(x);
        let out = (0..xv.rows())
            .map(|i| xv.row_slice(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let out = Tensor::matrix(xv.rows(), 1, out).expect("row norm shape");
        self.push(out, Op::RowNorm(x))
    }

    /// Maximum of each row, `[rows, 1]`; the gradient goes to the first maximum.
    pub fn row_max(&mut self, x: Var) -> Result<Var> {
        let xv = self.val(x);
        if xv.cols() == 0 {
            return Err(Error::shape("row max over empty rows"));
        }
        let mut arg = Vec::with_capacity(xv.rows());
        let mut out = Vec::with_capacity(xv.rows());
        for i in 0..xv.rows() {
            let row = xv.row_slice(i);
            let (j, v) = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bj, bv), (j, &v)| {
                    if v > bv {
                        (j, v)
                    } else {
                        (bj, bv)
                    }
                });
            arg.push(j);
            out.push(v);
        }
        let out = Tensor::matrix(xv.rows(), 1, out)?;
        Ok(self.push(out, Op::RowMax { x, arg }))
    }

    /// Reverse pass from a `[1, 1]` loss.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        let lv = self.val(loss);
        if lv.len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant | Op::Param { .. } => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.val(*a), self.val(*b));
                    acc(&mut grads, *a, matmul_raw(&g, &transpose_raw(bv)));
                    acc(&mut grads, *b, matmul_raw(&transpose_raw(av), &g));
                }
                Op::Transpose(a) => acc(&mut grads, *a, transpose_raw(&g)),
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    let (av, bv) = (self.val(*a), self.val(*b));
                    let ga = reduce_to(&g, av.rows(), av.cols());
                    let gb = reduce_to(&g, bv.rows(), bv.cols()).map(|x| sign * x);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.val(*a), self.val(*b));
                    let (r, c) = (g.rows(), g.cols());
                    let mut ga = Tensor::zeros(&[r, c]);
                    let mut gb = Tensor::zeros(&[r, c]);
                    for x in 0..r {
                        for y in 0..c {
                            let gv = g.at(x, y);
                            ga.set(x, y, gv * bcast(bv, x, y));
                            gb.set(x, y, gv * bcast(av, x, y));
                        }
                    }
                    acc(&mut grads, *a, reduce_to(&ga, av.rows(), av.cols()));
                    acc(&mut grads, *b, reduce_to(&gb, bv.rows(), bv.cols()));
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g.map(|x| x * c)),
                Op::AddScalar(a) => acc(&mut grads, *a, g.clone()),
                Op::Unary { x, deriv } => {
                    let mut out = g.clone();
                    for (o, d) in out.data_mut().iter_mut().zip(deriv) {
                        *o *= d;
                    }
                    acc(&mut grads, *x, out);
                }
                Op::SoftmaxRows(x) => {
                    let y = &node.value;
                    let (r, c) = (y.rows(), y.cols());
                    let mut out = Tensor::zeros(&[r, c]);
                    for row in 0..r {
                        let dot: f64 = (0..c).map(|j| g.at(row, j) * y.at(row, j)).sum();
                        for j in 0..c {
                            out.set(row, j, y.at(row, j) * (g.at(row, j) - dot));
                        }
                    }
                    acc(&mut grads, *x, out);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let gv = self.val(*gain);
                    let (r, c) = (g.rows(), g.cols());
                    let mut dx = Tensor::zeros(&[r, c]);
                    let mut dgain = vec![0.0; c];
                    let mut dbias = vec![0.0; c];
                    for row in 0..r {
                        let mut dxh = vec![0.0; c];
                        for j in 0..c {
                            let gy = g.at(row, j);
                            dgain[j] += gy * xhat[row * c + j];
                            dbias[j] += gy;
                            dxh[j] = gy * gv.data()[j];
                        }
                        let mean_d = dxh.iter().sum::<f64>() / c as f64;
                        let mean_dx = (0..c).map(|j| dxh[j] * xhat[row * c + j]).sum::<f64>()
                            / c as f64;
                        for j in 0..c {
                            let v = inv_std[row] * (dxh[j] - mean_d - xhat[row * c + j] * mean_dx);
                            dx.set(row, j, v);
                        }
                    }
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *gain, Tensor::row(&dgain));
                    acc(&mut grads, *bias, Tensor::row(&dbias));
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pv = self.val(p);
                        let (r, c) = (pv.rows(), pv.cols());
                        let mut out = Vec::with_capacity(r * c);
                        for row in 0..r {
                            out.extend_from_slice(&g.row_slice(row)[offset..offset + c]);
                        }
                        acc(&mut grads, p, Tensor::matrix(r, c, out)?);
                        offset += c;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    let c = g.cols();
                    for &p in parts {
                        let r = self.val(p).rows();
                        let out = g.data()[offset * c..(offset + r) * c].to_vec();
                        acc(&mut grads, p, Tensor::matrix(r, c, out)?);
                        offset += r;
                    }
                }
                Op::SliceCols { x, start } => {
                    let xv = self.val(*x);
                    let mut out = Tensor::zeros(&[xv.rows(), xv.cols()]);
                    for row in 0..g.rows() {
                        for j in 0..g.cols() {
                            out.set(row, start + j, g.at(row, j));
                        }
                    }
                    acc(&mut grads, *x, out);
                }
                Op::GatherRows { x, index } => {
                    let xv = self.val(*x);
                    let mut out = Tensor::zeros(&[xv.rows(), xv.cols()]);
                    for (row, &src) in index.iter().enumerate() {
                        for j in 0..g.cols() {
                            let v = out.at(src, j) + g.at(row, j);
                            out.set(src, j, v);
                        }
                    }
                    acc(&mut grads, *x, out);
                }
                Op::Sum(x) => {
                    let xv = self.val(*x);
                    acc(&mut grads, *x, Tensor::filled(xv.shape(), g.item()));
                }
                Op::SumRows(x) => {
                    let xv = self.val(*x);
                    let mut out = Tensor::zeros(&[xv.rows(), xv.cols()]);
                    for row in 0..xv.rows() {
                        for j in 0..xv.cols() {
                            out.set(row, j, g.at(0, j));
                        }
                    }
                    acc(&mut grads, *x, out);
                }
                Op::SumCols(x) => {
                    let xv = self.val(*x);
                    let mut out = Tensor::zeros(&[xv.rows(), xv.cols()]);
                    for row in 0..xv.rows() {
                        for j in 0..xv.cols() {
                            out.set(row, j, g.at(row, 0));
                        }
                    }
                    acc(&mut grads, *x, out);
                }
                Op::RowNorm(x) => {
                    let xv = self.val(*x);
                    let mut out = Tensor::zeros(&[xv.rows(), xv.cols()]);
                    for row in 0..xv.rows() {
                        let n = node.value.at(row, 0);
                        if n > 0.0 {
                            for j in 0..xv.cols() {
                                out.set(row, j, g.at(row, 0) * xv.at(row, j) / n);
                            }
                        }
                    }
                    acc(&mut grads, *x, out);
                }
                Op::RowMax { x, arg } => {
                    let xv = self.val(*x);
                    let mut out = Tensor::zeros(&[xv.rows(), xv.cols()]);
                    for (row, &j) in arg.iter().enumerate() {
                        out.set(row, j, g.at(row, 0));
                    }
                    acc(&mut grads, *x, out);
                }
            }
            grads[i] = Some(g);
        }
        Ok(Grads { grads })
    }
}

fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, x) in existing.data_mut().iter_mut().zip(g.data()) {
                *e += x;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
