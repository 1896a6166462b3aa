//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every op appends one node holding its output value. `backward` walks the
//! nodes in exact reverse order, so any topological subtlety is avoided.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::gemm::gemm;
use super::params::{Gradients, ParamId, ParamStore};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Gold label marking a position that takes no part in the loss.
pub const IGNORE: usize = usize::MAX;

/// Probabilities below this are clamped before taking the log.
pub const PROB_EPSILON: f64 = 1e-12;

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Embed { table: ParamId, rows: Vec<Option<usize>> },
    Gather { src: Var, rows: Vec<Option<usize>> },
    MatMul(Var, Var),
    BatchMatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Box<[f64]>),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Narrow { src: Var, axis: usize, start: usize },
    Reshape(Var),
    MeanPool(Vec<Var>),
    MeanLastAxis(Var),
    PairSum(Var, Var),
    Sum(Var),
    WeightedNll { probs: Var, gold: Vec<usize>, weights: Vec<f64> },
    /// Gate activations `[n, B, 4h]` and cell states `[n, B, h]`, time-major.
    Lstm { gates_in: Var, w_hh: Var, acts: Vec<f64>, cells: Vec<f64> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "constant",
            Op::Param(_) => "param",
            Op::Embed { .. } => "embed",
            Op::Gather { .. } => "gather",
            Op::MatMul(..) => "matmul",
            Op::BatchMatMul(..) => "bmm",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Mul(..) => "mul",
            Op::MulConst(..) => "mul_const",
            Op::Scale(..) => "scale",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Softmax(_) => "softmax",
            Op::Concat { .. } => "concat",
            Op::Narrow { .. } => "narrow",
            Op::Reshape(_) => "reshape",
            Op::MeanPool(_) => "mean_pool",
            Op::MeanLastAxis(_) => "mean_last_axis",
            Op::PairSum(..) => "pair_sum",
            Op::Sum(_) => "sum",
            Op::WeightedNll { .. } => "weighted_nll",
            Op::Lstm { .. } => "lstm",
        }
    }
}

enum Value<'s> {
    Owned(Tensor),
    Borrowed(&'s Tensor),
}

struct Node<'s> {
    value: Value<'s>,
    op: Op,
    needs_grad: bool,
}

/// Records operations against a borrowed [`ParamStore`].
pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node<'s>>,
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Description of the first recorded tensor holding NaN or ±Inf.
    pub fn first_non_finite(&self) -> Option<alloc::string::String> {
        self.nodes.iter().enumerate().find_map(|(i, n)| {
            let t = match &n.value {
                Value::Owned(t) => t,
                Value::Borrowed(t) => t,
            };
            if t.is_finite() {
                return None;
            }
            Some(match &n.op {
                Op::Param(id) => format!("parameter `{}`", self.store.get(*id).name),
                op => format!("node {i} ({}) with shape {:?}", op.name(), t.shape()),
            })
        })
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let p = self.store.get(id);
        self.nodes.push(Node {
            value: Value::Borrowed(&p.value),
            op: Op::Param(id),
            needs_grad: p.requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Looks up rows of a 2-D parameter table; `None` yields a zero row.
    pub fn embed(&mut self, table: ParamId, rows: Vec<Option<usize>>) -> Result<Var> {
        let p = self.store.get(table);
        let t = &p.value;
        if t.ndim() != 2 {
            return Err(Error::dim("embed", t.shape(), &[0, 0]));
        }
        let (nrows, cols) = (t.shape()[0], t.shape()[1]);
        let mut out = vec![0.0; rows.len() * cols];
        for (k, r) in rows.iter().enumerate() {
            if let Some(r) = *r {
                if r >= nrows {
                    return Err(Error::Argument(format!(
                        "row {r} out of range for table `{}` with {nrows} rows",
                        p.name
                    )));
                }
                out[k * cols..(k + 1) * cols].copy_from_slice(&t.data()[r * cols..(r + 1) * cols]);
            }
        }
        let value = Tensor::new(vec![rows.len(), cols], out)?;
        let needs = p.requires_grad;
        Ok(self.push(value, Op::Embed { table, rows }, needs))
    }

    /// Gathers rows of a 2-D value; `None` yields a zero row.
    pub fn gather(&mut self, src: Var, rows: Vec<Option<usize>>) -> Result<Var> {
        let t = self.value(src);
        if t.ndim() != 2 {
            return Err(Error::dim("gather", t.shape(), &[0, 0]));
        }
        let (nrows, cols) = (t.shape()[0], t.shape()[1]);
        let mut out = vec![0.0; rows.len() * cols];
        for (k, r) in rows.iter().enumerate() {
            if let Some(r) = *r {
                if r >= nrows {
                    return Err(Error::Argument(format!("gather row {r} out of range {nrows}")));
                }
                out[k * cols..(k + 1) * cols].copy_from_slice(&t.data()[r * cols..(r + 1) * cols]);
            }
        }
        let value = Tensor::new(vec![rows.len(), cols], out)?;
        let needs = self.needs(src);
        Ok(self.push(value, Op::Gather { src, rows }, needs))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.ndim() != 2 || tb.ndim() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(Error::dim("matmul", ta.shape(), tb.shape()));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, &mut out, false);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), needs))
    }

    /// Batched product `[B, m, k] · [B, k, n] → [B, m, n]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::dim("bmm", sa, sb));
        }
        let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![0.0; bs * m * n];
        for i in 0..bs {
            gemm(
                m,
                k,
                n,
                &ta.data()[i * m * k..(i + 1) * m * k],
                false,
                &tb.data()[i * k * n..(i + 1) * k * n],
                false,
                &mut out[i * m * n..(i + 1) * m * n],
                false,
            );
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(vec![bs, m, n], out)?, Op::BatchMatMul(a, b), needs))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), needs))
    }

    /// Adds a vector to every row (broadcast over the last axis).
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(bias));
        let cols = *ta.shape().last().unwrap_or(&1);
        if tb.numel() != cols || ta.ndim() == 0 {
            return Err(Error::dim("add_row", ta.shape(), tb.shape()));
        }
        let b = tb.data();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + b[i % cols])
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let needs = self.needs(a) || self.needs(bias);
        Ok(self.push(value, Op::AddRow(a, bias), needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul(a, b), needs))
    }

    /// Elementwise product with a constant of the same number of elements.
    pub fn mul_const(&mut self, a: Var, c: Vec<f64>) -> Result<Var> {
        let ta = self.value(a);
        if ta.numel() != c.len() {
            return Err(Error::dim("mul_const", ta.shape(), &[c.len()]));
        }
        let data = ta.data().iter().zip(&c).map(|(x, y)| x * y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let needs = self.needs(a);
        Ok(self.push(value, Op::MulConst(a, c.into_boxed_slice()), needs))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let ta = self.value(a);
        let value = Tensor::from_fn(ta.shape(), |i| ta.data()[i] * s);
        let needs = self.needs(a);
        self.push(value, Op::Scale(a, s), needs)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let ta = self.value(a);
        let value = Tensor::from_fn(ta.shape(), |i| f(ta.data()[i]));
        let needs = self.needs(a);
        self.push(value, op, needs)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x < 0.0 { 0.0 } else { x }, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, libm::tanh, Op::Tanh(a))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let cols = match ta.shape().last() {
            Some(&c) if c > 0 => c,
            _ => return Err(Error::dim("softmax", ta.shape(), &[])),
        };
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(cols) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = libm::exp(*v - max);
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let needs = self.needs(a);
        Ok(self.push(value, Op::Softmax(a), needs))
    }

    /// Inverted dropout: survivors are scaled by `1/(1−rate)`, so a rate of
    /// zero is the identity.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Argument(format!("dropout rate {rate} not in [0, 1)")));
        }
        if rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask = (0..self.value(a).numel())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        self.mul_const(a, mask)
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = match inputs.first() {
            Some(&v) => self.shape(v).to_vec(),
            None => return Err(Error::Argument("concat of an empty list".into())),
        };
        if axis >= first.len() {
            return Err(Error::dim("concat", &first, &[axis]));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::dim("concat", &first, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&first, axis);
        let mut out_shape = first.clone();
        out_shape[axis] = total;
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let t = self.value(v);
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let needs = inputs.iter().any(|&v| self.needs(v));
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            needs,
        ))
    }

    /// Slice `[start, start+len)` along `axis`.
    pub fn narrow(&mut self, src: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(src).to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::dim("narrow", &shape, &[axis, start, len]));
        }
        let (outer, dim, inner) = split_axis(&shape, axis);
        let t = self.value(src);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * dim * inner + start * inner;
            data.extend_from_slice(&t.data()[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let needs = self.needs(src);
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(value, Op::Narrow { src, axis, start }, needs))
    }

    pub fn reshape(&mut self, src: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(src).clone().reshape(shape)?;
        let needs = self.needs(src);
        Ok(self.push(value, Op::Reshape(src), needs))
    }

    /// Elementwise arithmetic mean of equally shaped tensors.
    pub fn mean_pool(&mut self, inputs: &[Var]) -> Result<Var> {
        let Some(&first) = inputs.first() else {
            return Err(Error::Argument("mean_pool of an empty list".into()));
        };
        for &v in inputs {
            self.same_shape("mean_pool", first, v)?;
        }
        let mut acc = self.value(first).data().to_vec();
        for &v in &inputs[1..] {
            add_into(&mut acc, self.value(v).data());
        }
        let inv = inputs.len() as f64;
        acc.iter_mut().for_each(|x| *x /= inv);
        let value = Tensor::new(self.shape(first).to_vec(), acc)?;
        let needs = inputs.iter().any(|&v| self.needs(v));
        Ok(self.push(value, Op::MeanPool(inputs.to_vec()), needs))
    }

    /// Mean over the last axis, which is removed from the shape.
    pub fn mean_last_axis(&mut self, src: Var) -> Result<Var> {
        let t = self.value(src);
        let shape = t.shape();
        let Some((&k, rest)) = shape.split_last() else {
            return Err(Error::dim("mean_last_axis", shape, &[]));
        };
        if k == 0 {
            return Err(Error::dim("mean_last_axis", shape, &[]));
        }
        let data = t
            .data()
            .chunks(k)
            .map(|c| c.iter().sum::<f64>() / k as f64)
            .collect();
        let value = Tensor::new(rest.to_vec(), data)?;
        let needs = self.needs(src);
        Ok(self.push(value, Op::MeanLastAxis(src), needs))
    }

    /// `out[b, i, j, :] = rows[b, i, :] + cols[b, j, :]` for inputs `[B, n, k]`.
    pub fn pair_sum(&mut self, rows: Var, cols: Var) -> Result<Var> {
        self.same_shape("pair_sum", rows, cols)?;
        let s = self.shape(rows).to_vec();
        if s.len() != 3 {
            return Err(Error::dim("pair_sum", &s, &[0, 0, 0]));
        }
        let (bs, n, k) = (s[0], s[1], s[2]);
        let (tr, tc) = (self.value(rows).data(), self.value(cols).data());
        let mut data = vec![0.0; bs * n * n * k];
        for b in 0..bs {
            for i in 0..n {
                let r = &tr[(b * n + i) * k..(b * n + i + 1) * k];
                for j in 0..n {
                    let c = &tc[(b * n + j) * k..(b * n + j + 1) * k];
                    let o = ((b * n + i) * n + j) * k;
                    for ((d, x), y) in data[o..o + k].iter_mut().zip(r).zip(c) {
                        *d = x + y;
                    }
                }
            }
        }
        let value = Tensor::new(vec![bs, n, n, k], data)?;
        let needs = self.needs(rows) || self.needs(cols);
        Ok(self.push(value, Op::PairSum(rows, cols), needs))
    }

    pub fn sum(&mut self, src: Var) -> Var {
        let total = self.value(src).data().iter().sum();
        let needs = self.needs(src);
        self.push(Tensor::scalar(total), Op::Sum(src), needs)
    }

    /// `Σ_i weights[i] · −log(max(probs[i, gold[i]], ε))`, skipping [`IGNORE`].
    pub fn weighted_nll(&mut self, probs: Var, gold: Vec<usize>, weights: Vec<f64>) -> Result<Var> {
        let t = self.value(probs);
        if t.ndim() != 2 || t.shape()[0] != gold.len() || gold.len() != weights.len() {
            return Err(Error::dim("weighted_nll", t.shape(), &[gold.len(), weights.len()]));
        }
        let cols = t.shape()[1];
        let mut total = 0.0;
        for (i, (&g, &w)) in gold.iter().zip(&weights).enumerate() {
            if g == IGNORE {
                continue;
            }
            if g >= cols {
                return Err(Error::Argument(format!("gold id {g} out of range {cols}")));
            }
            let p = t.data()[i * cols + g];
            // `f64::max` would turn NaN into ε.
            let p = if p < PROB_EPSILON { PROB_EPSILON } else { p };
            total -= w * libm::log(p);
        }
        let needs = self.needs(probs);
        Ok(self.push(
            Tensor::scalar(total),
            Op::WeightedNll {
                probs,
                gold,
                weights,
            },
            needs,
        ))
    }

    /// Unidirectional LSTM over `[B, n, 4h]` input pre-activations (input
    /// projection and bias already added) with recurrent weights `[h, 4h]`.
    /// Gates are packed `[i | f | g | o]`; zero initial state. Returns the
    /// hidden states `[B, n, h]`.
    pub fn lstm(&mut self, gates_in: Var, w_hh: Var) -> Result<Var> {
        let (x, w) = (self.value(gates_in), self.value(w_hh));
        let h = w.shape()[0];
        if x.ndim() != 3 || w.ndim() != 2 || w.shape()[1] != 4 * h || x.shape()[2] != 4 * h {
            return Err(Error::dim("lstm", x.shape(), w.shape()));
        }
        let (b, n) = (x.shape()[0], x.shape()[1]);
        let g4 = 4 * h;
        let mut acts = vec![0.0; n * b * g4];
        let mut cells = vec![0.0; n * b * h];
        let mut out = vec![0.0; b * n * h];
        let mut prev_h = vec![0.0; b * h];
        for t in 0..n {
            let pre = &mut acts[t * b * g4..(t + 1) * b * g4];
            for r in 0..b {
                let src = (r * n + t) * g4;
                pre[r * g4..(r + 1) * g4].copy_from_slice(&x.data()[src..src + g4]);
            }
            if t > 0 {
                gemm(b, h, g4, &prev_h, false, w.data(), false, pre, true);
            }
            for r in 0..b {
                let a = &mut pre[r * g4..(r + 1) * g4];
                for k in 0..h {
                    a[k] = sigmoid(a[k]);
                    a[h + k] = sigmoid(a[h + k]);
                    a[2 * h + k] = libm::tanh(a[2 * h + k]);
                    a[3 * h + k] = sigmoid(a[3 * h + k]);
                }
                for k in 0..h {
                    let c_prev = if t > 0 { cells[((t - 1) * b + r) * h + k] } else { 0.0 };
                    let c = a[h + k] * c_prev + a[k] * a[2 * h + k];
                    cells[(t * b + r) * h + k] = c;
                    let hv = a[3 * h + k] * libm::tanh(c);
                    prev_h[r * h + k] = hv;
                    out[(r * n + t) * h + k] = hv;
                }
            }
        }
        let needs = self.needs(gates_in) || self.needs(w_hh);
        let value = Tensor::new(vec![b, n, h], out)?;
        Ok(self.push(
            value,
            Op::Lstm {
                gates_in,
                w_hh,
                acts,
                cells,
            },
            needs,
        ))
    }

    /// Back-propagates from the scalar `loss`, returning parameter gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Argument(format!(
                "backward needs a scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut param_grads: Vec<Option<Vec<f64>>> = (0..self.store.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let out = self.value(Var(idx));
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    let n = self.store.value(*id).numel();
                    add_into(param_grads[id.0].get_or_insert_with(|| vec![0.0; n]), &g);
                }
                Op::Embed { table, rows } => {
                    let t = self.store.value(*table);
                    let cols = t.shape()[1];
                    let buf = param_grads[table.0].get_or_insert_with(|| vec![0.0; t.numel()]);
                    for (k, r) in rows.iter().enumerate() {
                        if let Some(r) = *r {
                            add_into(&mut buf[r * cols..(r + 1) * cols], &g[k * cols..(k + 1) * cols]);
                        }
                    }
                }
                Op::Gather { src, rows } => {
                    if self.needs(*src) {
                        let t = self.value(*src);
                        let cols = t.shape()[1];
                        let buf = grad_buf(&mut grads, *src, t.numel());
                        for (k, r) in rows.iter().enumerate() {
                            if let Some(r) = *r {
                                add_into(&mut buf[r * cols..(r + 1) * cols], &g[k * cols..(k + 1) * cols]);
                            }
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                    if self.needs(*a) {
                        let buf = grad_buf(&mut grads, *a, m * k);
                        gemm(m, n, k, &g, false, tb.data(), true, buf, true);
                    }
                    if self.needs(*b) {
                        let buf = grad_buf(&mut grads, *b, k * n);
                        gemm(k, m, n, ta.data(), true, &g, false, buf, true);
                    }
                }
                Op::BatchMatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (bs, m, k, n) = (ta.shape()[0], ta.shape()[1], ta.shape()[2], tb.shape()[2]);
                    if self.needs(*a) {
                        let buf = grad_buf(&mut grads, *a, bs * m * k);
                        for i in 0..bs {
                            gemm(
                                m,
                                n,
                                k,
                                &g[i * m * n..(i + 1) * m * n],
                                false,
                                &tb.data()[i * k * n..(i + 1) * k * n],
                                true,
                                &mut buf[i * m * k..(i + 1) * m * k],
                                true,
                            );
                        }
                    }
                    if self.needs(*b) {
                        let buf = grad_buf(&mut grads, *b, bs * k * n);
                        for i in 0..bs {
                            gemm(
                                k,
                                m,
                                n,
                                &ta.data()[i * m * k..(i + 1) * m * k],
                                true,
                                &g[i * m * n..(i + 1) * m * n],
                                false,
                                &mut buf[i * k * n..(i + 1) * k * n],
                                true,
                            );
                        }
                    }
                }
                Op::Add(a, b) => {
                    match (self.needs(*a), self.needs(*b)) {
                        (true, true) => {
                            give(&mut grads, *a, g.clone());
                            give(&mut grads, *b, g);
                        }
                        (true, false) => give(&mut grads, *a, g),
                        (false, true) => give(&mut grads, *b, g),
                        (false, false) => {}
                    }
                }
                Op::AddRow(a, bias) => {
                    if self.needs(*bias) {
                        let cols = self.value(*bias).numel();
                        let buf = grad_buf(&mut grads, *bias, cols);
                        for row in g.chunks(cols) {
                            add_into(buf, row);
                        }
                    }
                    if self.needs(*a) {
                        give(&mut grads, *a, g);
                    }
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                    if self.needs(*a) {
                        let buf = grad_buf(&mut grads, *a, g.len());
                        for ((d, gv), y) in buf.iter_mut().zip(&g).zip(tb) {
                            *d += gv * y;
                        }
                    }
                    if self.needs(*b) {
                        let buf = grad_buf(&mut grads, *b, g.len());
                        for ((d, gv), x) in buf.iter_mut().zip(&g).zip(ta) {
                            *d += gv * x;
                        }
                    }
                }
                Op::MulConst(a, c) => {
                    let mut g = g;
                    g.iter_mut().zip(c.iter()).for_each(|(gv, y)| *gv *= y);
                    give(&mut grads, *a, g);
                }
                Op::Scale(a, s) => {
                    let mut g = g;
                    g.iter_mut().for_each(|gv| *gv *= s);
                    give(&mut grads, *a, g);
                }
                Op::Relu(a) => {
                    let mut g = g;
                    for (gv, xv) in g.iter_mut().zip(self.value(*a).data()) {
                        if *xv <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    give(&mut grads, *a, g);
                }
                Op::Sigmoid(a) => {
                    let mut g = g;
                    g.iter_mut().zip(out.data()).for_each(|(gv, y)| *gv *= y * (1.0 - y));
                    give(&mut grads, *a, g);
                }
                Op::Tanh(a) => {
                    let mut g = g;
                    g.iter_mut().zip(out.data()).for_each(|(gv, y)| *gv *= 1.0 - y * y);
                    give(&mut grads, *a, g);
                }
                Op::Softmax(a) => {
                    let cols = *out.shape().last().expect("softmax rank");
                    let buf = grad_buf(&mut grads, *a, g.len());
                    for ((drow, grow), yrow) in buf.chunks_mut(cols).zip(g.chunks(cols)).zip(out.data().chunks(cols)) {
                        let dot: f64 = grow.iter().zip(yrow).map(|(x, y)| x * y).sum();
                        for ((d, gv), y) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d += y * (gv - dot);
                        }
                    }
                }
                Op::Concat { inputs, axis } => {
                    let (outer, total, inner) = split_axis(out.shape(), *axis);
                    let mut offset = 0;
                    for &v in inputs {
                        let width = self.shape(v)[*axis];
                        if self.needs(v) {
                            let chunk = width * inner;
                            let buf = grad_buf(&mut grads, v, outer * chunk);
                            for o in 0..outer {
                                let src = o * total * inner + offset * inner;
                                add_into(&mut buf[o * chunk..(o + 1) * chunk], &g[src..src + chunk]);
                            }
                        }
                        offset += width;
                    }
                }
                Op::Narrow { src, axis, start } => {
                    if self.needs(*src) {
                        let in_shape = self.shape(*src);
                        let (outer, dim, inner) = split_axis(in_shape, *axis);
                        let len = out.shape()[*axis];
                        let buf = grad_buf(&mut grads, *src, outer * dim * inner);
                        for o in 0..outer {
                            let base = o * dim * inner + start * inner;
                            add_into(&mut buf[base..base + len * inner], &g[o * len * inner..(o + 1) * len * inner]);
                        }
                    }
                }
                Op::Reshape(src) => give(&mut grads, *src, g),
                Op::MeanPool(inputs) => {
                    let inv = 1.0 / inputs.len() as f64;
                    for &v in inputs {
                        if self.needs(v) {
                            let buf = grad_buf(&mut grads, v, g.len());
                            for (d, gv) in buf.iter_mut().zip(&g) {
                                *d += gv * inv;
                            }
                        }
                    }
                }
                Op::MeanLastAxis(src) => {
                    let k = *self.shape(*src).last().expect("rank");
                    let inv = 1.0 / k as f64;
                    let buf = grad_buf(&mut grads, *src, g.len() * k);
                    for (chunk, gv) in buf.chunks_mut(k).zip(&g) {
                        chunk.iter_mut().for_each(|d| *d += gv * inv);
                    }
                }
                Op::PairSum(rows, cols) => {
                    let s = self.shape(*rows);
                    let (bs, n, k) = (s[0], s[1], s[2]);
                    if self.needs(*rows) {
                        let buf = grad_buf(&mut grads, *rows, bs * n * k);
                        for b in 0..bs {
                            for i in 0..n {
                                let dst = &mut buf[(b * n + i) * k..(b * n + i + 1) * k];
                                for j in 0..n {
                                    let o = ((b * n + i) * n + j) * k;
                                    add_into(dst, &g[o..o + k]);
                                }
                            }
                        }
                    }
                    if self.needs(*cols) {
                        let buf = grad_buf(&mut grads, *cols, bs * n * k);
                        for b in 0..bs {
                            for i in 0..n {
                                for j in 0..n {
                                    let o = ((b * n + i) * n + j) * k;
                                    add_into(&mut buf[(b * n + j) * k..(b * n + j + 1) * k], &g[o..o + k]);
                                }
                            }
                        }
                    }
                }
                Op::Sum(src) => {
                    let n = self.value(*src).numel();
                    let buf = grad_buf(&mut grads, *src, n);
                    buf.iter_mut().for_each(|d| *d += g[0]);
                }
                Op::WeightedNll {
                    probs,
                    gold,
                    weights,
                } => {
                    let t = self.value(*probs);
                    let cols = t.shape()[1];
                    let buf = grad_buf(&mut grads, *probs, t.numel());
                    for (i, (&gi, &w)) in gold.iter().zip(weights).enumerate() {
                        if gi == IGNORE {
                            continue;
                        }
                        let p = t.data()[i * cols + gi];
                        if p > PROB_EPSILON {
                            buf[i * cols + gi] -= g[0] * w / p;
                        }
                    }
                }
                Op::Lstm {
                    gates_in,
                    w_hh,
                    acts,
                    cells,
                } => {
                    let w = self.value(*w_hh);
                    let h = w.shape()[0];
                    let g4 = 4 * h;
                    let (b, n) = (out.shape()[0], out.shape()[1]);
                    let hs = out.data();
                    let mut dx = vec![0.0; b * n * g4];
                    let mut dw = vec![0.0; h * g4];
                    let mut dh_next = vec![0.0; b * h];
                    let mut dc = vec![0.0; b * h];
                    let mut dpre = vec![0.0; b * g4];
                    let mut h_prev = vec![0.0; b * h];
                    for t in (0..n).rev() {
                        for r in 0..b {
                            let a = &acts[(t * b + r) * g4..(t * b + r + 1) * g4];
                            let d = &mut dpre[r * g4..(r + 1) * g4];
                            for k in 0..h {
                                let (i, f, gg, o) = (a[k], a[h + k], a[2 * h + k], a[3 * h + k]);
                                let c = cells[(t * b + r) * h + k];
                                let c_prev = if t > 0 { cells[((t - 1) * b + r) * h + k] } else { 0.0 };
                                let tc = libm::tanh(c);
                                let dh = g[(r * n + t) * h + k] + dh_next[r * h + k];
                                let dcv = dc[r * h + k] + dh * o * (1.0 - tc * tc);
                                d[k] = dcv * gg * i * (1.0 - i);
                                d[h + k] = dcv * c_prev * f * (1.0 - f);
                                d[2 * h + k] = dcv * i * (1.0 - gg * gg);
                                d[3 * h + k] = dh * tc * o * (1.0 - o);
                                dc[r * h + k] = dcv * f;
                            }
                            let dst = (r * n + t) * g4;
                            dx[dst..dst + g4].copy_from_slice(d);
                        }
                        if t > 0 {
                            for r in 0..b {
                                let src = (r * n + t - 1) * h;
                                h_prev[r * h..(r + 1) * h].copy_from_slice(&hs[src..src + h]);
                            }
                            gemm(h, b, g4, &h_prev, true, &dpre, false, &mut dw, true);
                            gemm(b, g4, h, &dpre, false, w.data(), true, &mut dh_next, false);
                        }
                    }
                    if self.needs(*gates_in) {
                        give(&mut grads, *gates_in, dx);
                    }
                    if self.needs(*w_hh) {
                        give(&mut grads, *w_hh, dw);
                    }
                }
            }
        }
        Ok(Gradients(param_grads))
    }
}

/// Adds `g` into `v`'s gradient, taking ownership when none exists yet.
fn give(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(buf) => add_into(buf, &g),
        slot => *slot = Some(g),
    }
}

fn grad_buf(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}
