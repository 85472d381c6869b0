//! Tape-based reverse-mode differentiation.
//!
//! Every op appends a node holding its value. Nodes whose inputs require a
//! gradient also keep the op so `backward` can replay the tape in reverse.
//! A graph is single-use: one forward pass, at most one backward.

use std::collections::BTreeMap;

use super::kernels::{counter_uniform, gemm_nn, gemm_nt, gemm_tn};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const LAYER_NORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[derive(Debug)]
enum Op {
    /// Leaf or constant result; nothing to propagate.
    None,
    MatMul { a: Var, b: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, factor: f64 },
    Gelu(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Dropout { a: Var, mask: Vec<f64> },
    Slice { a: Var, axis: usize, start: usize },
    Concat { parts: Vec<Var>, axis: usize },
    Reshape(Var),
    Permute { a: Var, perm: Vec<usize> },
    GatherRows { table: Var, rows: Vec<usize> },
    Mse { a: Var, b: Var },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    is_leaf: bool,
}

/// Gradients of the loss with respect to each leaf that requires one.
#[derive(Debug, Default)]
pub struct Gradients {
    map: BTreeMap<Var, Tensor>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.map.get(&var)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.map.remove(&var)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &Tensor)> {
        self.map.iter().map(|(v, t)| (*v, t))
    }
}

/// Computation graph for one forward (and optional backward) pass.
#[derive(Debug)]
pub struct Graph {
    nodes: Vec<Node>,
    train: bool,
    seed: u64,
    dropout_calls: u64,
    consumed: bool,
}

impl Graph {
    /// Evaluation-mode graph: dropout is the identity.
    pub fn eval() -> Self {
        Self::with_mode(false, 0)
    }

    /// Training-mode graph. Dropout masks are a pure function of `seed` and
    /// the ordinal of the dropout call within this graph.
    pub fn train(seed: u64) -> Self {
        Self::with_mode(true, seed)
    }

    fn with_mode(train: bool, seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            train,
            seed,
            dropout_calls: 0,
            consumed: false,
        }
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::None,
            requires_grad,
            is_leaf: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op: if requires_grad { op } else { Op::None },
            requires_grad,
            is_leaf: false,
        });
        Var(self.nodes.len() - 1)
    }

    // ── Linear algebra ──────────────────────────────────────────────

    /// `a[..., m, k] · b[k, n]` (shared right operand) or
    /// `a[..., m, k] · b[..., k, n]` (batched, identical leading axes).
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (batch, m, k, n) = matmul_dims(&sa, &sb)?;
        let shared = sb.len() == 2;
        let mut out = vec![0.0; batch * m * n];
        {
            let (av, bv) = (self.value(a).data(), self.value(b).data());
            for i in 0..batch {
                let boff = if shared { 0 } else { i * k * n };
                gemm_nn(
                    &av[i * m * k..(i + 1) * m * k],
                    &bv[boff..boff + k * n],
                    &mut out[i * m * n..(i + 1) * m * n],
                    m,
                    k,
                    n,
                );
            }
        }
        let mut shape = sa[..sa.len() - 1].to_vec();
        shape.push(n);
        Ok(self.push(Tensor::new(shape, out)?, Op::MatMul { a, b }, &[a, b]))
    }

    // ── Elementwise ─────────────────────────────────────────────────

    /// Elementwise add; the smaller operand broadcasts over leading axes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = self.order_for_broadcast("add", a, b)?;
        let value = self.broadcast_binary(a, b, |x, y| x + y);
        Ok(self.push(value, Op::Add { a, b }, &[a, b]))
    }

    /// `a - b`, with `b` broadcast over the leading axes of `a`.
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        if !is_suffix(self.shape(a), self.shape(b)) {
            return Err(Error::shape("sub", self.shape(a), self.shape(b)));
        }
        let value = self.broadcast_binary(a, b, |x, y| x - y);
        Ok(self.push(value, Op::Sub { a, b }, &[a, b]))
    }

    /// Elementwise product; the smaller operand broadcasts over leading axes.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = self.order_for_broadcast("mul", a, b)?;
        let value = self.broadcast_binary(a, b, |x, y| x * y);
        Ok(self.push(value, Op::Mul { a, b }, &[a, b]))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.map_unary(a, |x| x * factor);
        self.push(value, Op::Scale { a, factor }, &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.map_unary(a, |x| 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()));
        self.push(value, Op::Gelu(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.map_unary(a, |x| if x > 0.0 { x } else { 0.0 });
        self.push(value, Op::Relu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.map_unary(a, sigmoid);
        self.push(value, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.map_unary(a, f64::tanh);
        self.push(value, Op::Tanh(a), &[a])
    }

    // ── Normalization ───────────────────────────────────────────────

    /// Softmax over the last axis after adding `mask` (broadcast over leading
    /// axes). Entries masked with `-inf` get exactly zero probability.
    pub fn softmax(&mut self, a: Var, mask: Option<&Tensor>) -> Result<Var> {
        let x = self.value(a);
        if let Some(m) = mask {
            if !is_suffix(x.shape(), m.shape()) {
                return Err(Error::shape("softmax", x.shape(), m.shape()));
            }
        }
        let d = x.last_dim();
        let mut out = x.data().to_vec();
        if let Some(m) = mask {
            let md = m.data();
            for (i, v) in out.iter_mut().enumerate() {
                *v += md[i % md.len()];
            }
        }
        for row in out.chunks_mut(d) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let value = Tensor::new(x.shape().to_vec(), out)?;
        Ok(self.push(value, Op::Softmax(a), &[a]))
    }

    /// Layer normalization over the last axis with learned scale and offset.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let xv = self.value(x);
        let d = xv.last_dim();
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(Error::shape("layer_norm", xv.shape(), self.shape(gamma)));
        }
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let rows = xv.numel() / d;
        let mut xhat = vec![0.0; xv.numel()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; xv.numel()];
        for r in 0..rows {
            let row = &xv.data()[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g[j] + b[j];
            }
        }
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.push(value, Op::LayerNorm { x, gamma, beta, xhat, rstd }, &[x, gamma, beta]))
    }

    /// Inverted dropout. In evaluation mode, or with `p == 0`, returns `a`.
    pub fn dropout(&mut self, a: Var, p: f64) -> Var {
        if !self.train || p <= 0.0 {
            return a;
        }
        let stream = self.dropout_calls;
        self.dropout_calls += 1;
        let keep = 1.0 / (1.0 - p);
        let n = self.value(a).numel();
        let mask: Vec<f64> = (0..n as u64)
            .map(|i| if counter_uniform(self.seed, stream, i) >= p { keep } else { 0.0 })
            .collect();
        let x = self.value(a);
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Dropout { a, mask }, &[a])
    }

    // ── Shape manipulation ──────────────────────────────────────────

    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::invalid(format!(
                "slice: range {start}..{} on axis {axis} of {shape:?}",
                start + len
            )));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * shape[axis] + start) * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut oshape = shape.clone();
        oshape[axis] = len;
        Ok(self.push(Tensor::new(oshape, out)?, Op::Slice { a, axis, start }, &[a]))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat: no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::invalid(format!("concat: axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for p in parts {
            let s = self.shape(*p);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::shape("concat", &base, s));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let t = self.value(*p);
                let chunk = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut oshape = base;
        oshape[axis] = total;
        let value = Tensor::new(oshape, out)?;
        Ok(self.push(value, Op::Concat { parts: parts.to_vec(), axis }, parts))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(a), &[a]))
    }

    /// Swap the last two axes.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let r = self.shape(a).len();
        if r < 2 {
            return Err(Error::invalid("transpose: rank < 2"));
        }
        let mut perm: Vec<usize> = (0..r).collect();
        perm.swap(r - 1, r - 2);
        self.permute(a, &perm)
    }

    /// General axis permutation: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len() || perm.iter().any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::invalid(format!("permute: {perm:?} is not a permutation of rank {}", shape.len())));
        }
        let data = permute_data(self.value(a).data(), &shape, perm);
        let oshape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let value = Tensor::new(oshape, data)?;
        Ok(self.push(value, Op::Permute { a, perm: perm.to_vec() }, &[a]))
    }

    /// Rows of a 2-D `table` selected by index (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, rows: &[usize]) -> Result<Var> {
        let shape = self.shape(table).to_vec();
        if shape.len() != 2 {
            return Err(Error::invalid(format!("gather_rows: table must be 2-D, got {shape:?}")));
        }
        if rows.is_empty() {
            return Err(Error::invalid("gather_rows: empty index list"));
        }
        let d = shape[1];
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            if r >= shape[0] {
                return Err(Error::invalid(format!("gather_rows: row {r} out of {} rows", shape[0])));
            }
            out.extend_from_slice(&src[r * d..(r + 1) * d]);
        }
        let value = Tensor::new(vec![rows.len(), d], out)?;
        Ok(self.push(value, Op::GatherRows { table, rows: rows.to_vec() }, &[table]))
    }

    // ── Reductions ──────────────────────────────────────────────────

    /// Mean squared error between two same-shaped tensors.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::shape("mse", x.shape(), y.shape()));
        }
        let n = x.numel() as f64;
        let s: f64 = x.data().iter().zip(y.data()).map(|(p, q)| (p - q) * (p - q)).sum();
        Ok(self.push(Tensor::scalar(s / n), Op::Mse { a, b }, &[a, b]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    // ── Helpers ─────────────────────────────────────────────────────

    fn order_for_broadcast(&self, op: &'static str, a: Var, b: Var) -> Result<(Var, Var)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if is_suffix(sa, sb) {
            Ok((a, b))
        } else if is_suffix(sb, sa) {
            Ok((b, a))
        } else {
            Err(Error::shape(op, sa, sb))
        }
    }

    fn broadcast_binary(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (x, y) = (self.value(a), self.value(b));
        let yd = y.data();
        let m = yd.len();
        let data = x
            .data()
            .chunks(m)
            .flat_map(|chunk| chunk.iter().zip(yd).map(|(&p, &q)| f(p, q)))
            .collect();
        Tensor::new(x.shape().to_vec(), data).expect("broadcast keeps the larger shape")
    }

    fn map_unary(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let x = self.value(a);
        Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect())
            .expect("unary keeps shape")
    }

    // ── Backward ────────────────────────────────────────────────────

    /// Reverse pass from a scalar `loss`. Consumes the graph's tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::Backward("graph already consumed by a previous backward".into()));
        }
        if loss.0 >= self.nodes.len() {
            return Err(Error::Backward("loss does not belong to a recorded graph".into()));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::Backward(format!(
                "loss must be a scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.consumed = true;
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients::default());
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.is_leaf {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(idx, &g, &mut grads);
        }

        let mut map = BTreeMap::new();
        for (idx, g) in grads.into_iter().enumerate() {
            let node = &self.nodes[idx];
            if let (true, true, Some(g)) = (node.is_leaf, node.requires_grad, g) {
                map.insert(Var(idx), Tensor::new(node.value.shape().to_vec(), g)?);
            }
        }
        // Values are no longer needed once the tape is replayed.
        for node in &mut self.nodes {
            node.op = Op::None;
        }
        Ok(Gradients { map })
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = node.value.data();
        match &node.op {
            Op::None => {}
            Op::MatMul { a, b } => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (batch, m, k, n) = matmul_dims(sa, sb).expect("validated in forward");
                let shared = sb.len() == 2;
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if self.requires_grad(*a) {
                    let mut da = vec![0.0; av.len()];
                    for i in 0..batch {
                        let boff = if shared { 0 } else { i * k * n };
                        gemm_nt(
                            &g[i * m * n..(i + 1) * m * n],
                            &bv[boff..boff + k * n],
                            &mut da[i * m * k..(i + 1) * m * k],
                            m,
                            n,
                            k,
                        );
                    }
                    accumulate(grads, *a, da);
                }
                if self.requires_grad(*b) {
                    let mut db = vec![0.0; bv.len()];
                    for i in 0..batch {
                        let boff = if shared { 0 } else { i * k * n };
                        gemm_tn(
                            &av[i * m * k..(i + 1) * m * k],
                            &g[i * m * n..(i + 1) * m * n],
                            &mut db[boff..boff + k * n],
                            m,
                            k,
                            n,
                        );
                    }
                    accumulate(grads, *b, db);
                }
            }
            Op::Add { a, b } => {
                if self.requires_grad(*a) {
                    accumulate(grads, *a, g.to_vec());
                }
                if self.requires_grad(*b) {
                    accumulate(grads, *b, reduce_broadcast(g, self.value(*b).numel()));
                }
            }
            Op::Sub { a, b } => {
                if self.requires_grad(*a) {
                    accumulate(grads, *a, g.to_vec());
                }
                if self.requires_grad(*b) {
                    let mut db = reduce_broadcast(g, self.value(*b).numel());
                    db.iter_mut().for_each(|v| *v = -*v);
                    accumulate(grads, *b, db);
                }
            }
            Op::Mul { a, b } => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let m = bv.len();
                if self.requires_grad(*a) {
                    let da = g.iter().enumerate().map(|(i, gv)| gv * bv[i % m]).collect();
                    accumulate(grads, *a, da);
                }
                if self.requires_grad(*b) {
                    let mut db = vec![0.0; m];
                    for (i, (gv, x)) in g.iter().zip(av).enumerate() {
                        db[i % m] += gv * x;
                    }
                    accumulate(grads, *b, db);
                }
            }
            Op::Scale { a, factor } => {
                accumulate(grads, *a, g.iter().map(|v| v * factor).collect());
            }
            Op::Gelu(a) => {
                let x = self.value(*a).data();
                let da = g
                    .iter()
                    .zip(x)
                    .map(|(gv, &x)| {
                        let u = GELU_C * (x + 0.044715 * x * x * x);
                        let t = u.tanh();
                        let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                        gv * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)
                    })
                    .collect();
                accumulate(grads, *a, da);
            }
            Op::Relu(a) => {
                let x = self.value(*a).data();
                let da = g.iter().zip(x).map(|(gv, &x)| if x > 0.0 { *gv } else { 0.0 }).collect();
                accumulate(grads, *a, da);
            }
            Op::Sigmoid(a) => {
                let da = g.iter().zip(out).map(|(gv, y)| gv * y * (1.0 - y)).collect();
                accumulate(grads, *a, da);
            }
            Op::Tanh(a) => {
                let da = g.iter().zip(out).map(|(gv, y)| gv * (1.0 - y * y)).collect();
                accumulate(grads, *a, da);
            }
            Op::Softmax(a) => {
                let d = node.value.last_dim();
                let mut da = vec![0.0; out.len()];
                for ((dr, yr), gr) in da.chunks_mut(d).zip(out.chunks(d)).zip(g.chunks(d)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    for j in 0..d {
                        dr[j] = yr[j] * (gr[j] - dot);
                    }
                }
                accumulate(grads, *a, da);
            }
            Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                let d = node.value.last_dim();
                let gam = self.value(*gamma).data();
                if self.requires_grad(*x) {
                    let mut dx = vec![0.0; g.len()];
                    for (r, rs) in rstd.iter().enumerate() {
                        let gr = &g[r * d..(r + 1) * d];
                        let hr = &xhat[r * d..(r + 1) * d];
                        let mut mean_dh = 0.0;
                        let mut mean_dh_h = 0.0;
                        for j in 0..d {
                            let dh = gr[j] * gam[j];
                            mean_dh += dh;
                            mean_dh_h += dh * hr[j];
                        }
                        mean_dh /= d as f64;
                        mean_dh_h /= d as f64;
                        for j in 0..d {
                            let dh = gr[j] * gam[j];
                            dx[r * d + j] = rs * (dh - mean_dh - hr[j] * mean_dh_h);
                        }
                    }
                    accumulate(grads, *x, dx);
                }
                if self.requires_grad(*gamma) {
                    let mut dg = vec![0.0; d];
                    for (i, (gv, h)) in g.iter().zip(xhat).enumerate() {
                        dg[i % d] += gv * h;
                    }
                    accumulate(grads, *gamma, dg);
                }
                if self.requires_grad(*beta) {
                    accumulate(grads, *beta, reduce_broadcast(g, d));
                }
            }
            Op::Dropout { a, mask } => {
                accumulate(grads, *a, g.iter().zip(mask).map(|(gv, m)| gv * m).collect());
            }
            Op::Slice { a, axis, start } => {
                let shape = self.shape(*a);
                let len = node.value.shape()[*axis];
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[*axis + 1..].iter().product();
                let mut da = vec![0.0; self.value(*a).numel()];
                for o in 0..outer {
                    let dst = (o * shape[*axis] + start) * inner;
                    let src = o * len * inner;
                    da[dst..dst + len * inner].copy_from_slice(&g[src..src + len * inner]);
                }
                accumulate(grads, *a, da);
            }
            Op::Concat { parts, axis } => {
                let oshape = node.value.shape();
                let outer: usize = oshape[..*axis].iter().product();
                let inner: usize = oshape[*axis + 1..].iter().product();
                let total = oshape[*axis] * inner;
                let mut offset = 0;
                for p in parts {
                    let chunk = self.shape(*p)[*axis] * inner;
                    if self.requires_grad(*p) {
                        let mut dp = Vec::with_capacity(outer * chunk);
                        for o in 0..outer {
                            let s = o * total + offset;
                            dp.extend_from_slice(&g[s..s + chunk]);
                        }
                        accumulate(grads, *p, dp);
                    }
                    offset += chunk;
                }
            }
            Op::Reshape(a) => accumulate(grads, *a, g.to_vec()),
            Op::Permute { a, perm } => {
                let mut inverse = vec![0; perm.len()];
                for (i, &p) in perm.iter().enumerate() {
                    inverse[p] = i;
                }
                accumulate(grads, *a, permute_data(g, node.value.shape(), &inverse));
            }
            Op::GatherRows { table, rows } => {
                let d = self.shape(*table)[1];
                let mut dt = vec![0.0; self.value(*table).numel()];
                for (i, &r) in rows.iter().enumerate() {
                    for j in 0..d {
                        dt[r * d + j] += g[i * d + j];
                    }
                }
                accumulate(grads, *table, dt);
            }
            Op::Mse { a, b } => {
                let (x, y) = (self.value(*a).data(), self.value(*b).data());
                let scale = 2.0 * g[0] / x.len() as f64;
                if self.requires_grad(*a) {
                    accumulate(grads, *a, x.iter().zip(y).map(|(p, q)| scale * (p - q)).collect());
                }
                if self.requires_grad(*b) {
                    accumulate(grads, *b, x.iter().zip(y).map(|(p, q)| scale * (q - p)).collect());
                }
            }
            Op::Sum(a) => {
                accumulate(grads, *a, vec![g[0]; self.value(*a).numel()]);
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], var: Var, g: Vec<f64>) {
    match &mut grads[var.0] {
        Some(existing) => existing.iter_mut().zip(g).for_each(|(e, v)| *e += v),
        slot @ None => *slot = Some(g),
    }
}

/// Sum a broadcast gradient back down to the `m` trailing elements.
fn reduce_broadcast(g: &[f64], m: usize) -> Vec<f64> {
    if g.len() == m {
        return g.to_vec();
    }
    let mut out = vec![0.0; m];
    for chunk in g.chunks(m) {
        out.iter_mut().zip(chunk).for_each(|(o, v)| *o += v);
    }
    out
}

fn is_suffix(long: &[usize], short: &[usize]) -> bool {
    short.len() <= long.len() && long[long.len() - short.len()..] == *short
}

fn matmul_dims(sa: &[usize], sb: &[usize]) -> Result<(usize, usize, usize, usize)> {
    if sa.len() < 2 || sb.len() < 2 {
        return Err(Error::shape("matmul", sa, sb));
    }
    let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
    let (kb, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
    let batch: usize = sa[..sa.len() - 2].iter().product();
    let leading_ok = sb.len() == 2 || sb[..sb.len() - 2] == sa[..sa.len() - 2];
    if k != kb || !leading_ok {
        return Err(Error::shape("matmul", sa, sb));
    }
    Ok((batch, m, k, n))
}

fn permute_data(src: &[f64], shape: &[usize], perm: &[usize]) -> Vec<f64> {
    let rank = shape.len();
    let mut in_strides = vec![1; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let oshape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(src.len());
    let mut idx = vec![0usize; rank];
    let inner = oshape[rank - 1];
    let inner_stride = strides[rank - 1];
    loop {
        let base: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        for j in 0..inner {
            out.push(src[base + j * inner_stride]);
        }
        // advance all but the last axis
        let mut ax = rank - 1;
        loop {
            if ax == 0 {
                return out;
            }
            ax -= 1;
            idx[ax] += 1;
            if idx[ax] < oshape[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
}
