//! Reverse-mode differentiation over an explicit record of primitive calls.
//!
//! Every primitive appends one node holding its output value. Nodes are
//! stored in execution order, which is already a topological order, so the
//! adjoint pass is a single reverse sweep.

use std::str::FromStr;
use std::sync::Arc;

use super::adjacency::Adjacency;
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How the right operand of a binary elementwise op lines up with the left.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// right is one row, repeated down the rows of left
    Row,
    /// right is one column, repeated across the columns of left
    Col,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Binary(Binary, Var, Var, Broadcast),
    Affine { x: Var, scale: f64 },
    Concat(Vec<Var>),
    Sigmoid(Var),
    Tanh(Var),
    LeakyRelu(Var, f64),
    Exp(Var),
    Log(Var, f64),
    RowSoftmax(Var),
    SumAll(Var),
    MeanAll(Var),
    RowSum(Var),
    GatherRows(Var, Arc<[usize]>),
    EdgeDot(Var, Arc<Adjacency>),
    SegmentSoftmax(Var, Arc<Adjacency>),
    SegmentAggregate(Var, Var, Arc<Adjacency>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Names accepted by [`Tape::apply`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Primitive {
    MatMul,
    Transpose,
    Add,
    Sub,
    Mul,
    Div,
    Affine,
    Concat,
    Sigmoid,
    Tanh,
    LeakyRelu,
    Exp,
    Log,
    RowSoftmax,
    Sum,
    Mean,
    RowSum,
    GatherRows,
    EdgeDot,
    SegmentSoftmax,
    SegmentAggregate,
}

impl FromStr for Primitive {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "matmul" => Primitive::MatMul,
            "transpose" => Primitive::Transpose,
            "add" => Primitive::Add,
            "sub" => Primitive::Sub,
            "mul" => Primitive::Mul,
            "div" => Primitive::Div,
            "affine" => Primitive::Affine,
            "concat" => Primitive::Concat,
            "sigmoid" => Primitive::Sigmoid,
            "tanh" => Primitive::Tanh,
            "leaky_relu" => Primitive::LeakyRelu,
            "exp" => Primitive::Exp,
            "log" => Primitive::Log,
            "row_softmax" => Primitive::RowSoftmax,
            "sum" => Primitive::Sum,
            "mean" => Primitive::Mean,
            "row_sum" => Primitive::RowSum,
            "gather_rows" => Primitive::GatherRows,
            "edge_dot" => Primitive::EdgeDot,
            "segment_softmax" => Primitive::SegmentSoftmax,
            "segment_aggregate" => Primitive::SegmentAggregate,
            other => return Err(Error::UnknownPrimitive(other.to_string())),
        })
    }
}

/// Optional attributes for [`Tape::apply`].
#[derive(Clone, Debug, Default)]
pub struct Attrs {
    pub slope: Option<f64>,
    pub floor: Option<f64>,
    pub scale: Option<f64>,
    pub shift: Option<f64>,
    pub rows: Option<Vec<usize>>,
    pub adjacency: Option<Arc<Adjacency>>,
}

pub const DEFAULT_LOG_FLOOR: f64 = 1e-12;

/// The computation record.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    backward_done: bool,
}

fn stable_sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds an input tensor. Only leaves created with `requires_grad` receive
    /// gradients.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op: if requires_grad { op } else { Op::Leaf }, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::ShapeMismatch { op, left: self.shape(a).to_vec(), right: self.shape(b).to_vec() }
    }

    fn require_matrix(&self, op: &'static str, v: Var) -> Result<()> {
        if self.shape(v).len() != 2 {
            return Err(Error::invalid(op, format!("expects a matrix, got shape {:?}", self.shape(v))));
        }
        Ok(())
    }

    /// Generic entry point keyed by primitive name.
    pub fn apply(&mut self, kind: &str, inputs: &[Var], attrs: &Attrs) -> Result<Var> {
        let prim: Primitive = kind.parse()?;
        let arity = |n: usize| -> Result<()> {
            if inputs.len() != n {
                return Err(Error::invalid("apply", format!("{kind} takes {n} inputs, got {}", inputs.len())));
            }
            Ok(())
        };
        let adjacency =
            || attrs.adjacency.clone().ok_or_else(|| Error::invalid("apply", format!("{kind} needs an adjacency")));
        match prim {
            Primitive::Concat => {
                if inputs.is_empty() {
                    return Err(Error::invalid("concat", "no inputs"));
                }
                self.concat(inputs)
            }
            Primitive::MatMul => {
                arity(2)?;
                self.matmul(inputs[0], inputs[1])
            }
            Primitive::Add | Primitive::Sub | Primitive::Mul | Primitive::Div => {
                arity(2)?;
                let (a, b) = (inputs[0], inputs[1]);
                match prim {
                    Primitive::Add => self.add(a, b),
                    Primitive::Sub => self.sub(a, b),
                    Primitive::Mul => self.mul(a, b),
                    _ => self.div(a, b),
                }
            }
            Primitive::SegmentAggregate => {
                arity(2)?;
                self.segment_aggregate(inputs[0], inputs[1], adjacency()?)
            }
            _ => {
                arity(1)?;
                let x = inputs[0];
                match prim {
                    Primitive::Transpose => self.transpose(x),
                    Primitive::Affine => Ok(self.affine(x, attrs.scale.unwrap_or(1.0), attrs.shift.unwrap_or(0.0))),
                    Primitive::Sigmoid => Ok(self.sigmoid(x)),
                    Primitive::Tanh => Ok(self.tanh(x)),
                    Primitive::LeakyRelu => self.leaky_relu(x, attrs.slope.unwrap_or(0.2)),
                    Primitive::Exp => Ok(self.exp(x)),
                    Primitive::Log => self.log(x, attrs.floor.unwrap_or(DEFAULT_LOG_FLOOR)),
                    Primitive::RowSoftmax => Ok(self.row_softmax(x)),
                    Primitive::Sum => Ok(self.sum(x)),
                    Primitive::Mean => Ok(self.mean(x)),
                    Primitive::RowSum => Ok(self.row_sum(x)),
                    Primitive::GatherRows => {
                        let rows =
                            attrs.rows.clone().ok_or_else(|| Error::invalid("apply", "gather_rows needs rows"))?;
                        self.gather_rows(x, &rows)
                    }
                    Primitive::EdgeDot => self.edge_dot(x, adjacency()?),
                    Primitive::SegmentSoftmax => self.segment_softmax(x, adjacency()?),
                    _ => unreachable!(),
                }
            }
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.require_matrix("matmul", a)?;
        self.require_matrix("matmul", b)?;
        let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
        let (k2, n) = (self.shape(b)[0], self.shape(b)[1]);
        if k != k2 {
            return Err(self.mismatch("matmul", a, b));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, &mut out, false);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        self.require_matrix("transpose", x)?;
        let t = self.value(x);
        let (m, n) = (t.rows(), t.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = t.get(i, j);
            }
        }
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::Transpose(x), &[x]))
    }

    fn broadcast_of(&self, op: &'static str, a: Var, b: Var) -> Result<Broadcast> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            return Ok(Broadcast::Same);
        }
        let ta = self.value(a);
        let tb = self.value(b);
        if sa.len() == 2 {
            let row_like = (sb.len() == 1 || tb.rows() == 1) && tb.cols() == ta.cols();
            if row_like {
                return Ok(Broadcast::Row);
            }
            if sb.len() == 2 && sb[1] == 1 && sb[0] == sa[0] {
                return Ok(Broadcast::Col);
            }
        }
        Err(self.mismatch(op, a, b))
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let name = match kind {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
            Binary::Div => "div",
        };
        let bc = self.broadcast_of(name, a, b)?;
        let ta = self.value(a);
        let tb = self.value(b).data();
        let cols = ta.cols();
        let f = |x: f64, y: f64| match kind {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
            Binary::Div => x / y,
        };
        let out: Vec<f64> = ta
            .data()
            .iter()
            .enumerate()
            .map(|(idx, &x)| {
                let y = match bc {
                    Broadcast::Same => tb[idx],
                    Broadcast::Row => tb[idx % cols],
                    Broadcast::Col => tb[idx / cols],
                };
                f(x, y)
            })
            .collect();
        let value = ta.with_data(out);
        Ok(self.push(value, Op::Binary(kind, a, b, bc), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Div, a, b)
    }

    /// `scale * x + shift`
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(x).map(|v| scale * v + shift);
        self.push(value, Op::Affine { x, scale }, &[x])
    }

    pub fn scale(&mut self, x: Var, scale: f64) -> Var {
        self.affine(x, scale, 0.0)
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts[0];
        let rank = self.shape(first).len();
        let rows = self.value(first).rows();
        for &p in &parts[1..] {
            if self.shape(p).len() != rank || self.value(p).rows() != rows {
                return Err(self.mismatch("concat", first, p));
            }
        }
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let shape = if rank == 1 { vec![total] } else { vec![rows, total] };
        Ok(self.push(Tensor::new(shape, out)?, Op::Concat(parts.to_vec()), parts))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(stable_sigmoid);
        self.push(value, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::tanh);
        self.push(value, Op::Tanh(x), &[x])
    }

    /// Which side of its kink every recorded `leaky_relu` input and every
    /// `log` floor sits on. Two evaluations with equal signatures lie on one
    /// smooth piece. Ops on untracked inputs are folded into leaves and do
    /// not appear.
    pub fn branch_signature(&self) -> Vec<bool> {
        let mut sig = Vec::new();
        for node in &self.nodes {
            match node.op {
                Op::LeakyRelu(x, _) => sig.extend(self.value(x).data().iter().map(|&v| v > 0.0)),
                Op::Log(x, floor) => sig.extend(self.value(x).data().iter().map(|&v| v > floor)),
                _ => {}
            }
        }
        sig
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        if !(slope > 0.0) {
            return Err(Error::invalid("leaky_relu", format!("slope must be positive, got {slope}")));
        }
        let value = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        Ok(self.push(value, Op::LeakyRelu(x, slope), &[x]))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::exp);
        self.push(value, Op::Exp(x), &[x])
    }

    /// `ln(max(x, floor))`
    pub fn log(&mut self, x: Var, floor: f64) -> Result<Var> {
        if !(floor > 0.0) {
            return Err(Error::invalid("log", format!("floor must be positive, got {floor}")));
        }
        let value = self.value(x).map(|v| v.max(floor).ln());
        Ok(self.push(value, Op::Log(x, floor), &[x]))
    }

    /// Softmax along the last axis.
    pub fn row_softmax(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let cols = t.cols();
        let mut out = t.data().to_vec();
        for row in out.chunks_mut(cols) {
            softmax_in_place(row);
        }
        let value = t.with_data(out);
        self.push(value, Op::RowSoftmax(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(s), Op::MeanAll(x), &[x])
    }

    /// Sum along the last axis; an `m×n` matrix becomes `m×1`.
    pub fn row_sum(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let sums: Vec<f64> = t.data().chunks(t.cols()).map(|r| r.iter().sum()).collect();
        let value = Tensor::new(vec![t.rows(), 1], sums).expect("non-empty rows");
        self.push(value, Op::RowSum(x), &[x])
    }

    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        self.require_matrix("gather_rows", x)?;
        let t = self.value(x);
        if rows.is_empty() {
            return Err(Error::invalid("gather_rows", "empty row selection"));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= t.rows()) {
            return Err(Error::invalid("gather_rows", format!("row {bad} out of range for {} rows", t.rows())));
        }
        let mut out = Vec::with_capacity(rows.len() * t.cols());
        for &r in rows {
            out.extend_from_slice(t.row(r));
        }
        let value = Tensor::matrix(rows.len(), t.cols(), out)?;
        Ok(self.push(value, Op::GatherRows(x, rows.into()), &[x]))
    }

    fn check_graph(&self, op: &'static str, x: Var, adj: &Adjacency) -> Result<()> {
        self.require_matrix(op, x)?;
        let rows = self.value(x).rows();
        if adj.rows() != rows || adj.cols() != rows {
            return Err(Error::ShapeMismatch { op, left: self.shape(x).to_vec(), right: vec![adj.rows(), adj.cols()] });
        }
        if adj.edge_count() == 0 {
            return Err(Error::invalid(op, "adjacency has no edges"));
        }
        Ok(())
    }

    fn check_edges(&self, op: &'static str, e: Var, adj: &Adjacency) -> Result<()> {
        let shape = self.shape(e);
        if shape.len() != 1 || shape[0] != adj.edge_count() {
            return Err(Error::ShapeMismatch { op, left: shape.to_vec(), right: vec![adj.edge_count()] });
        }
        Ok(())
    }

    /// Per-edge score `dot(x_i, x_j)` for every edge `i -> j`.
    pub fn edge_dot(&mut self, x: Var, adj: Arc<Adjacency>) -> Result<Var> {
        self.check_graph("edge_dot", x, &adj)?;
        let t = self.value(x);
        let mut out = Vec::with_capacity(adj.edge_count());
        for i in 0..adj.rows() {
            let xi = t.row(i);
            for &j in adj.neighbors(i) {
                out.push(xi.iter().zip(t.row(j)).map(|(a, b)| a * b).sum());
            }
        }
        Ok(self.push(Tensor::vector(out), Op::EdgeDot(x, adj), &[x]))
    }

    /// Softmax of edge scores within each row's neighborhood.
    pub fn segment_softmax(&mut self, scores: Var, adj: Arc<Adjacency>) -> Result<Var> {
        self.check_edges("segment_softmax", scores, &adj)?;
        let mut out = self.value(scores).data().to_vec();
        for i in 0..adj.rows() {
            let range = adj.row_range(i);
            if !range.is_empty() {
                softmax_in_place(&mut out[range]);
            }
        }
        Ok(self.push(Tensor::vector(out), Op::SegmentSoftmax(scores, adj), &[scores]))
    }

    /// `out_i = Σ_e w_e · values_{target(e)}` over the edges of row `i`.
    /// Rows without edges produce zeros.
    pub fn segment_aggregate(&mut self, weights: Var, values: Var, adj: Arc<Adjacency>) -> Result<Var> {
        self.check_edges("segment_aggregate", weights, &adj)?;
        self.require_matrix("segment_aggregate", values)?;
        let v = self.value(values);
        if v.rows() != adj.cols() {
            return Err(self.mismatch("segment_aggregate", weights, values));
        }
        let w = self.value(weights).data();
        let cols = v.cols();
        let mut out = vec![0.0; adj.rows() * cols];
        for i in 0..adj.rows() {
            let dst = &mut out[i * cols..(i + 1) * cols];
            for e in adj.row_range(i) {
                let we = w[e];
                for (o, x) in dst.iter_mut().zip(v.row(adj.target(e))) {
                    *o += we * x;
                }
            }
        }
        let value = Tensor::matrix(adj.rows(), cols, out)?;
        Ok(self.push(value, Op::SegmentAggregate(weights, values, adj), &[weights, values]))
    }

    /// Clears gradients so the record can be replayed.
    pub fn reset(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    /// Fills gradient slots with `∂output/∂node` for every node that
    /// requires a gradient.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardAlreadyRun);
        }
        let out_shape = self.shape(output);
        if out_shape.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarBackward(out_shape.to_vec()));
        }
        self.backward_done = true;
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[output.0].requires_grad {
            return Ok(());
        }
        self.grads[output.0] = Some(self.nodes[output.0].value.with_data(vec![1.0]));

        for idx in (0..=output.0).rev() {
            if !self.nodes[idx].requires_grad || matches!(self.nodes[idx].op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.grads[idx].take() else { continue };
            self.propagate(idx, &g)?;
            self.grads[idx] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&mut self, idx: usize, g: &Tensor) -> Result<()> {
        let op = self.nodes[idx].op.clone();
        let out = &self.nodes[idx].value;
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.value(a).rows(), self.value(a).cols());
                let n = self.value(b).cols();
                if self.requires_grad(a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, self.value(b).data(), true, &mut da, false);
                    let t = Tensor::matrix(m, k, da)?;
                    self.accumulate(a, t);
                }
                if self.requires_grad(b) {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, self.value(a).data(), true, g.data(), false, &mut db, false);
                    let t = Tensor::matrix(k, n, db)?;
                    self.accumulate(b, t);
                }
            }
            Op::Transpose(x) => {
                let (m, n) = (g.rows(), g.cols());
                let mut dx = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        dx[j * m + i] = g.get(i, j);
                    }
                }
                let t = Tensor::matrix(n, m, dx)?;
                self.accumulate(x, t);
            }
            Op::Binary(kind, a, b, bc) => self.binary_backward(kind, a, b, bc, g)?,
            Op::Affine { x, scale } => {
                let dx = g.map(|v| v * scale);
                self.accumulate(x, dx);
            }
            Op::Concat(parts) => {
                let rows = g.rows();
                let total = g.cols();
                let mut offset = 0;
                for p in parts {
                    let w = self.value(p).cols();
                    let mut d = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        d.extend_from_slice(&g.data()[r * total + offset..r * total + offset + w]);
                    }
                    offset += w;
                    let t = self.value(p).with_data(d);
                    self.accumulate(p, t);
                }
            }
            Op::Sigmoid(x) => {
                let d = zip_map(g, out, |gv, s| gv * s * (1.0 - s));
                self.accumulate(x, d);
            }
            Op::Tanh(x) => {
                let d = zip_map(g, out, |gv, t| gv * (1.0 - t * t));
                self.accumulate(x, d);
            }
            Op::LeakyRelu(x, slope) => {
                let d = zip_map(g, self.value(x), |gv, xv| if xv > 0.0 { gv } else { gv * slope });
                self.accumulate(x, d);
            }
            Op::Exp(x) => {
                let d = zip_map(g, out, |gv, e| gv * e);
                self.accumulate(x, d);
            }
            Op::Log(x, floor) => {
                let d = zip_map(g, self.value(x), |gv, xv| if xv > floor { gv / xv } else { 0.0 });
                self.accumulate(x, d);
            }
            Op::RowSoftmax(x) => {
                let cols = out.cols();
                let mut d = vec![0.0; out.len()];
                for ((drow, srow), grow) in d.chunks_mut(cols).zip(out.data().chunks(cols)).zip(g.data().chunks(cols)) {
                    let dot: f64 = srow.iter().zip(grow).map(|(s, gv)| s * gv).sum();
                    for ((dv, s), gv) in drow.iter_mut().zip(srow).zip(grow) {
                        *dv = s * (gv - dot);
                    }
                }
                let t = out.with_data(d);
                self.accumulate(x, t);
            }
            Op::SumAll(x) => {
                let t = Tensor::filled(self.shape(x), g.item());
                self.accumulate(x, t);
            }
            Op::MeanAll(x) => {
                let n = self.value(x).len() as f64;
                let t = Tensor::filled(self.shape(x), g.item() / n);
                self.accumulate(x, t);
            }
            Op::RowSum(x) => {
                let cols = self.value(x).cols();
                let d: Vec<f64> = g.data().iter().flat_map(|&gv| std::iter::repeat(gv).take(cols)).collect();
                let t = self.value(x).with_data(d);
                self.accumulate(x, t);
            }
            Op::GatherRows(x, rows) => {
                let cols = g.cols();
                let mut d = Tensor::zeros(self.shape(x));
                for (k, &r) in rows.iter().enumerate() {
                    for c in 0..cols {
                        d.data_mut()[r * cols + c] += g.get(k, c);
                    }
                }
                self.accumulate(x, d);
            }
            Op::EdgeDot(x, adj) => {
                let t = self.value(x);
                let cols = t.cols();
                let mut d = vec![0.0; t.len()];
                for i in 0..adj.rows() {
                    for e in adj.row_range(i) {
                        let j = adj.target(e);
                        let ge = g.data()[e];
                        for c in 0..cols {
                            d[i * cols + c] += ge * t.get(j, c);
                            d[j * cols + c] += ge * t.get(i, c);
                        }
                    }
                }
                let dt = t.with_data(d);
                self.accumulate(x, dt);
            }
            Op::SegmentSoftmax(scores, adj) => {
                let a = out.data();
                let mut d = vec![0.0; a.len()];
                for i in 0..adj.rows() {
                    let r = adj.row_range(i);
                    let dot: f64 = r.clone().map(|e| a[e] * g.data()[e]).sum();
                    for e in r {
                        d[e] = a[e] * (g.data()[e] - dot);
                    }
                }
                self.accumulate(scores, Tensor::vector(d));
            }
            Op::SegmentAggregate(weights, values, adj) => {
                let v = self.value(values);
                let cols = v.cols();
                let dw = self.requires_grad(weights).then(|| {
                    let mut dw = vec![0.0; adj.edge_count()];
                    for i in 0..adj.rows() {
                        let gi = g.row(i);
                        for e in adj.row_range(i) {
                            dw[e] = gi.iter().zip(v.row(adj.target(e))).map(|(a, b)| a * b).sum();
                        }
                    }
                    Tensor::vector(dw)
                });
                let dv = self.requires_grad(values).then(|| {
                    let w = self.value(weights).data();
                    let mut dv = vec![0.0; v.len()];
                    for i in 0..adj.rows() {
                        let gi = g.row(i);
                        for e in adj.row_range(i) {
                            let j = adj.target(e);
                            for (dst, gv) in dv[j * cols..(j + 1) * cols].iter_mut().zip(gi) {
                                *dst += w[e] * gv;
                            }
                        }
                    }
                    v.with_data(dv)
                });
                if let Some(dw) = dw {
                    self.accumulate(weights, dw);
                }
                if let Some(dv) = dv {
                    self.accumulate(values, dv);
                }
            }
        }
        Ok(())
    }

    fn binary_backward(&mut self, kind: Binary, a: Var, b: Var, bc: Broadcast, g: &Tensor) -> Result<()> {
        let ta = self.value(a);
        let tb = self.value(b);
        let cols = ta.cols();
        let b_at = |idx: usize| match bc {
            Broadcast::Same => idx,
            Broadcast::Row => idx % cols,
            Broadcast::Col => idx / cols,
        };
        let need_a = self.requires_grad(a);
        let need_b = self.requires_grad(b);
        let mut da = vec![0.0; if need_a { ta.len() } else { 0 }];
        let mut db = vec![0.0; if need_b { tb.len() } else { 0 }];
        for (idx, &gv) in g.data().iter().enumerate() {
            let x = ta.data()[idx];
            let bi = b_at(idx);
            let y = tb.data()[bi];
            let (ga, gb) = match kind {
                Binary::Add => (gv, gv),
                Binary::Sub => (gv, -gv),
                Binary::Mul => (gv * y, gv * x),
                Binary::Div => (gv / y, -gv * x / (y * y)),
            };
            if need_a {
                da[idx] = ga;
            }
            if need_b {
                db[bi] += gb;
            }
        }
        let da = need_a.then(|| ta.with_data(da));
        let db = need_b.then(|| tb.with_data(db));
        if let Some(t) = da {
            self.accumulate(a, t);
        }
        if let Some(t) = db {
            self.accumulate(b, t);
        }
        Ok(())
    }
}

fn zip_map(g: &Tensor, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    g.with_data(g.data().iter().zip(other.data()).map(|(&a, &b)| f(a, b)).collect())
}
