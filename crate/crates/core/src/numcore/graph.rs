use std::fmt;

use serde::{Deserialize, Serialize};

use super::{NumError, Tensor};

/// Handle to a node of one [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named set of parameter tensors that share one gradient-scaling slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub name: String,
    pub group_index: usize,
    pub tensors: Vec<Tensor>,
}

/// Per-group gradients, aligned with the graph's [`ParamGroup`]s.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub groups: Vec<Vec<Tensor>>,
}

impl Gradients {
    pub fn zeros_like(groups: &[ParamGroup]) -> Self {
        Gradients {
            groups: groups
                .iter()
                .map(|g| g.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect())
                .collect(),
        }
    }

    pub fn group(&self, index: usize) -> &[Tensor] {
        &self.groups[index]
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    /// All gradient values of one group, concatenated in slot order.
    pub fn flat_group(&self, index: usize) -> Vec<f64> {
        self.groups[index]
            .iter()
            .flat_map(|t| t.values().iter().copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.groups.iter().flatten().all(Tensor::is_finite)
    }

    /// Elementwise sum of two gradient sets with identical layout.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (mine, theirs) in self.groups.iter_mut().zip(&other.groups) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                for (x, y) in a.values_mut().iter_mut().zip(b.values()) {
                    *x += y;
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.groups.iter_mut().flatten() {
            for v in t.values_mut() {
                *v *= factor;
            }
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input(String),
    Param { group: usize, slot: usize },
    Const(Tensor),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Concat { parts: Vec<NodeId>, axis: usize },
    Slice { input: NodeId, axis: usize, start: usize, end: usize },
    Sigmoid(NodeId),
    Tanh(NodeId),
    Softmax(NodeId),
    LogSoftmax(NodeId),
    Log(NodeId),
    Mean(NodeId),
    Sum(NodeId),
    Scale(NodeId, f64),
    Reshape(NodeId, Vec<usize>),
    StopGradient(NodeId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Param { .. } => "param",
            Op::Const(_) => "const",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Softmax(_) => "softmax",
            Op::LogSoftmax(_) => "log_softmax",
            Op::Log(_) => "log",
            Op::Mean(_) => "mean",
            Op::Sum(_) => "sum",
            Op::Scale(..) => "scale",
            Op::Reshape(..) => "reshape",
            Op::StopGradient(_) => "stop_gradient",
        }
    }

    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Input(_) | Op::Param { .. } | Op::Const(_) => Vec::new(),
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Concat { parts, .. } => parts.clone(),
            Op::Slice { input, .. } => vec![*input],
            Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Softmax(a)
            | Op::LogSoftmax(a)
            | Op::Log(a)
            | Op::Mean(a)
            | Op::Sum(a)
            | Op::Scale(a, _)
            | Op::Reshape(a, _)
            | Op::StopGradient(a) => vec![*a],
        }
    }
}

/// Where an op failed, for error messages.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeLabel {
    pub id: usize,
    pub op: &'static str,
}

impl fmt::Display for NodeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {} ({})", self.id, self.op)
    }
}

/// A reverse-mode differentiation record.
///
/// Nodes are appended in construction order, which is a topological order
/// since every op can only reference nodes that already exist. Parameter
/// values live in the graph's [`ParamGroup`]s and are read at evaluation
/// time, so one graph can be evaluated repeatedly while training.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Op>,
    groups: Vec<ParamGroup>,
    cache: Vec<Option<Tensor>>,
    evaluated: Option<NodeId>,
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

    pub fn add_group(&mut self, name: impl Into<String>) -> usize {
        let group_index = self.groups.len();
        self.groups.push(ParamGroup {
            name: name.into(),
            group_index,
            tensors: Vec::new(),
        });
        group_index
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn groups_mut(&mut self) -> &mut [ParamGroup] {
        self.invalidate();
        &mut self.groups
    }

    /// Replace all parameter values; layouts must match.
    pub fn set_groups(&mut self, groups: Vec<ParamGroup>) -> Result<(), NumError> {
        if groups.len() != self.groups.len() {
            return Err(NumError::InvalidTensor(format!(
                "expected {} parameter groups, got {}",
                self.groups.len(),
                groups.len()
            )));
        }
        for (old, new) in self.groups.iter().zip(&groups) {
            let same = old.tensors.len() == new.tensors.len()
                && old
                    .tensors
                    .iter()
                    .zip(&new.tensors)
                    .all(|(a, b)| a.shape() == b.shape());
            if !same {
                return Err(NumError::InvalidTensor(format!(
                    "parameter layout mismatch in group '{}'",
                    old.name
                )));
            }
        }
        self.groups = groups;
        self.invalidate();
        Ok(())
    }

    fn push(&mut self, op: Op) -> NodeId {
        for input in op.inputs() {
            assert!(input.0 < self.nodes.len(), "node id from another graph");
        }
        self.nodes.push(op);
        self.cache.push(None);
        NodeId(self.nodes.len() - 1)
    }

    fn invalidate(&mut self) {
        self.evaluated = None;
    }

    pub fn param(&mut self, group: usize, value: Tensor) -> NodeId {
        let g = &mut self.groups[group];
        g.tensors.push(value);
        let slot = g.tensors.len() - 1;
        self.push(Op::Param { group, slot })
    }

    pub fn input(&mut self, name: impl Into<String>) -> NodeId {
        self.push(Op::Input(name.into()))
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Const(value))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b))
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> NodeId {
        assert!(!parts.is_empty(), "concat needs at least one input");
        self.push(Op::Concat {
            parts: parts.to_vec(),
            axis,
        })
    }

    pub fn slice(&mut self, input: NodeId, axis: usize, start: usize, end: usize) -> NodeId {
        self.push(Op::Slice {
            input,
            axis,
            start,
            end,
        })
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Tanh(a))
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Softmax(a))
    }

    pub fn log_softmax(&mut self, a: NodeId) -> NodeId {
        self.push(Op::LogSoftmax(a))
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Log(a))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Mean(a))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sum(a))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        self.push(Op::Scale(a, factor))
    }

    /// Same values, new shape with the same element count.
    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> NodeId {
        self.push(Op::Reshape(a, shape.to_vec()))
    }

    pub fn stop_gradient(&mut self, a: NodeId) -> NodeId {
        self.push(Op::StopGradient(a))
    }

    /// `a - b`, built from `add` and `scale`.
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let neg = self.scale(b, -1.0);
        self.add(a, neg)
    }

    fn label(&self, id: NodeId) -> NodeLabel {
        NodeLabel {
            id: id.0,
            op: self.nodes[id.0].name(),
        }
    }

    /// Cached forward value of a node from the last `forward_eval`.
    pub fn value(&self, id: NodeId) -> Option<&Tensor> {
        self.cache.get(id.0).and_then(Option::as_ref)
    }

    fn needed(&self, output: NodeId) -> Vec<bool> {
        let mut needed = vec![false; self.nodes.len()];
        needed[output.0] = true;
        for i in (0..=output.0).rev() {
            if needed[i] {
                for input in self.nodes[i].inputs() {
                    needed[input.0] = true;
                }
            }
        }
        needed
    }

    /// Evaluate `output` and every node it depends on, caching all values.
    pub fn forward_eval(
        &mut self,
        inputs: &[(&str, &Tensor)],
        output: NodeId,
    ) -> Result<Tensor, NumError> {
        assert!(output.0 < self.nodes.len(), "node id from another graph");
        self.evaluated = None;
        let needed = self.needed(output);
        for i in 0..=output.0 {
            if !needed[i] {
                self.cache[i] = None;
                continue;
            }
            let id = NodeId(i);
            let value = self.eval_node(id, inputs)?;
            if !value.is_finite() {
                return Err(NumError::NonFinite {
                    node: self.label(id),
                });
            }
            self.cache[i] = Some(value);
        }
        self.evaluated = Some(output);
        Ok(self.cache[output.0].clone().expect("output evaluated"))
    }

    fn cached(&self, id: NodeId) -> &Tensor {
        self.cache[id.0].as_ref().expect("inputs evaluated before use")
    }

    fn eval_node(&self, id: NodeId, inputs: &[(&str, &Tensor)]) -> Result<Tensor, NumError> {
        let mismatch = |detail: String| NumError::ShapeMismatch {
            node: self.label(id),
            detail,
        };
        let out = match &self.nodes[id.0] {
            Op::Input(name) => inputs
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| (*t).clone())
                .ok_or_else(|| NumError::MissingInput(name.clone()))?,
            Op::Param { group, slot } => self.groups[*group].tensors[*slot].clone(),
            Op::Const(t) => t.clone(),
            Op::MatMul(a, b) => matmul(self.cached(*a), self.cached(*b)).map_err(mismatch)?,
            Op::Add(a, b) => zip_same(self.cached(*a), self.cached(*b), |x, y| x + y)
                .map_err(mismatch)?,
            Op::Mul(a, b) => zip_same(self.cached(*a), self.cached(*b), |x, y| x * y)
                .map_err(mismatch)?,
            Op::Concat { parts, axis } => {
                let tensors: Vec<&Tensor> = parts.iter().map(|p| self.cached(*p)).collect();
                concat(&tensors, *axis).map_err(mismatch)?
            }
            Op::Slice {
                input,
                axis,
                start,
                end,
            } => slice(self.cached(*input), *axis, *start, *end).map_err(mismatch)?,
            Op::Sigmoid(a) => self.cached(*a).map(sigmoid),
            Op::Tanh(a) => self.cached(*a).map(f64::tanh),
            Op::Softmax(a) => softmax_rows(self.cached(*a)),
            Op::LogSoftmax(a) => log_softmax_rows(self.cached(*a)),
            Op::Log(a) => self.cached(*a).map(f64::ln),
            Op::Mean(a) => {
                let t = self.cached(*a);
                Tensor::scalar(t.values().iter().sum::<f64>() / t.len() as f64)
            }
            Op::Sum(a) => Tensor::scalar(self.cached(*a).values().iter().sum()),
            Op::Scale(a, c) => self.cached(*a).map(|v| v * c),
            Op::Reshape(a, shape) => {
                let t = self.cached(*a);
                Tensor::new(shape.clone(), t.values().to_vec())
                    .map_err(|_| mismatch(format!("cannot reshape {:?} to {shape:?}", t.shape())))?
            }
            Op::StopGradient(a) => self.cached(*a).clone(),
        };
        Ok(out)
    }

    /// Gradients of the scalar `output` with respect to every parameter.
    ///
    /// Parameters that do not reach `output` get exactly-zero gradients.
    pub fn backward(&self, output: NodeId) -> Result<Gradients, NumError> {
        match self.evaluated {
            None => return Err(NumError::BackwardBeforeForward),
            Some(done) => {
                if output.0 > done.0 || self.cache[output.0].is_none() {
                    return Err(NumError::BackwardBeforeForward);
                }
            }
        }
        let out = self.cached(output);
        if !out.is_scalar() {
            return Err(NumError::NonScalarOutput(out.shape().to_vec()));
        }
        let mut result = Gradients::zeros_like(&self.groups);
        let mut adj: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        adj[output.0] = Some(Tensor::filled(out.shape(), 1.0));

        for i in (0..=output.0).rev() {
            let Some(upstream) = adj[i].take() else {
                continue;
            };
            let op = &self.nodes[i];
            match op {
                Op::Input(_) | Op::Const(_) | Op::StopGradient(_) => {}
                Op::Param { group, slot } => {
                    let dst = &mut result.groups[*group][*slot];
                    for (d, u) in dst.values_mut().iter_mut().zip(upstream.values()) {
                        *d += u;
                    }
                }
                _ => {
                    for (input, grad) in self.local_grads(op, NodeId(i), &upstream) {
                        accumulate(&mut adj[input.0], grad);
                    }
                }
            }
        }
        if !result.is_finite() {
            return Err(NumError::NonFinite {
                node: self.label(output),
            });
        }
        Ok(result)
    }

    fn local_grads(&self, op: &Op, id: NodeId, up: &Tensor) -> Vec<(NodeId, Tensor)> {
        match op {
            Op::MatMul(a, b) => {
                let (ga, gb) = matmul_backward(self.cached(*a), self.cached(*b), up);
                vec![(*a, ga), (*b, gb)]
            }
            Op::Add(a, b) => vec![(*a, up.clone()), (*b, up.clone())],
            Op::Mul(a, b) => {
                let ga = zip_same(up, self.cached(*b), |u, y| u * y).expect("shapes checked");
                let gb = zip_same(up, self.cached(*a), |u, x| u * x).expect("shapes checked");
                vec![(*a, ga), (*b, gb)]
            }
            Op::Concat { parts, axis } => {
                let mut offset = 0;
                parts
                    .iter()
                    .map(|p| {
                        let width = self.cached(*p).shape()[*axis];
                        let g = slice(up, *axis, offset, offset + width).expect("shapes checked");
                        offset += width;
                        (*p, g)
                    })
                    .collect()
            }
            Op::Slice {
                input,
                axis,
                start,
                ..
            } => {
                let shape = self.cached(*input).shape();
                vec![(*input, scatter_slice(shape, *axis, *start, up))]
            }
            Op::Sigmoid(a) => {
                let s = self.cached(id);
                let g = zip_same(up, s, |u, s| u * s * (1.0 - s)).expect("same shape");
                vec![(*a, g)]
            }
            Op::Tanh(a) => {
                let t = self.cached(id);
                let g = zip_same(up, t, |u, t| u * (1.0 - t * t)).expect("same shape");
                vec![(*a, g)]
            }
            Op::Softmax(a) => {
                let y = self.cached(id);
                let (rows, n) = y.rows_and_last();
                let mut g = vec![0.0; y.len()];
                for r in 0..rows {
                    let ys = &y.values()[r * n..(r + 1) * n];
                    let us = &up.values()[r * n..(r + 1) * n];
                    let dot: f64 = ys.iter().zip(us).map(|(y, u)| y * u).sum();
                    for j in 0..n {
                        g[r * n + j] = ys[j] * (us[j] - dot);
                    }
                }
                vec![(*a, Tensor::new(y.shape().to_vec(), g).expect("same shape"))]
            }
            Op::LogSoftmax(a) => {
                let y = self.cached(id);
                let (rows, n) = y.rows_and_last();
                let mut g = vec![0.0; y.len()];
                for r in 0..rows {
                    let ys = &y.values()[r * n..(r + 1) * n];
                    let us = &up.values()[r * n..(r + 1) * n];
                    let total: f64 = us.iter().sum();
                    for j in 0..n {
                        g[r * n + j] = us[j] - ys[j].exp() * total;
                    }
                }
                vec![(*a, Tensor::new(y.shape().to_vec(), g).expect("same shape"))]
            }
            Op::Log(a) => {
                let x = self.cached(*a);
                vec![(*a, zip_same(up, x, |u, x| u / x).expect("same shape"))]
            }
            Op::Mean(a) => {
                let x = self.cached(*a);
                let g = up.item() / x.len() as f64;
                vec![(*a, Tensor::filled(x.shape(), g))]
            }
            Op::Sum(a) => {
                let x = self.cached(*a);
                vec![(*a, Tensor::filled(x.shape(), up.item()))]
            }
            Op::Scale(a, c) => vec![(*a, up.map(|u| u * c))],
            Op::Reshape(a, _) => {
                let shape = self.cached(*a).shape().to_vec();
                vec![(*a, Tensor::new(shape, up.values().to_vec()).expect("same length"))]
            }
            Op::Input(_) | Op::Param { .. } | Op::Const(_) | Op::StopGradient(_) => Vec::new(),
        }
    }
}

fn accumulate(slot: &mut Option<Tensor>, grad: Tensor) {
    match slot {
        Some(existing) => {
            for (e, g) in existing.values_mut().iter_mut().zip(grad.values()) {
                *e += g;
            }
        }
        None => *slot = Some(grad),
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

fn zip_same(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, String> {
    if a.shape() != b.shape() {
        return Err(format!("operand shapes {:?} and {:?} differ", a.shape(), b.shape()));
    }
    let values = a.values().iter().zip(b.values()).map(|(&x, &y)| f(x, y)).collect();
    Ok(Tensor::new(a.shape().to_vec(), values).expect("same shape"))
}

fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, String> {
    if a.rank() != 2 || !(b.rank() == 1 || b.rank() == 2) {
        return Err(format!(
            "matmul needs [m,k] x [k] or [m,k] x [k,n], got {:?} x {:?}",
            a.shape(),
            b.shape()
        ));
    }
    let (m, k) = (a.shape()[0], a.shape()[1]);
    if b.shape()[0] != k {
        return Err(format!(
            "inner dimensions differ: {:?} x {:?}",
            a.shape(),
            b.shape()
        ));
    }
    let n = if b.rank() == 2 { b.shape()[1] } else { 1 };
    let av = a.values();
    let bv = b.values();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = av[i * k + p];
            let brow = &bv[p * n..(p + 1) * n];
            for (o, &bpj) in row.iter_mut().zip(brow) {
                *o += aip * bpj;
            }
        }
    }
    let shape = if b.rank() == 2 { vec![m, n] } else { vec![m] };
    Ok(Tensor::new(shape, out).expect("consistent shape"))
}

fn matmul_backward(a: &Tensor, b: &Tensor, up: &Tensor) -> (Tensor, Tensor) {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = if b.rank() == 2 { b.shape()[1] } else { 1 };
    let av = a.values();
    let bv = b.values();
    let uv = up.values();
    let mut ga = vec![0.0; m * k];
    let mut gb = vec![0.0; k * n];
    for i in 0..m {
        for p in 0..k {
            let mut acc = 0.0;
            for j in 0..n {
                acc += uv[i * n + j] * bv[p * n + j];
            }
            ga[i * k + p] = acc;
        }
    }
    for p in 0..k {
        for i in 0..m {
            let aip = av[i * k + p];
            for j in 0..n {
                gb[p * n + j] += aip * uv[i * n + j];
            }
        }
    }
    (
        Tensor::new(a.shape().to_vec(), ga).expect("shape of a"),
        Tensor::new(b.shape().to_vec(), gb).expect("shape of b"),
    )
}

/// Split a shape into (outer, axis length, inner) for row-major indexing.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor, String> {
    let first = parts[0];
    if axis >= first.rank() {
        return Err(format!("axis {axis} out of range for rank {}", first.rank()));
    }
    let mut total = 0;
    for p in parts {
        let same_rank = p.rank() == first.rank();
        let same_other = same_rank
            && p.shape()
                .iter()
                .zip(first.shape())
                .enumerate()
                .all(|(d, (x, y))| d == axis || x == y);
        if !same_other {
            return Err(format!(
                "cannot concat {:?} with {:?} along axis {axis}",
                p.shape(),
                first.shape()
            ));
        }
        total += p.shape()[axis];
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    let (outer, _, inner) = axis_split(&shape, axis);
    let mut values = Vec::with_capacity(shape.iter().product());
    for o in 0..outer {
        for p in parts {
            let width = p.shape()[axis] * inner;
            values.extend_from_slice(&p.values()[o * width..(o + 1) * width]);
        }
    }
    Ok(Tensor::new(shape, values).expect("consistent shape"))
}

fn slice(t: &Tensor, axis: usize, start: usize, end: usize) -> Result<Tensor, String> {
    if axis >= t.rank() || start >= end || end > t.shape()[axis] {
        return Err(format!(
            "invalid slice [{start}, {end}) on axis {axis} of {:?}",
            t.shape()
        ));
    }
    let (outer, len, inner) = axis_split(t.shape(), axis);
    let mut values = Vec::with_capacity(outer * (end - start) * inner);
    for o in 0..outer {
        let base = o * len * inner;
        values.extend_from_slice(&t.values()[base + start * inner..base + end * inner]);
    }
    let mut shape = t.shape().to_vec();
    shape[axis] = end - start;
    Ok(Tensor::new(shape, values).expect("consistent shape"))
}

fn scatter_slice(shape: &[usize], axis: usize, start: usize, up: &Tensor) -> Tensor {
    let (outer, len, inner) = axis_split(shape, axis);
    let width = up.shape()[axis];
    let mut out = Tensor::zeros(shape);
    let vals = out.values_mut();
    for o in 0..outer {
        let dst = o * len * inner + start * inner;
        let src = o * width * inner;
        vals[dst..dst + width * inner].copy_from_slice(&up.values()[src..src + width * inner]);
    }
    out
}

fn softmax_rows(t: &Tensor) -> Tensor {
    let (rows, n) = t.rows_and_last();
    let mut out = vec![0.0; t.len()];
    for r in 0..rows {
        let xs = &t.values()[r * n..(r + 1) * n];
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for j in 0..n {
            let e = (xs[j] - max).exp();
            out[r * n + j] = e;
            total += e;
        }
        for v in &mut out[r * n..(r + 1) * n] {
            *v /= total;
        }
    }
    Tensor::new(t.shape().to_vec(), out).expect("same shape")
}

fn log_softmax_rows(t: &Tensor) -> Tensor {
    let (rows, n) = t.rows_and_last();
    let mut out = vec![0.0; t.len()];
    for r in 0..rows {
        let xs = &t.values()[r * n..(r + 1) * n];
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        for j in 0..n {
            out[r * n + j] = xs[j] - lse;
        }
    }
    Tensor::new(t.shape().to_vec(), out).expect("same shape")
}
