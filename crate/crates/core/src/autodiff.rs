//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] records every node in creation order, which is already a
//! topological order: parents always precede their children. Calling
//! [`Graph::backward`] walks the nodes from the loss back to the first leaf
//! once, propagating cotangents, and adds the result into each node's
//! accumulated gradient. Gradients persist across `backward` calls until
//! [`Graph::zero_grad`] is called, so two losses backpropagated one after
//! the other leave the same gradients as their sum.
//!
//! ```
//! use viewgate::autodiff::Graph;
//! use viewgate::tensor::Tensor;
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::scalar(3.0));
//! let sq = g.hadamard(x, x).unwrap();
//! g.backward(sq).unwrap();
//! assert_eq!(g.grad(x).unwrap().item(), 6.0);
//! ```

use crate::error::{Error, Result};
use crate::tensor::{matmul, matmul_at_into, matmul_bt_into, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Hadamard,
    Scale,
}

/// Right-hand operand of [`Graph::elementwise`].
#[derive(Debug, Clone, Copy)]
pub enum Operand {
    Node(NodeId),
    Scalar(f64),
}

impl From<NodeId> for Operand {
    fn from(id: NodeId) -> Self {
        Operand::Node(id)
    }
}

impl From<f64> for Operand {
    fn from(v: f64) -> Self {
        Operand::Scalar(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Mean,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    Scale(NodeId, f64),
    ScaleBy(NodeId, NodeId),
    AddScalar(NodeId),
    /// `[m×n] + [n]` broadcast over rows.
    AddRow(NodeId, NodeId),
    /// `[m×n] ∘ [m×1]` broadcast over columns.
    MulCol(NodeId, NodeId),
    Column(NodeId, usize),
    Relu(NodeId),
    Sigmoid(NodeId),
    Softmax(NodeId),
    Log(NodeId),
    Clamp(NodeId, f64, f64),
    StopGradient,
    Sum(NodeId),
    Mean(NodeId),
}

#[derive(Debug, Clone)]
pub struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

impl Node {
    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }
}

#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
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

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Accumulated gradient; `None` for nodes that do not require one.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].grad.as_ref()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        let grad = requires_grad.then(|| Tensor::zeros(value.shape()));
        self.nodes.push(Node {
            value,
            grad,
            op: Op::Leaf,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, false)
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            if let Some(g) = n.grad.as_mut() {
                g.fill(0.0);
            }
        }
    }

    fn push(
        &mut self,
        op: &'static str,
        value: Tensor,
        kind: Op,
        parents: &[NodeId],
    ) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op });
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        let grad = requires_grad.then(|| Tensor::zeros(value.shape()));
        self.nodes.push(Node {
            value,
            grad,
            op: kind,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::Dimension {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = matmul(self.value(a), self.value(b))?;
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    pub fn elementwise(
        &mut self,
        op: Elementwise,
        a: NodeId,
        b: impl Into<Operand>,
    ) -> Result<NodeId> {
        match (op, b.into()) {
            (Elementwise::Add, Operand::Node(b)) => {
                self.same_shape("add", a, b)?;
                let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
                self.push("add", v, Op::Add(a, b), &[a, b])
            }
            (Elementwise::Sub, Operand::Node(b)) => {
                self.same_shape("sub", a, b)?;
                let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
                self.push("sub", v, Op::Sub(a, b), &[a, b])
            }
            (Elementwise::Hadamard, Operand::Node(b)) => {
                self.same_shape("hadamard", a, b)?;
                let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
                self.push("hadamard", v, Op::Hadamard(a, b), &[a, b])
            }
            (Elementwise::Scale, Operand::Node(s)) => {
                if !self.value(s).is_scalar() {
                    return Err(Error::Dimension {
                        op: "scale",
                        left: self.value(a).shape().to_vec(),
                        right: self.value(s).shape().to_vec(),
                    });
                }
                let k = self.value(s).item();
                let v = self.value(a).map(|x| x * k);
                self.push("scale", v, Op::ScaleBy(a, s), &[a, s])
            }
            (Elementwise::Add, Operand::Scalar(k)) => {
                let v = self.value(a).map(|x| x + k);
                self.push("add", v, Op::AddScalar(a), &[a])
            }
            (Elementwise::Sub, Operand::Scalar(k)) => {
                let v = self.value(a).map(|x| x - k);
                self.push("sub", v, Op::AddScalar(a), &[a])
            }
            (Elementwise::Hadamard | Elementwise::Scale, Operand::Scalar(k)) => {
                let v = self.value(a).map(|x| x * k);
                self.push("scale", v, Op::Scale(a, k), &[a])
            }
        }
    }

    pub fn add(&mut self, a: NodeId, b: impl Into<Operand>) -> Result<NodeId> {
        self.elementwise(Elementwise::Add, a, b)
    }

    pub fn sub(&mut self, a: NodeId, b: impl Into<Operand>) -> Result<NodeId> {
        self.elementwise(Elementwise::Sub, a, b)
    }

    pub fn hadamard(&mut self, a: NodeId, b: impl Into<Operand>) -> Result<NodeId> {
        self.elementwise(Elementwise::Hadamard, a, b)
    }

    pub fn scale(&mut self, a: NodeId, k: impl Into<Operand>) -> Result<NodeId> {
        self.elementwise(Elementwise::Scale, a, k)
    }

    /// Adds a length-`n` vector to every row of an `[m×n]` matrix.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let (av, rv) = (self.value(a), self.value(row));
        let n = av.cols();
        if rv.len() != n || av.shape().len() > 2 {
            return Err(Error::Dimension {
                op: "add_row",
                left: av.shape().to_vec(),
                right: rv.shape().to_vec(),
            });
        }
        let mut v = av.clone();
        for chunk in v.data_mut().chunks_mut(n) {
            for (x, b) in chunk.iter_mut().zip(rv.data()) {
                *x += b;
            }
        }
        self.push("add_row", v, Op::AddRow(a, row), &[a, row])
    }

    /// Scales each row `i` of an `[m×n]` matrix by `col[i]`.
    pub fn mul_col(&mut self, a: NodeId, col: NodeId) -> Result<NodeId> {
        let (av, cv) = (self.value(a), self.value(col));
        if cv.len() != av.rows() {
            return Err(Error::Dimension {
                op: "mul_col",
                left: av.shape().to_vec(),
                right: cv.shape().to_vec(),
            });
        }
        let n = av.cols();
        let mut v = av.clone();
        for (chunk, &s) in v.data_mut().chunks_mut(n).zip(cv.data()) {
            chunk.iter_mut().for_each(|x| *x *= s);
        }
        self.push("mul_col", v, Op::MulCol(a, col), &[a, col])
    }

    /// Column `j` of an `[m×k]` matrix as `[m×1]`.
    pub fn column(&mut self, a: NodeId, j: usize) -> Result<NodeId> {
        let av = self.value(a);
        if j >= av.cols() {
            return Err(Error::Dimension {
                op: "column",
                left: av.shape().to_vec(),
                right: vec![j],
            });
        }
        let m = av.rows();
        let data = (0..m).map(|i| av.get(i, j)).collect();
        let v = Tensor::new(vec![m, 1], data)?;
        self.push("column", v, Op::Column(a, j), &[a])
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push("relu", v, Op::Relu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(sigmoid);
        self.push("sigmoid", v, Op::Sigmoid(a), &[a])
    }

    /// Softmax over the last axis (each row of a matrix, or a whole vector).
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let av = self.value(a);
        let n = av.cols();
        let mut v = av.clone();
        for row in v.data_mut().chunks_mut(n) {
            softmax_in_place(row);
        }
        self.push("softmax", v, Op::Softmax(a), &[a])
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(f64::ln);
        self.push("log", v, Op::Log(a), &[a])
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.push("clamp", v, Op::Clamp(a, lo, hi), &[a])
    }

    /// Identity in the forward pass; no gradient flows back through it.
    pub fn stop_gradient(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).clone();
        self.push("stop_gradient", v, Op::StopGradient, &[])
    }

    pub fn reduce(&mut self, op: Reduce, a: NodeId) -> Result<NodeId> {
        let s = self.value(a).sum();
        match op {
            Reduce::Sum => self.push("sum", Tensor::scalar(s), Op::Sum(a), &[a]),
            Reduce::Mean => {
                let n = self.value(a).len() as f64;
                self.push("mean", Tensor::scalar(s / n), Op::Mean(a), &[a])
            }
        }
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.reduce(Reduce::Sum, a)
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.reduce(Reduce::Mean, a)
    }

    /// Backpropagates from a scalar `loss`, adding `∂loss/∂node` into the
    /// gradient of every node that requires one.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let mut cot: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        cot[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = cot[i].take() else { continue };
            self.propagate(i, &g, &mut cot);
            if let Some(acc) = self.nodes[i].grad.as_mut() {
                acc.add_assign(&g);
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Tensor, cot: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let nodes = &self.nodes;
        let mut send = |to: NodeId, contribution: Tensor| {
            if !nodes[to.0].requires_grad {
                return;
            }
            match cot[to.0].as_mut() {
                Some(acc) => acc.add_assign(&contribution),
                None => cot[to.0] = Some(contribution),
            }
        };
        let wants = |id: NodeId| nodes[id.0].requires_grad;

        match node.op {
            Op::Leaf | Op::StopGradient => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if wants(a) {
                    let mut ga = Tensor::zeros(av.shape());
                    matmul_bt_into(g.data(), bv.data(), ga.data_mut(), m, n, k);
                    send(a, ga);
                }
                if wants(b) {
                    let mut gb = Tensor::zeros(bv.shape());
                    matmul_at_into(av.data(), g.data(), gb.data_mut(), m, k, n);
                    send(b, gb);
                }
            }
            Op::Add(a, b) => {
                send(a, g.clone());
                send(b, g.clone());
            }
            Op::Sub(a, b) => {
                send(a, g.clone());
                send(b, g.map(|x| -x));
            }
            Op::Hadamard(a, b) => {
                if wants(a) {
                    send(a, g.zip_map(&nodes[b.0].value, |x, y| x * y));
                }
                if wants(b) {
                    send(b, g.zip_map(&nodes[a.0].value, |x, y| x * y));
                }
            }
            Op::Scale(a, k) => send(a, g.map(|x| x * k)),
            Op::ScaleBy(a, s) => {
                let k = nodes[s.0].value.item();
                if wants(a) {
                    send(a, g.map(|x| x * k));
                }
                if wants(s) {
                    let dot: f64 = g
                        .data()
                        .iter()
                        .zip(nodes[a.0].value.data())
                        .map(|(x, y)| x * y)
                        .sum();
                    send(s, Tensor::filled(nodes[s.0].value.shape(), dot));
                }
            }
            Op::AddScalar(a) => send(a, g.clone()),
            Op::AddRow(a, row) => {
                send(a, g.clone());
                if wants(row) {
                    let rv = &nodes[row.0].value;
                    let mut gr = Tensor::zeros(rv.shape());
                    for chunk in g.data().chunks(rv.len()) {
                        for (acc, x) in gr.data_mut().iter_mut().zip(chunk) {
                            *acc += x;
                        }
                    }
                    send(row, gr);
                }
            }
            Op::MulCol(a, col) => {
                let (av, cv) = (&nodes[a.0].value, &nodes[col.0].value);
                let n = av.cols();
                if wants(a) {
                    let mut ga = g.clone();
                    for (chunk, &s) in ga.data_mut().chunks_mut(n).zip(cv.data()) {
                        chunk.iter_mut().for_each(|x| *x *= s);
                    }
                    send(a, ga);
                }
                if wants(col) {
                    let data = g
                        .data()
                        .chunks(n)
                        .zip(av.data().chunks(n))
                        .map(|(gr, ar)| gr.iter().zip(ar).map(|(x, y)| x * y).sum())
                        .collect();
                    send(
                        col,
                        Tensor::new(cv.shape().to_vec(), data).expect("column shape"),
                    );
                }
            }
            Op::Column(a, j) => {
                let av = &nodes[a.0].value;
                let k = av.cols();
                let mut ga = Tensor::zeros(av.shape());
                for (r, &x) in g.data().iter().enumerate() {
                    ga.data_mut()[r * k + j] = x;
                }
                send(a, ga);
            }
            Op::Relu(a) => send(
                a,
                g.zip_map(&nodes[a.0].value, |x, v| if v > 0.0 { x } else { 0.0 }),
            ),
            Op::Sigmoid(a) => send(a, g.zip_map(&node.value, |x, y| x * y * (1.0 - y))),
            Op::Softmax(a) => {
                let n = node.value.cols();
                let mut ga = g.clone();
                for (gr, yr) in ga.data_mut().chunks_mut(n).zip(node.value.data().chunks(n)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(x, y)| x * y).sum();
                    for (x, y) in gr.iter_mut().zip(yr) {
                        *x = y * (*x - dot);
                    }
                }
                send(a, ga);
            }
            Op::Log(a) => send(a, g.zip_map(&nodes[a.0].value, |x, v| x / v)),
            Op::Clamp(a, lo, hi) => send(
                a,
                g.zip_map(&nodes[a.0].value, |x, v| {
                    if (lo..=hi).contains(&v) {
                        x
                    } else {
                        0.0
                    }
                }),
            ),
            Op::Sum(a) => send(a, Tensor::filled(nodes[a.0].value.shape(), g.item())),
            Op::Mean(a) => {
                let av = &nodes[a.0].value;
                send(a, Tensor::filled(av.shape(), g.item() / av.len() as f64));
            }
        }
    }
}

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    row.iter_mut().for_each(|x| *x /= total);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_node(g: &mut Graph, v: &[f64]) -> NodeId {
        g.param(Tensor::vector(v.to_vec()))
    }

    #[test]
    fn hadamard_masks() {
        let mut g = Graph::new();
        let a = vec_node(&mut g, &[0.2, 0.8]);
        let b = g.constant(Tensor::vector(vec![1.0, 0.0]));
        let h = g.hadamard(a, b).unwrap();
        assert_eq!(g.value(h).data(), &[0.2, 0.0]);
        let s = g.add(a, b).unwrap();
        assert_eq!(g.value(s).data(), &[1.2, 0.8]);
    }

    #[test]
    fn add_vectors() {
        let mut g = Graph::new();
        let a = vec_node(&mut g, &[1.0, 2.0]);
        let b = vec_node(&mut g, &[3.0, 4.0]);
        let s = g.add(a, b).unwrap();
        assert_eq!(g.value(s).data(), &[4.0, 6.0]);
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let mut g = Graph::new();
        let a = vec_node(&mut g, &[1.0, 2.0]);
        let b = vec_node(&mut g, &[1.0, 2.0, 3.0]);
        assert!(matches!(g.add(a, b), Err(Error::Dimension { .. })));
        assert!(matches!(g.hadamard(a, b), Err(Error::Dimension { .. })));
    }

    #[test]
    fn relu_and_its_mask() {
        let mut g = Graph::new();
        let a = vec_node(&mut g, &[-1.0, 0.0, 2.0]);
        let r = g.relu(a).unwrap();
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);
        let s = g.sum(r).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(a).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn sigmoid_closed_forms() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        for x in [-800.0, -3.3, 0.1, 7.0, 800.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
            assert!(sigmoid(x).is_finite());
        }
    }

    #[test]
    fn softmax_uniform_and_known_values() {
        let mut g = Graph::new();
        let a = vec_node(&mut g, &[0.0, 0.0, 0.0]);
        let s = g.softmax(a).unwrap();
        for &p in g.value(s).data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let b = vec_node(&mut g, &[1.0, 2.0, 3.0]);
        let s = g.softmax(b).unwrap();
        let expected = [0.09003057317038046, 0.24472847105479764, 0.6652409557748219];
        for (p, e) in g.value(s).data().iter().zip(expected) {
            assert!((p - e).abs() < 1e-12);
        }
        let big = vec_node(&mut g, &[1000.0, 1001.0, 1002.0]);
        let s2 = g.softmax(big).unwrap();
        for (p, q) in g.value(s2).data().iter().zip(g.value(s).data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn stop_gradient_is_identity_with_zero_backward() {
        let mut g = Graph::new();
        let w = vec_node(&mut g, &[1.0, 2.0]);
        let x = g.constant(Tensor::vector(vec![3.0, -1.0]));
        let sw = g.stop_gradient(w).unwrap();
        assert_eq!(g.value(sw).data(), &[1.0, 2.0]);
        let p = g.hadamard(sw, x).unwrap();
        let l = g.sum(p).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(w).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn reductions() {
        let mut g = Graph::new();
        let a = vec_node(&mut g, &[1.0, 2.0, 3.0]);
        let s = g.sum(a).unwrap();
        assert_eq!(g.value(s).item(), 6.0);
        let b = vec_node(&mut g, &[2.0, 4.0]);
        let m = g.mean(b).unwrap();
        assert_eq!(g.value(m).item(), 3.0);
        g.backward(m).unwrap();
        assert_eq!(g.grad(b).unwrap().data(), &[0.5, 0.5]);
    }

    #[test]
    fn square_and_fan_out() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let sq = g.hadamard(x, x).unwrap();
        g.backward(sq).unwrap();
        assert_eq!(g.grad(x).unwrap().item(), 6.0);

        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(2.0));
        let y = g.param(Tensor::scalar(5.0));
        let xy = g.hadamard(x, y).unwrap();
        let l = g.add(xy, x).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap().item(), 6.0);
        assert_eq!(g.grad(y).unwrap().item(), 2.0);
    }

    #[test]
    fn backward_accumulates_until_reset() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let sq = g.hadamard(x, x).unwrap();
        g.backward(sq).unwrap();
        g.backward(sq).unwrap();
        assert_eq!(g.grad(x).unwrap().item(), 12.0);
        g.zero_grad();
        assert_eq!(g.grad(x).unwrap().item(), 0.0);
        g.backward(sq).unwrap();
        assert_eq!(g.grad(x).unwrap().item(), 6.0);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let a = vec_node(&mut g, &[1.0, 2.0]);
        assert!(matches!(g.backward(a), Err(Error::Contract(_))));
    }

    #[test]
    fn log_of_zero_is_an_error() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::vector(vec![0.0, 1.0]));
        assert!(matches!(g.log(a), Err(Error::NonFinite { op: "log" })));
    }

    #[test]
    fn matmul_hand_arithmetic() {
        let mut g = Graph::new();
        let a = g.param(Tensor::from_rows(&[[1.0, 2.0]]).unwrap());
        let b = g.param(Tensor::from_rows(&[[3.0], [4.0]]).unwrap());
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[11.0]);
        let l = g.sum(c).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(a).unwrap().data(), &[3.0, 4.0]);
        assert_eq!(g.grad(b).unwrap().data(), &[1.0, 2.0]);
    }
}
