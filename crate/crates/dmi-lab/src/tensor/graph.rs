//! Reverse-mode differentiation tape.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

use super::{GradientMap, Tensor};

/// Handle to a node on a [`Graph`] tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

/// Reduction axis for rank-2 tensors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Collapse rows: [n, k] -> [1, k].
    Rows,
    /// Collapse columns: [n, k] -> [n, 1].
    Cols,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Neg(NodeId),
    Log(NodeId),
    Exp(NodeId),
    Sqrt(NodeId),
    Tanh(NodeId),
    ClampMin(NodeId, f64),
    Scale(NodeId, f64),
    Matmul(NodeId, NodeId),
    Transpose(NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
    SumAxis(NodeId, Axis),
    RowSelect(NodeId, Vec<usize>),
    ColSelect(NodeId, Vec<usize>),
    Softmax(NodeId),
}

/// One tape entry: forward value plus the rule that produced it.
#[derive(Clone, Debug)]
pub struct GraphNode {
    value: Tensor,
    requires_grad: bool,
    op: Op,
    param: Option<String>,
}

/// Append-only computation tape. Nodes only reference earlier nodes, so the
/// graph is acyclic by construction and reverse index order is a valid
/// reverse-topological order.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<GraphNode>,
    param_names: BTreeSet<String>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Register a trainable leaf. Names must be unique per graph.
    pub fn param(&mut self, name: impl Into<String>, value: Tensor) -> NodeId {
        let name = name.into();
        assert!(
            self.param_names.insert(name.clone()),
            "duplicate parameter name {name:?}"
        );
        self.push(GraphNode {
            value,
            requires_grad: true,
            op: Op::Leaf,
            param: Some(name),
        })
    }

    /// Register a non-trainable leaf.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(GraphNode {
            value,
            requires_grad: false,
            op: Op::Leaf,
            param: None,
        })
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.constant(Tensor::scalar(v))
    }

    fn push(&mut self, node: GraphNode) -> NodeId {
        self.nodes.push(node);
        NodeId(self.nodes.len() - 1)
    }

    fn derived(&mut self, value: Tensor, op: Op, parents: &[NodeId]) -> NodeId {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.push(GraphNode {
            value,
            requires_grad,
            op,
            param: None,
        })
    }

    // ---- elementwise ----------------------------------------------------

    fn zip_broadcast(
        op: &'static str,
        a: &Tensor,
        b: &Tensor,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        if a.shape() == b.shape() {
            let data = a
                .data()
                .iter()
                .zip(b.data().iter())
                .map(|(&x, &y)| f(x, y))
                .collect();
            Tensor::new(a.shape().to_vec(), data)
        } else if a.is_scalar() {
            let x = a.item();
            Ok(b.map(|y| f(x, y)))
        } else if b.is_scalar() {
            let y = b.item();
            Ok(a.map(|x| f(x, y)))
        } else {
            Err(Error::ShapeMismatch {
                op,
                left: a.shape().to_vec(),
                right: b.shape().to_vec(),
            })
        }
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = Self::zip_broadcast("add", self.value(a), self.value(b), |x, y| x + y)?;
        Ok(self.derived(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = Self::zip_broadcast("sub", self.value(a), self.value(b), |x, y| x - y)?;
        Ok(self.derived(v, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = Self::zip_broadcast("mul", self.value(a), self.value(b), |x, y| x * y)?;
        Ok(self.derived(v, Op::Mul(a, b), &[a, b]))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(b).data().contains(&0.0) {
            return Err(Error::DivisionByZero { op: "div" });
        }
        let v = Self::zip_broadcast("div", self.value(a), self.value(b), |x, y| x / y)?;
        Ok(self.derived(v, Op::Div(a, b), &[a, b]))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| -x);
        self.derived(v, Op::Neg(a), &[a])
    }

    /// Natural log. Callers clamp first; non-positive input is an error.
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        if let Some(&bad) = self.value(a).data().iter().find(|&&x| x <= 0.0) {
            return Err(Error::NonPositiveInput {
                op: "log",
                value: bad,
            });
        }
        let v = self.value(a).map(f64::ln);
        Ok(self.derived(v, Op::Log(a), &[a]))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::exp);
        self.derived(v, Op::Exp(a), &[a])
    }

    /// Square root. Callers clamp first; negative input is an error.
    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        if let Some(&bad) = self.value(a).data().iter().find(|&&x| x < 0.0) {
            return Err(Error::NonPositiveInput {
                op: "sqrt",
                value: bad,
            });
        }
        let v = self.value(a).map(f64::sqrt);
        Ok(self.derived(v, Op::Sqrt(a), &[a]))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        self.derived(v, Op::Tanh(a), &[a])
    }

    /// Elementwise max(x, floor). Entries at or below the floor get zero gradient.
    pub fn clamp_min(&mut self, a: NodeId, floor: f64) -> NodeId {
        let v = self.value(a).map(|x| x.max(floor));
        self.derived(v, Op::ClampMin(a, floor), &[a])
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| c * x);
        self.derived(v, Op::Scale(a, c), &[a])
    }

    // ---- linear algebra --------------------------------------------------

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape().len() != 2 {
            return Err(Error::RankMismatch {
                op: "matmul",
                expected: 2,
                found: av.shape().to_vec(),
            });
        }
        if bv.shape().len() != 2 || av.cols() != bv.rows() {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let v = matmul_values(av, bv);
        Ok(self.derived(v, Op::Matmul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let av = self.value(a);
        if av.shape().len() != 2 {
            return Err(Error::RankMismatch {
                op: "transpose",
                expected: 2,
                found: av.shape().to_vec(),
            });
        }
        let v = transpose_values(av);
        Ok(self.derived(v, Op::Transpose(a), &[a]))
    }

    // ---- reductions and selection ----------------------------------------

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).data().iter().sum());
        self.derived(v, Op::SumAll(a), &[a])
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len() as f64;
        let v = Tensor::scalar(self.value(a).data().iter().sum::<f64>() / n);
        self.derived(v, Op::MeanAll(a), &[a])
    }

    pub fn sum_axis(&mut self, a: NodeId, axis: Axis) -> Result<NodeId> {
        let av = self.value(a);
        if av.shape().len() != 2 {
            return Err(Error::RankMismatch {
                op: "sum_axis",
                expected: 2,
                found: av.shape().to_vec(),
            });
        }
        let (n, k) = (av.rows(), av.cols());
        let v = match axis {
            Axis::Rows => {
                let mut out = vec![0.0; k];
                for i in 0..n {
                    for j in 0..k {
                        out[j] += av.at(i, j);
                    }
                }
                Tensor::new(vec![1, k], out)?
            }
            Axis::Cols => {
                let mut out = vec![0.0; n];
                for i in 0..n {
                    out[i] = av.row(i).iter().sum();
                }
                Tensor::new(vec![n, 1], out)?
            }
        };
        Ok(self.derived(v, Op::SumAxis(a, axis), &[a]))
    }

    /// Keep the given rows, in the given order.
    pub fn row_select(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId> {
        let av = self.value(a);
        if av.shape().len() != 2 {
            return Err(Error::RankMismatch {
                op: "row_select",
                expected: 2,
                found: av.shape().to_vec(),
            });
        }
        if indices.is_empty() {
            return Err(Error::EmptySelection { op: "row_select" });
        }
        let (n, k) = (av.rows(), av.cols());
        let mut data = Vec::with_capacity(indices.len() * k);
        for &i in indices {
            if i >= n {
                return Err(Error::IndexOutOfRange {
                    op: "row_select",
                    index: i,
                    size: n,
                });
            }
            data.extend_from_slice(av.row(i));
        }
        let v = Tensor::new(vec![indices.len(), k], data)?;
        Ok(self.derived(v, Op::RowSelect(a, indices.to_vec()), &[a]))
    }

    /// Keep the given columns, in the given order.
    pub fn col_select(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId> {
        let av = self.value(a);
        if av.shape().len() != 2 {
            return Err(Error::RankMismatch {
                op: "col_select",
                expected: 2,
                found: av.shape().to_vec(),
            });
        }
        if indices.is_empty() {
            return Err(Error::EmptySelection { op: "col_select" });
        }
        let (n, k) = (av.rows(), av.cols());
        let mut data = Vec::with_capacity(n * indices.len());
        for i in 0..n {
            for &j in indices {
                if j >= k {
                    return Err(Error::IndexOutOfRange {
                        op: "col_select",
                        index: j,
                        size: k,
                    });
                }
                data.push(av.at(i, j));
            }
        }
        let v = Tensor::new(vec![n, indices.len()], data)?;
        Ok(self.derived(v, Op::ColSelect(a, indices.to_vec()), &[a]))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let av = self.value(a);
        if av.shape().len() != 2 {
            return Err(Error::RankMismatch {
                op: "softmax",
                expected: 2,
                found: av.shape().to_vec(),
            });
        }
        let (n, k) = (av.rows(), av.cols());
        let mut data = Vec::with_capacity(n * k);
        for i in 0..n {
            let row = av.row(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&x| (x - m).exp()).collect();
            let z: f64 = exps.iter().sum();
            data.extend(exps.iter().map(|e| e / z));
        }
        let v = Tensor::new(vec![n, k], data)?;
        Ok(self.derived(v, Op::Softmax(a), &[a]))
    }

    // ---- backward ---------------------------------------------------------

    /// Reverse sweep from a scalar loss. Each call recomputes gradients from
    /// scratch; nothing accumulates across calls.
    pub fn backward(&self, loss: NodeId) -> Result<GradientMap> {
        let lnode = &self.nodes[loss.0];
        if !lnode.value.is_scalar() {
            return Err(Error::NonScalarLoss {
                shape: lnode.value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::new(lnode.value.shape().to_vec(), vec![1.0])?);

        for id in (0..=loss.0).rev() {
            if grads[id].is_none() || !self.nodes[id].requires_grad {
                continue;
            }
            let g = grads[id].clone().expect("grad present");
            self.propagate(id, &g, &mut grads);
        }

        let mut map = GradientMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Some(name), true) = (&node.param, node.requires_grad) {
                if let Some(g) = grads[i].take() {
                    map.insert(name.clone(), g);
                }
            }
        }
        Ok(map)
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], pid: NodeId, contrib: Tensor) {
        let target = &self.nodes[pid.0];
        if !target.requires_grad {
            return;
        }
        let shaped = if contrib.shape() == target.value.shape() {
            contrib
        } else {
            // the parent was scalar-broadcast in the forward op
            debug_assert!(target.value.is_scalar());
            Tensor::new(
                target.value.shape().to_vec(),
                vec![contrib.data().iter().sum()],
            )
            .expect("scalar reduction")
        };
        match &mut grads[pid.0] {
            Some(existing) => existing.add_scaled(1.0, &shaped),
            slot @ None => *slot = Some(shaped),
        }
    }

    fn propagate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let da = Self::zip_broadcast("mul_grad", g, bv, |gi, y| gi * y)
                    .expect("shapes checked in forward");
                let db = Self::zip_broadcast("mul_grad", g, av, |gi, x| gi * x)
                    .expect("shapes checked in forward");
                self.accumulate(grads, *a, da);
                self.accumulate(grads, *b, db);
            }
            Op::Div(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let da = Self::zip_broadcast("div_grad", g, bv, |gi, y| gi / y)
                    .expect("shapes checked in forward");
                let ratio = Self::zip_broadcast("div_grad", av, bv, |x, y| x / (y * y))
                    .expect("shapes checked in forward");
                let db = Self::zip_broadcast("div_grad", g, &ratio, |gi, r| -gi * r)
                    .expect("shapes checked in forward");
                self.accumulate(grads, *a, da);
                self.accumulate(grads, *b, db);
            }
            Op::Neg(a) => self.accumulate(grads, *a, g.map(|x| -x)),
            Op::Log(a) => {
                let av = self.value(*a);
                let da =
                    Self::zip_broadcast("log_grad", g, av, |gi, x| gi / x).expect("same shape");
                self.accumulate(grads, *a, da);
            }
            Op::Exp(a) => {
                let yv = &self.nodes[id].value;
                let da =
                    Self::zip_broadcast("exp_grad", g, yv, |gi, y| gi * y).expect("same shape");
                self.accumulate(grads, *a, da);
            }
            Op::Sqrt(a) => {
                let yv = &self.nodes[id].value;
                let da = Self::zip_broadcast("sqrt_grad", g, yv, |gi, y| gi * 0.5 / y)
                    .expect("same shape");
                self.accumulate(grads, *a, da);
            }
            Op::Tanh(a) => {
                let yv = &self.nodes[id].value;
                let da = Self::zip_broadcast("tanh_grad", g, yv, |gi, y| gi * (1.0 - y * y))
                    .expect("same shape");
                self.accumulate(grads, *a, da);
            }
            Op::ClampMin(a, floor) => {
                let av = self.value(*a);
                let da =
                    Self::zip_broadcast(
                        "clamp_grad",
                        g,
                        av,
                        |gi, x| {
                            if x > *floor {
                                gi
                            } else {
                                0.0
                            }
                        },
                    )
                    .expect("same shape");
                self.accumulate(grads, *a, da);
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, g.map(|x| c * x)),
            Op::Matmul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let da = matmul_values(g, &transpose_values(bv));
                let db = matmul_values(&transpose_values(av), g);
                self.accumulate(grads, *a, da);
                self.accumulate(grads, *b, db);
            }
            Op::Transpose(a) => self.accumulate(grads, *a, transpose_values(g)),
            Op::SumAll(a) => {
                let av = self.value(*a);
                let gi = g.item();
                self.accumulate(grads, *a, av.map(|_| gi));
            }
            Op::MeanAll(a) => {
                let av = self.value(*a);
                let gi = g.item() / av.len() as f64;
                self.accumulate(grads, *a, av.map(|_| gi));
            }
            Op::SumAxis(a, axis) => {
                let av = self.value(*a);
                let (n, k) = (av.rows(), av.cols());
                let da = match axis {
                    Axis::Rows => Tensor::from_fn(n, k, |_, j| g.at(0, j)),
                    Axis::Cols => Tensor::from_fn(n, k, |i, _| g.at(i, 0)),
                };
                self.accumulate(grads, *a, da);
            }
            Op::RowSelect(a, indices) => {
                let av = self.value(*a);
                let mut da = Tensor::zeros(av.shape().to_vec());
                let k = av.cols();
                for (r, &i) in indices.iter().enumerate() {
                    for j in 0..k {
                        let cur = da.at(i, j);
                        da.set(i, j, cur + g.at(r, j));
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::ColSelect(a, indices) => {
                let av = self.value(*a);
                let mut da = Tensor::zeros(av.shape().to_vec());
                let n = av.rows();
                for i in 0..n {
                    for (c, &j) in indices.iter().enumerate() {
                        let cur = da.at(i, j);
                        da.set(i, j, cur + g.at(i, c));
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::Softmax(a) => {
                let s = &self.nodes[id].value;
                let (n, k) = (s.rows(), s.cols());
                let da = Tensor::from_fn(n, k, |i, j| {
                    let dot: f64 = (0..k).map(|l| g.at(i, l) * s.at(i, l)).sum();
                    s.at(i, j) * (g.at(i, j) - dot)
                });
                self.accumulate(grads, *a, da);
            }
        }
    }
}

fn matmul_values(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, m, k) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        for l in 0..m {
            let a_il = a.at(i, l);
            if a_il == 0.0 {
                continue;
            }
            for j in 0..k {
                out[i * k + j] += a_il * b.at(l, j);
            }
        }
    }
    Tensor::new(vec![n, k], out).expect("matmul shape")
}

fn transpose_values(a: &Tensor) -> Tensor {
    let (n, k) = (a.rows(), a.cols());
    Tensor::from_fn(k, n, |i, j| a.at(j, i))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_loss(g: &Graph, id: NodeId) -> f64 {
        g.value(id).item()
    }

    #[test]
    fn log_of_one_is_zero() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::new(vec![1], vec![1.0]).unwrap());
        let l = g.log(a).unwrap();
        assert_eq!(g.value(l).data(), &[0.0]);
    }

    #[test]
    fn add_elementwise() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let b = g.constant(Tensor::new(vec![2], vec![3.0, 4.0]).unwrap());
        let c = g.add(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[4.0, 6.0]);
    }

    #[test]
    fn clamp_min_applies_floor() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::new(vec![1], vec![1e-30]).unwrap());
        let c = g.clamp_min(a, 1e-12);
        assert_eq!(g.value(c).data(), &[1e-12]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(vec![2, 3]));
        let b = g.constant(Tensor::zeros(vec![3, 2]));
        match g.add(a, b) {
            Err(Error::ShapeMismatch { left, right, .. }) => {
                assert_eq!(left, vec![2, 3]);
                assert_eq!(right, vec![3, 2]);
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn div_by_exact_zero_errors() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::new(vec![2], vec![1.0, 1.0]).unwrap());
        let b = g.constant(Tensor::new(vec![2], vec![2.0, 0.0]).unwrap());
        assert!(matches!(g.div(a, b), Err(Error::DivisionByZero { .. })));
    }

    #[test]
    fn matmul_identity() {
        let mut g = Graph::new();
        let eye = g.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let m = g.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let p = g.matmul(eye, m).unwrap();
        assert_eq!(g.value(p).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_row_times_col() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap());
        let b = g.constant(Tensor::matrix(2, 1, vec![2.0, 5.0]).unwrap());
        let p = g.matmul(a, b).unwrap();
        assert_eq!(g.value(p).data(), &[2.0]);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = crate::rng::Rng::new(17);
        let a_data: Vec<f64> = (0..12).map(|_| rng.normal()).collect();
        let b_data: Vec<f64> = (0..8).map(|_| rng.normal()).collect();
        let mut g = Graph::new();
        let a = g.constant(Tensor::matrix(3, 4, a_data.clone()).unwrap());
        let b = g.constant(Tensor::matrix(4, 2, b_data.clone()).unwrap());
        let p = g.matmul(a, b).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut want = 0.0;
                for l in 0..4 {
                    want += a_data[i * 4 + l] * b_data[l * 2 + j];
                }
                assert!((g.value(p).at(i, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::matrix(1, 3, vec![0.0, 0.0, 0.0]).unwrap());
        let s = g.softmax(a).unwrap();
        for &v in g.value(s).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_is_overflow_stable() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::matrix(1, 2, vec![1000.0, 0.0]).unwrap());
        let s = g.softmax(a).unwrap();
        let v = g.value(s);
        assert!(v.all_finite());
        assert!((v.at(0, 0) - 1.0).abs() < 1e-12);
        assert!(v.at(0, 1) < 1e-300);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = crate::rng::Rng::new(3);
        let mut g = Graph::new();
        let a = g.constant(Tensor::from_fn(5, 7, |_, _| rng.normal() * 4.0));
        let s = g.softmax(a).unwrap();
        for i in 0..5 {
            let sum: f64 = g.value(s).row(i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sum_axis_rows_collapses_rows() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let s = g.sum_axis(a, Axis::Rows).unwrap();
        assert_eq!(g.value(s).shape(), &[1, 2]);
        assert_eq!(g.value(s).data(), &[4.0, 6.0]);
    }

    #[test]
    fn select_preserves_order() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::matrix(3, 3, (0..9).map(|x| x as f64).collect()).unwrap());
        let r = g.row_select(a, &[2, 0]).unwrap();
        assert_eq!(g.value(r).data(), &[6.0, 7.0, 8.0, 0.0, 1.0, 2.0]);
        let c = g.col_select(a, &[1]).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 4.0, 7.0]);
    }

    #[test]
    fn empty_selection_errors() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(vec![2, 2]));
        assert!(matches!(
            g.row_select(a, &[]),
            Err(Error::EmptySelection { .. })
        ));
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut g = Graph::new();
        let p = g.param("p", Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let loss = g.sum_all(p);
        let gm = g.backward(loss).unwrap();
        assert_eq!(gm["p"].data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_of_square_is_two_x() {
        let mut g = Graph::new();
        let p = g.param("p", Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let sq = g.mul(p, p).unwrap();
        let loss = g.sum_all(sq);
        let gm = g.backward(loss).unwrap();
        assert_eq!(gm["p"].data(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_twice_gives_identical_results() {
        let mut g = Graph::new();
        let p = g.param("p", Tensor::new(vec![2], vec![0.5, -1.5]).unwrap());
        let e = g.exp(p);
        let loss = g.sum_all(e);
        let g1 = g.backward(loss).unwrap();
        let g2 = g.backward(loss).unwrap();
        assert_eq!(g1["p"].data(), g2["p"].data());
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let p = g.param("p", Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        assert!(matches!(g.backward(p), Err(Error::NonScalarLoss { .. })));
    }

    #[test]
    fn constants_accumulate_no_gradient() {
        let mut g = Graph::new();
        let p = g.param("p", Tensor::scalar(2.0));
        let c = g.constant(Tensor::scalar(3.0));
        let prod = g.mul(p, c).unwrap();
        let gm = g.backward(prod).unwrap();
        assert_eq!(gm.len(), 1);
        assert_eq!(gm["p"].item(), 3.0);
        assert!(scalar_loss(&g, prod) == 6.0);
    }

    #[test]
    fn scalar_broadcast_gradient_sums() {
        // d/ds sum(s * v) = sum(v)
        let mut g = Graph::new();
        let s = g.param("s", Tensor::scalar(2.0));
        let v = g.constant(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let prod = g.mul(s, v).unwrap();
        let loss = g.sum_all(prod);
        let gm = g.backward(loss).unwrap();
        assert_eq!(gm["s"].item(), 6.0);
    }
}
