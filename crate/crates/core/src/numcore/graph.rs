//! Reverse-mode differentiation over a small, fixed set of dense matrix operations.
//!
//! A [`Graph`] is a list of nodes in construction order, which is always a valid
//! topological order because a node can only reference nodes created before it.
//! Leaves are named parameters (bound at evaluation time through [`Bindings`]) or
//! constants stored in the graph. Shapes are only known once the leaves are bound,
//! so shape errors surface from [`Graph::forward`] and name the offending node.
//!
//! Conventions:
//! - the subgradient of `hinge(x) = max(x, 0)` at `x = 0` is 0;
//! - `row_l2_norm` maps zero rows to zero rows and passes no gradient through them;
//! - `detach` is the identity forward and blocks gradient flow backward.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::numcore::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Param(String),
    Const(Matrix),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Square(NodeId),
    Hinge(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    RowSoftmax { x: NodeId, temperature: f64 },
    RowL2Norm(NodeId),
    RowSum(NodeId),
    ColSum(NodeId),
    RowMean(NodeId),
    ColMean(NodeId),
    Sum(NodeId),
    Affine { x: NodeId, scale: f64, shift: f64 },
    Transpose(NodeId),
    Detach(NodeId),
    Assemble { parts: Vec<NodeId>, rows: usize, cols: usize },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Param(_) => "param",
            Op::Const(_) => "const",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Square(_) => "square",
            Op::Hinge(_) => "hinge",
            Op::Tanh(_) => "tanh",
            Op::Exp(_) => "exp",
            Op::RowSoftmax { .. } => "row_softmax",
            Op::RowL2Norm(_) => "row_l2_norm",
            Op::RowSum(_) => "row_sum",
            Op::ColSum(_) => "col_sum",
            Op::RowMean(_) => "row_mean",
            Op::ColMean(_) => "col_mean",
            Op::Sum(_) => "sum",
            Op::Affine { .. } => "affine",
            Op::Transpose(_) => "transpose",
            Op::Detach(_) => "detach",
            Op::Assemble { .. } => "assemble",
        }
    }
}

/// Named leaf values for a graph evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bindings(BTreeMap<String, Matrix>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) -> &mut Self {
        self.0.insert(name.into(), value);
        self
    }

    pub fn with(mut self, name: impl Into<String>, value: Matrix) -> Self {
        self.insert(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.0.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.0.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// Gradient of a scalar root with respect to each parameter leaf.
pub type Gradients = BTreeMap<String, Matrix>;

#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Op>,
    params: HashMap<String, NodeId>,
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

    fn push(&mut self, op: Op) -> NodeId {
        self.nodes.push(op);
        NodeId(self.nodes.len() - 1)
    }

    /// Parameter leaf. Declaring the same name twice returns the same node.
    pub fn param(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.params.get(name) {
            return id;
        }
        let id = self.push(Op::Param(name.to_string()));
        self.params.insert(name.to_string(), id);
        id
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().filter_map(|op| match op {
            Op::Param(name) => Some(name.as_str()),
            _ => None,
        })
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Const(value))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b))
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Square(x))
    }

    pub fn hinge(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Hinge(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Tanh(x))
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Exp(x))
    }

    /// Row-wise `softmax(temperature * x)`.
    pub fn row_softmax(&mut self, x: NodeId, temperature: f64) -> NodeId {
        self.push(Op::RowSoftmax { x, temperature })
    }

    pub fn row_l2_norm(&mut self, x: NodeId) -> NodeId {
        self.push(Op::RowL2Norm(x))
    }

    /// `n x c -> n x 1`
    pub fn row_sum(&mut self, x: NodeId) -> NodeId {
        self.push(Op::RowSum(x))
    }

    /// `n x c -> 1 x c`
    pub fn col_sum(&mut self, x: NodeId) -> NodeId {
        self.push(Op::ColSum(x))
    }

    pub fn row_mean(&mut self, x: NodeId) -> NodeId {
        self.push(Op::RowMean(x))
    }

    pub fn col_mean(&mut self, x: NodeId) -> NodeId {
        self.push(Op::ColMean(x))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sum(x))
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> NodeId {
        self.push(Op::Affine { x, scale, shift })
    }

    pub fn scale(&mut self, x: NodeId, scale: f64) -> NodeId {
        self.affine(x, scale, 0.0)
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Transpose(x))
    }

    pub fn detach(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Detach(x))
    }

    /// Arranges 1x1 nodes into a `rows x cols` matrix, row-major.
    pub fn assemble(&mut self, parts: Vec<NodeId>, rows: usize, cols: usize) -> NodeId {
        self.push(Op::Assemble { parts, rows, cols })
    }

    /// Smallest `|x|` over the inputs of every hinge node, or `None` without hinges.
    /// Central differences with step `h` are only valid when this exceeds `h`.
    pub fn min_hinge_input(&self, eval: &Evaluation) -> Option<f64> {
        self.nodes
            .iter()
            .filter_map(|op| match op {
                Op::Hinge(x) => Some(eval.value(*x).data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))),
                _ => None,
            })
            .reduce(f64::min)
    }

    pub fn forward(&self, bindings: &Bindings) -> Result<Evaluation> {
        let mut eval = Evaluation::default();
        eval.extend(self, bindings)?;
        Ok(eval)
    }

    /// Backpropagates from a 1x1 `root` using values from a completed forward pass.
    /// Every parameter declared in the graph gets an entry (zeros when unreachable).
    pub fn backward(&self, eval: &Evaluation, root: NodeId) -> Result<Gradients> {
        if eval.values.len() < self.nodes.len() {
            return Err(Error::shape("backward", "evaluation is stale; extend it first"));
        }
        let root_val = &eval.values[root.0];
        if root_val.shape() != (1, 1) {
            return Err(Error::NonScalarRoot {
                rows: root_val.rows(),
                cols: root_val.cols(),
            });
        }

        let live = self.param_dependence(root);
        let mut grads: Vec<Option<Matrix>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let op = &self.nodes[idx];
            let y = &eval.values[idx];
            let mut send = |target: NodeId, contribution: Matrix| {
                if !live[target.0] {
                    return;
                }
                match &mut grads[target.0] {
                    Some(acc) => acc.add_assign(&contribution),
                    slot @ None => *slot = Some(contribution),
                }
            };
            let val = |id: NodeId| &eval.values[id.0];
            match op {
                Op::Param(_) => {
                    // leaf: keep the accumulated gradient
                    grads[idx] = Some(g);
                }
                Op::Const(_) | Op::Detach(_) => {}
                Op::MatMul(a, b) => {
                    if live[a.0] {
                        send(*a, g.matmul(&val(*b).transpose())?);
                    }
                    if live[b.0] {
                        send(*b, val(*a).transpose().matmul(&g)?);
                    }
                }
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::Sub(a, b) => {
                    send(*a, g.clone());
                    send(*b, g.map(|v| -v));
                }
                Op::Mul(a, b) => {
                    if live[a.0] {
                        send(*a, g.zip_map(val(*b), |g, b| g * b)?);
                    }
                    if live[b.0] {
                        send(*b, g.zip_map(val(*a), |g, a| g * a)?);
                    }
                }
                Op::Square(x) => send(*x, g.zip_map(val(*x), |g, x| 2.0 * x * g)?),
                Op::Hinge(x) => send(*x, g.zip_map(val(*x), |g, x| if x > 0.0 { g } else { 0.0 })?),
                Op::Tanh(x) => send(*x, g.zip_map(y, |g, y| g * (1.0 - y * y))?),
                Op::Exp(x) => send(*x, g.zip_map(y, |g, y| g * y)?),
                Op::RowSoftmax { x, temperature } => {
                    let mut gx = Matrix::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let (yr, gr) = (y.row(i), g.row(i));
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for (o, (yv, gv)) in gx.row_mut(i).iter_mut().zip(yr.iter().zip(gr)) {
                            *o = temperature * yv * (gv - dot);
                        }
                    }
                    send(*x, gx);
                }
                Op::RowL2Norm(x) => {
                    let xv = val(*x);
                    let mut gx = Matrix::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let norm = xv.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                        if norm == 0.0 {
                            continue;
                        }
                        let (yr, gr) = (y.row(i), g.row(i));
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for (o, (yv, gv)) in gx.row_mut(i).iter_mut().zip(yr.iter().zip(gr)) {
                            *o = (gv - yv * dot) / norm;
                        }
                    }
                    send(*x, gx);
                }
                Op::RowSum(x) | Op::RowMean(x) => {
                    let xv = val(*x);
                    let k = if matches!(op, Op::RowMean(_)) {
                        1.0 / xv.cols() as f64
                    } else {
                        1.0
                    };
                    send(*x, Matrix::from_fn(xv.rows(), xv.cols(), |i, _| g[(i, 0)] * k));
                }
                Op::ColSum(x) | Op::ColMean(x) => {
                    let xv = val(*x);
                    let k = if matches!(op, Op::ColMean(_)) {
                        1.0 / xv.rows() as f64
                    } else {
                        1.0
                    };
                    send(*x, Matrix::from_fn(xv.rows(), xv.cols(), |_, j| g[(0, j)] * k));
                }
                Op::Sum(x) => {
                    let xv = val(*x);
                    send(*x, Matrix::filled(xv.rows(), xv.cols(), g[(0, 0)]));
                }
                Op::Affine { x, scale, .. } => send(*x, g.map(|v| v * scale)),
                Op::Transpose(x) => send(*x, g.transpose()),
                Op::Assemble { parts, .. } => {
                    for (k, p) in parts.iter().enumerate() {
                        send(*p, Matrix::scalar(g.data()[k]));
                    }
                }
            }
        }

        let mut out = Gradients::new();
        for (name, id) in &self.params {
            let value = &eval.values[id.0];
            let g = if id.0 <= root.0 {
                grads[id.0].take()
            } else {
                None
            };
            out.insert(
                name.clone(),
                g.unwrap_or_else(|| Matrix::zeros(value.rows(), value.cols())),
            );
        }
        Ok(out)
    }

    /// For each node up to `root`, whether a parameter reaches it without passing a detach.
    fn param_dependence(&self, root: NodeId) -> Vec<bool> {
        let mut live = vec![false; root.0 + 1];
        for idx in 0..=root.0 {
            live[idx] = match &self.nodes[idx] {
                Op::Param(_) => true,
                Op::Const(_) | Op::Detach(_) => false,
                Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                    live[a.0] || live[b.0]
                }
                Op::Square(x)
                | Op::Hinge(x)
                | Op::Tanh(x)
                | Op::Exp(x)
                | Op::RowSoftmax { x, .. }
                | Op::RowL2Norm(x)
                | Op::RowSum(x)
                | Op::ColSum(x)
                | Op::RowMean(x)
                | Op::ColMean(x)
                | Op::Sum(x)
                | Op::Affine { x, .. }
                | Op::Transpose(x) => live[x.0],
                Op::Assemble { parts, .. } => parts.iter().any(|p| live[p.0]),
            };
        }
        live
    }
}

/// Node values from a forward pass. Can be extended after more nodes are appended
/// to the same graph, which lets callers read intermediate values (for example to
/// mine hard negatives) before building the rest of the graph.
#[derive(Debug, Clone, Default)]
pub struct Evaluation {
    values: Vec<Matrix>,
}

impl Evaluation {
    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Evaluates every node added to `graph` since the last call.
    pub fn extend(&mut self, graph: &Graph, bindings: &Bindings) -> Result<()> {
        for idx in self.values.len()..graph.nodes.len() {
            let op = &graph.nodes[idx];
            let value = self.eval_node(op, bindings).map_err(|e| match e {
                Error::Shape { op, detail, .. } => Error::Shape {
                    node: Some(idx),
                    op,
                    detail,
                },
                other => other,
            })?;
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    node: idx,
                    op: op.name(),
                });
            }
            self.values.push(value);
        }
        Ok(())
    }

    fn eval_node(&self, op: &Op, bindings: &Bindings) -> Result<Matrix> {
        let v = |id: &NodeId| &self.values[id.0];
        let same = |a: &Matrix, b: &Matrix| -> Result<()> {
            if a.shape() != b.shape() {
                return Err(Error::shape(
                    op.name(),
                    format!(
                        "operands {}x{} and {}x{}",
                        a.rows(),
                        a.cols(),
                        b.rows(),
                        b.cols()
                    ),
                ));
            }
            Ok(())
        };
        Ok(match op {
            Op::Param(name) => bindings
                .get(name)
                .cloned()
                .ok_or_else(|| Error::Unbound(name.clone()))?,
            Op::Const(m) => m.clone(),
            Op::MatMul(a, b) => v(a)
                .matmul(v(b))
                .map_err(|_| Error::shape("matmul", format!(
                    "{}x{} times {}x{}",
                    v(a).rows(),
                    v(a).cols(),
                    v(b).rows(),
                    v(b).cols()
                )))?,
            Op::Add(a, b) => {
                same(v(a), v(b))?;
                v(a).zip_map(v(b), |x, y| x + y)?
            }
            Op::Sub(a, b) => {
                same(v(a), v(b))?;
                v(a).zip_map(v(b), |x, y| x - y)?
            }
            Op::Mul(a, b) => {
                same(v(a), v(b))?;
                v(a).zip_map(v(b), |x, y| x * y)?
            }
            Op::Square(x) => v(x).map(|a| a * a),
            Op::Hinge(x) => v(x).map(|a| a.max(0.0)),
            Op::Tanh(x) => v(x).map(f64::tanh),
            Op::Exp(x) => v(x).map(f64::exp),
            Op::RowSoftmax { x, temperature } => {
                let xv = v(x);
                if xv.cols() == 0 {
                    return Err(Error::shape("row_softmax", "no columns"));
                }
                let mut out = Matrix::zeros(xv.rows(), xv.cols());
                for i in 0..xv.rows() {
                    let row = xv.row(i);
                    let max = row
                        .iter()
                        .map(|a| a * temperature)
                        .fold(f64::NEG_INFINITY, f64::max);
                    let o = out.row_mut(i);
                    let mut total = 0.0;
                    for (o, a) in o.iter_mut().zip(row) {
                        *o = (a * temperature - max).exp();
                        total += *o;
                    }
                    o.iter_mut().for_each(|a| *a /= total);
                }
                out
            }
            Op::RowL2Norm(x) => v(x).normalize_rows(),
            Op::RowSum(x) => {
                let xv = v(x);
                Matrix::from_fn(xv.rows(), 1, |i, _| xv.row(i).iter().sum())
            }
            Op::RowMean(x) => {
                let xv = v(x);
                if xv.cols() == 0 {
                    return Err(Error::shape("row_mean", "no columns"));
                }
                let c = xv.cols() as f64;
                Matrix::from_fn(xv.rows(), 1, |i, _| xv.row(i).iter().sum::<f64>() / c)
            }
            Op::ColSum(x) => {
                let xv = v(x);
                Matrix::from_fn(1, xv.cols(), |_, j| (0..xv.rows()).map(|i| xv[(i, j)]).sum())
            }
            Op::ColMean(x) => {
                let xv = v(x);
                if xv.rows() == 0 {
                    return Err(Error::shape("col_mean", "no rows"));
                }
                xv.col_mean()
            }
            Op::Sum(x) => Matrix::scalar(v(x).sum()),
            Op::Affine { x, scale, shift } => v(x).map(|a| scale * a + shift),
            Op::Transpose(x) => v(x).transpose(),
            Op::Detach(x) => v(x).clone(),
            Op::Assemble { parts, rows, cols } => {
                if parts.len() != rows * cols {
                    return Err(Error::shape(
                        "assemble",
                        format!("{} parts for {rows}x{cols}", parts.len()),
                    ));
                }
                let mut data = Vec::with_capacity(parts.len());
                for p in parts {
                    data.push(v(p).as_scalar().ok_or_else(|| {
                        Error::shape("assemble", "parts must be 1x1")
                    })?);
                }
                Matrix::from_vec(*rows, *cols, data)?
            }
        })
    }
}

/// Value of `root` for the given leaf bindings.
pub fn evaluate(graph: &Graph, root: NodeId, bindings: &Bindings) -> Result<Matrix> {
    let eval = graph.forward(bindings)?;
    Ok(eval.value(root).clone())
}

/// Gradients of a scalar `root` restricted to the parameters named in `wrt`.
pub fn gradient(
    graph: &Graph,
    root: NodeId,
    bindings: &Bindings,
    wrt: &[&str],
) -> Result<Gradients> {
    let eval = graph.forward(bindings)?;
    let mut all = graph.backward(&eval, root)?;
    let mut out = Gradients::new();
    for name in wrt {
        let g = all.remove(*name).ok_or_else(|| Error::Unbound(name.to_string()))?;
        out.insert(name.to_string(), g);
    }
    Ok(out)
}

/// Compares reverse-mode gradients with central differences of step `step`.
/// Returns the largest entrywise relative error, using `max(|a|, |b|, 1e-8)` as the
/// denominator.
pub fn finite_diff_check(
    graph: &Graph,
    root: NodeId,
    bindings: &Bindings,
    wrt: &[&str],
    step: f64,
) -> Result<f64> {
    if step.is_nan() || step <= 0.0 {
        return Err(Error::Config(format!("finite-difference step must be > 0, got {step}")));
    }
    let analytic = gradient(graph, root, bindings, wrt)?;
    let scalar = |b: &Bindings| -> Result<f64> {
        let v = evaluate(graph, root, b)?;
        v.as_scalar().ok_or(Error::NonScalarRoot {
            rows: v.rows(),
            cols: v.cols(),
        })
    };
    let mut worst = 0.0f64;
    let mut probe = bindings.clone();
    for name in wrt {
        let a = &analytic[*name];
        for k in 0..a.data().len() {
            let original = bindings.get(name).expect("bound by gradient()").data()[k];
            probe.get_mut(name).unwrap().data_mut()[k] = original + step;
            let plus = scalar(&probe)?;
            probe.get_mut(name).unwrap().data_mut()[k] = original - step;
            let minus = scalar(&probe)?;
            probe.get_mut(name).unwrap().data_mut()[k] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let exact = a.data()[k];
            let denom = exact.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((exact - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::RngStream;

    fn scalar_of(g: &Graph, root: NodeId, b: &Bindings) -> f64 {
        evaluate(g, root, b).unwrap().as_scalar().unwrap()
    }

    #[test]
    fn identity_multiply() {
        let mut g = Graph::new();
        let a = g.param("a");
        let b = g.param("b");
        let ab = g.matmul(a, b);
        let binds = Bindings::new()
            .with("a", Matrix::identity(2))
            .with("b", Matrix::from_rows(&[[3.0, 0.0], [0.0, 4.0]]));
        let out = evaluate(&g, ab, &binds).unwrap();
        assert_eq!(out, Matrix::from_rows(&[[3.0, 0.0], [0.0, 4.0]]));
    }

    #[test]
    fn hinge_forward() {
        let mut g = Graph::new();
        let x = g.param("x");
        let h = g.hinge(x);
        let binds = Bindings::new().with("x", Matrix::from_rows(&[[-1.0, 0.0, 2.0]]));
        assert_eq!(
            evaluate(&g, h, &binds).unwrap(),
            Matrix::from_rows(&[[0.0, 0.0, 2.0]])
        );
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut g = Graph::new();
        let m = g.param("m");
        let s = g.row_softmax(m, 9.0);
        let binds = Bindings::new().with("m", Matrix::from_rows(&[[0.0, 0.0]]));
        assert_eq!(
            evaluate(&g, s, &binds).unwrap(),
            Matrix::from_rows(&[[0.5, 0.5]])
        );
    }

    #[test]
    fn shape_error_names_node() {
        let mut g = Graph::new();
        let a = g.param("a");
        let b = g.param("b");
        let _ = g.add(a, b);
        let binds = Bindings::new()
            .with("a", Matrix::zeros(2, 2))
            .with("b", Matrix::zeros(3, 2));
        match g.forward(&binds) {
            Err(Error::Shape { node, op, .. }) => {
                assert_eq!(node, Some(2));
                assert_eq!(op, "add");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_intermediate_is_reported() {
        let mut g = Graph::new();
        let x = g.param("x");
        let e = g.exp(x);
        let binds = Bindings::new().with("x", Matrix::scalar(1000.0));
        assert!(matches!(
            g.forward(&binds),
            Err(Error::NonFinite { node, .. }) if node == e.index()
        ));
    }

    #[test]
    fn unbound_leaf() {
        let mut g = Graph::new();
        let x = g.param("x");
        let _ = g.sum(x);
        assert!(matches!(g.forward(&Bindings::new()), Err(Error::Unbound(_))));
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let x = g.param("x");
        let s = g.sum(x);
        let binds = Bindings::new().with("x", Matrix::filled(3, 2, 0.3));
        let grads = gradient(&g, s, &binds, &["x"]).unwrap();
        assert_eq!(grads["x"], Matrix::filled(3, 2, 1.0));
    }

    #[test]
    fn hinge_subgradient_at_kink_is_zero() {
        let mut g = Graph::new();
        let x = g.param("x");
        let h = g.hinge(x);
        let binds = Bindings::new().with("x", Matrix::scalar(0.0));
        let grads = gradient(&g, h, &binds, &["x"]).unwrap();
        assert_eq!(grads["x"].as_scalar(), Some(0.0));
    }

    #[test]
    fn tanh_gradient_matches_finite_difference() {
        let mut g = Graph::new();
        let x = g.param("x");
        let t = g.tanh(x);
        let binds = Bindings::new().with("x", Matrix::scalar(0.5));
        let grad = gradient(&g, t, &binds, &["x"]).unwrap()["x"][(0, 0)];

        let h = 1e-5;
        let fd = ((0.5f64 + h).tanh() - (0.5f64 - h).tanh()) / (2.0 * h);
        assert!((grad - fd).abs() < 1e-9);
        assert!((grad - 0.786448).abs() < 1e-6);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut g = Graph::new();
        let x = g.param("x");
        let binds = Bindings::new().with("x", Matrix::zeros(2, 2));
        assert!(matches!(
            gradient(&g, x, &binds, &["x"]),
            Err(Error::NonScalarRoot { rows: 2, cols: 2 })
        ));
    }

    #[test]
    fn quadratic_finite_difference() {
        let mut rng = RngStream::new(5);
        let mut g = Graph::new();
        let x = g.param("x");
        let xt = g.transpose(x);
        let xxt = g.matmul(x, xt);
        let root = g.sum(xxt);
        let xv = rng.normal_matrix(3, 4, 1.0);
        let binds = Bindings::new().with("x", xv.clone());
        assert!(finite_diff_check(&g, root, &binds, &["x"], 1e-5).unwrap() < 1e-6);
    }

    #[test]
    fn constant_root_has_zero_error() {
        let mut g = Graph::new();
        let x = g.param("x");
        let zero = g.scale(x, 0.0);
        let c = g.constant(Matrix::filled(2, 2, 1.5));
        let s = g.add(zero, c);
        let root = g.sum(s);
        let binds = Bindings::new().with("x", Matrix::filled(2, 2, 0.1));
        assert_eq!(finite_diff_check(&g, root, &binds, &["x"], 1e-5).unwrap(), 0.0);
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut g = Graph::new();
        let x = g.param("x");
        let d = g.detach(x);
        let sq = g.square(d);
        let root = g.sum(sq);
        let binds = Bindings::new().with("x", Matrix::filled(2, 2, 0.7));
        let grads = gradient(&g, root, &binds, &["x"]).unwrap();
        assert!(grads["x"].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn every_op_gradient_matches_finite_difference() {
        let mut rng = RngStream::new(99);
        let mut g = Graph::new();
        let a = g.param("a");
        let b = g.param("b");
        let w = g.param("w");
        let ab = g.matmul(a, b); // 3x3
        let sm = g.row_softmax(ab, 2.0);
        let nrm = g.row_l2_norm(ab);
        let t = g.tanh(nrm);
        let sq = g.square(t);
        let mixed = g.mul(sm, sq);
        let e = g.exp(mixed);
        let aff = g.affine(e, 0.7, -0.2);
        let tr = g.transpose(aff);
        let diff = g.sub(tr, sm);
        let sum_ab = g.add(diff, ab);
        let rs = g.row_sum(sum_ab);
        let rm = g.row_mean(sum_ab);
        let cs = g.col_sum(sum_ab);
        let cm = g.col_mean(sum_ab);
        let rs_t = g.transpose(rs);
        let row_part = g.add(rs_t, cs);
        let rm_t = g.transpose(rm);
        let col_part = g.mul(rm_t, cm);
        let both = g.add(row_part, col_part);
        let weighted = g.matmul(both, w); // 1x1
        let h = g.hinge(weighted);
        let s00 = g.sum(h);
        let s01 = g.tanh(s00);
        let packed = g.assemble(vec![s00, s01], 1, 2);
        let root = g.sum(packed);

        let binds = Bindings::new()
            .with("a", rng.normal_matrix(3, 2, 1.0))
            .with("b", rng.normal_matrix(2, 3, 1.0))
            .with("w", Matrix::from_rows(&[[0.9], [0.4], [1.1]]));
        assert!(scalar_of(&g, weighted, &binds) > 1e-3, "test point must sit off the kink");
        let err = finite_diff_check(&g, root, &binds, &["a", "b", "w"], 1e-5).unwrap();
        assert!(err < 1e-5, "relative error {err}");
    }

    #[test]
    fn evaluation_can_be_extended() {
        let mut g = Graph::new();
        let x = g.param("x");
        let binds = Bindings::new().with("x", Matrix::filled(1, 2, 2.0));
        let mut eval = g.forward(&binds).unwrap();
        let s = g.sum(x);
        eval.extend(&g, &binds).unwrap();
        assert_eq!(eval.value(s).as_scalar(), Some(4.0));
        let grads = g.backward(&eval, s).unwrap();
        assert_eq!(grads["x"], Matrix::filled(1, 2, 1.0));
    }

    #[test]
    fn repeated_evaluation_is_bit_identical() {
        let mut rng = RngStream::new(1);
        let mut g = Graph::new();
        let x = g.param("x");
        let sm = g.row_softmax(x, 9.0);
        let n = g.row_l2_norm(sm);
        let root = g.sum(n);
        let binds = Bindings::new().with("x", rng.normal_matrix(4, 5, 1.0));
        let a = gradient(&g, root, &binds, &["x"]).unwrap();
        let b = gradient(&g, root, &binds, &["x"]).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            evaluate(&g, root, &binds).unwrap().data()[0].to_bits(),
            evaluate(&g, root, &binds).unwrap().data()[0].to_bits()
        );
    }
}
