//! Reverse-mode automatic differentiation over a recorded tape.
//!
//! Forward calls append nodes to the tape; `backward` replays it in reverse
//! and accumulates exact gradients. Node handles are plain indices, valid for
//! the lifetime of the graph that produced them. A graph is built per
//! episode and dropped afterwards.

use std::cell::RefCell;

use super::rng::RngStream;
use super::tensor::Tensor;
use super::GradError;

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    /// a[p×q] · b[q×r]
    Matmul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    /// Elementwise product of same-shaped tensors.
    Mul(NodeId, NodeId),
    /// x[b×n] + r[1×n], row broadcast.
    AddRow(NodeId, NodeId),
    /// x[b×n] − r[1×n], row broadcast.
    SubRow(NodeId, NodeId),
    /// x[b×n] ⊙ r[1×n], row broadcast.
    MulRow(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    /// Mask already folded with the 1/(1−p) survivor scale.
    Dropout(NodeId, Vec<f64>),
    /// Row-wise stable softmax.
    SoftmaxRows(NodeId),
    /// [k×d] -> [1×d] arithmetic mean over rows.
    MeanRows(NodeId),
    /// [b×n] -> [b×1] sum along each row.
    SumRows(NodeId),
    /// -> [1] sum of all elements.
    Sum(NodeId),
    /// Columns [b×1] each, stacked into [b×n].
    ConcatCols(Vec<NodeId>),
    /// Mean over rows of −log softmax(row)[label]; stable log-sum-exp form.
    CrossEntropyMean(NodeId, Vec<usize>),
    /// Same data, new shape.
    Reshape(NodeId),
}

struct Node {
    value: Tensor,
    grad: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Dropout / head execution mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    fn push(&self, value: Tensor, op: Op) -> NodeId {
        let mut nodes = self.nodes.borrow_mut();
        let grad = Tensor::zeros(value.shape().to_vec());
        nodes.push(Node { value, grad, op });
        nodes.len() - 1
    }

    pub fn constant(&self, t: Tensor) -> NodeId {
        self.push(t, Op::Constant)
    }

    /// A trainable leaf; its gradient is retrievable after `backward`.
    pub fn leaf(&self, t: Tensor) -> NodeId {
        self.push(t, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> Tensor {
        self.nodes.borrow()[id].value.clone()
    }

    pub fn grad(&self, id: NodeId) -> Tensor {
        self.nodes.borrow()[id].grad.clone()
    }

    pub fn scalar_value(&self, id: NodeId) -> Result<f64, GradError> {
        self.nodes.borrow()[id].value.scalar_value()
    }

    fn shape_of(&self, id: NodeId) -> (usize, usize) {
        let nodes = self.nodes.borrow();
        (nodes[id].value.rows(), nodes[id].value.cols())
    }

    fn binary_same_shape(&self, a: NodeId, b: NodeId, name: &str) -> Result<(), GradError> {
        let (ar, ac) = self.shape_of(a);
        let (br, bc) = self.shape_of(b);
        if (ar, ac) != (br, bc) {
            return Err(GradError::ShapeMismatch {
                op: name.into(),
                lhs: vec![ar, ac],
                rhs: vec![br, bc],
            });
        }
        Ok(())
    }

    pub fn matmul(&self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        let (p, q) = self.shape_of(a);
        let (q2, r) = self.shape_of(b);
        if q != q2 {
            return Err(GradError::ShapeMismatch {
                op: "matmul".into(),
                lhs: vec![p, q],
                rhs: vec![q2, r],
            });
        }
        let out = {
            let nodes = self.nodes.borrow();
            let av = nodes[a].value.data();
            let bv = nodes[b].value.data();
            let mut data = vec![0.0; p * r];
            for i in 0..p {
                for k in 0..q {
                    let aik = av[i * q + k];
                    for j in 0..r {
                        data[i * r + j] += aik * bv[k * r + j];
                    }
                }
            }
            Tensor::new(vec![p, r], data)?
        };
        Ok(self.push(out, Op::Matmul(a, b)))
    }

    pub fn add(&self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        self.binary_same_shape(a, b, "add")?;
        let out = {
            let nodes = self.nodes.borrow();
            let mut t = nodes[a].value.clone();
            for (x, y) in t.data_mut().iter_mut().zip(nodes[b].value.data()) {
                *x += y;
            }
            t
        };
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        self.binary_same_shape(a, b, "sub")?;
        let out = {
            let nodes = self.nodes.borrow();
            let mut t = nodes[a].value.clone();
            for (x, y) in t.data_mut().iter_mut().zip(nodes[b].value.data()) {
                *x -= y;
            }
            t
        };
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        self.binary_same_shape(a, b, "mul")?;
        let out = {
            let nodes = self.nodes.borrow();
            let mut t = nodes[a].value.clone();
            for (x, y) in t.data_mut().iter_mut().zip(nodes[b].value.data()) {
                *x *= y;
            }
            t
        };
        Ok(self.push(out, Op::Mul(a, b)))
    }

    fn row_broadcast(
        &self,
        x: NodeId,
        r: NodeId,
        name: &str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, GradError> {
        let (b, n) = self.shape_of(x);
        let (rr, rc) = self.shape_of(r);
        if rr != 1 || rc != n {
            return Err(GradError::ShapeMismatch {
                op: name.into(),
                lhs: vec![b, n],
                rhs: vec![rr, rc],
            });
        }
        let nodes = self.nodes.borrow();
        let xv = nodes[x].value.data();
        let rv = nodes[r].value.data();
        let mut data = vec![0.0; b * n];
        for i in 0..b {
            for j in 0..n {
                data[i * n + j] = f(xv[i * n + j], rv[j]);
            }
        }
        Tensor::new(vec![b, n], data)
    }

    /// x[b×n] + r[1×n].
    pub fn add_row(&self, x: NodeId, r: NodeId) -> Result<NodeId, GradError> {
        let out = self.row_broadcast(x, r, "add_row", |a, b| a + b)?;
        Ok(self.push(out, Op::AddRow(x, r)))
    }

    /// x[b×n] − r[1×n].
    pub fn sub_row(&self, x: NodeId, r: NodeId) -> Result<NodeId, GradError> {
        let out = self.row_broadcast(x, r, "sub_row", |a, b| a - b)?;
        Ok(self.push(out, Op::SubRow(x, r)))
    }

    /// x[b×n] ⊙ r[1×n].
    pub fn mul_row(&self, x: NodeId, r: NodeId) -> Result<NodeId, GradError> {
        let out = self.row_broadcast(x, r, "mul_row", |a, b| a * b)?;
        Ok(self.push(out, Op::MulRow(x, r)))
    }

    pub fn scale(&self, x: NodeId, c: f64) -> NodeId {
        let out = {
            let nodes = self.nodes.borrow();
            let mut t = nodes[x].value.clone();
            for v in t.data_mut() {
                *v *= c;
            }
            t
        };
        self.push(out, Op::Scale(x, c))
    }

    pub fn relu(&self, x: NodeId) -> NodeId {
        let out = {
            let nodes = self.nodes.borrow();
            let mut t = nodes[x].value.clone();
            for v in t.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            t
        };
        self.push(out, Op::Relu(x))
    }

    /// Inverted dropout: survivors scaled by 1/(1−p) so eval is identity.
    /// In eval mode the input node is returned untouched.
    pub fn dropout(
        &self,
        x: NodeId,
        p: f64,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<NodeId, GradError> {
        if !(0.0..1.0).contains(&p) {
            return Err(GradError::InvalidConfig(format!(
                "dropout probability must be in [0,1), got {p}"
            )));
        }
        if mode == Mode::Eval || p == 0.0 {
            return Ok(x);
        }
        let keep_scale = 1.0 / (1.0 - p);
        let (mask, out) = {
            let nodes = self.nodes.borrow();
            let xv = nodes[x].value.data();
            let mut mask = Vec::with_capacity(xv.len());
            let mut data = Vec::with_capacity(xv.len());
            for &v in xv {
                let m = if rng.next_f64() < p { 0.0 } else { keep_scale };
                mask.push(m);
                data.push(v * m);
            }
            (mask, Tensor::new(nodes[x].value.shape().to_vec(), data)?)
        };
        Ok(self.push(out, Op::Dropout(x, mask)))
    }

    /// Row-wise softmax with max subtraction; each row sums to 1.
    pub fn softmax_rows(&self, x: NodeId) -> NodeId {
        let out = {
            let nodes = self.nodes.borrow();
            let t = &nodes[x].value;
            let (b, n) = (t.rows(), t.cols());
            let mut data = vec![0.0; b * n];
            for i in 0..b {
                let row = t.row_slice(i);
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for j in 0..n {
                    let e = (row[j] - m).exp();
                    data[i * n + j] = e;
                    sum += e;
                }
                for j in 0..n {
                    data[i * n + j] /= sum;
                }
            }
            Tensor::new(vec![b, n], data).expect("softmax shape")
        };
        self.push(out, Op::SoftmaxRows(x))
    }

    /// [k×d] -> [1×d] mean over rows.
    pub fn mean_rows(&self, x: NodeId) -> NodeId {
        let out = {
            let nodes = self.nodes.borrow();
            let t = &nodes[x].value;
            let (k, d) = (t.rows(), t.cols());
            let mut data = vec![0.0; d];
            for i in 0..k {
                for j in 0..d {
                    data[j] += t.data()[i * d + j];
                }
            }
            for v in &mut data {
                *v /= k as f64;
            }
            Tensor::new(vec![1, d], data).expect("mean shape")
        };
        self.push(out, Op::MeanRows(x))
    }

    /// [b×n] -> [b×1] row sums.
    pub fn sum_rows(&self, x: NodeId) -> NodeId {
        let out = {
            let nodes = self.nodes.borrow();
            let t = &nodes[x].value;
            let (b, n) = (t.rows(), t.cols());
            let mut data = vec![0.0; b];
            for i in 0..b {
                data[i] = t.row_slice(i).iter().sum();
            }
            let _ = n;
            Tensor::new(vec![b, 1], data).expect("sum_rows shape")
        };
        self.push(out, Op::SumRows(x))
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum(&self, x: NodeId) -> NodeId {
        let out = {
            let nodes = self.nodes.borrow();
            Tensor::scalar(nodes[x].value.data().iter().sum())
        };
        self.push(out, Op::Sum(x))
    }

    /// View the same elements under a new shape of equal size.
    pub fn reshape(&self, x: NodeId, shape: Vec<usize>) -> Result<NodeId, GradError> {
        let out = {
            let nodes = self.nodes.borrow();
            Tensor::new(shape, nodes[x].value.data().to_vec())?
        };
        Ok(self.push(out, Op::Reshape(x)))
    }

    /// Stack [b×1] columns into [b×n].
    pub fn concat_cols(&self, cols: &[NodeId]) -> Result<NodeId, GradError> {
        if cols.is_empty() {
            return Err(GradError::InvalidConfig("concat_cols of nothing".into()));
        }
        let (b, _) = self.shape_of(cols[0]);
        for &c in cols {
            let (r, w) = self.shape_of(c);
            if r != b || w != 1 {
                return Err(GradError::ShapeMismatch {
                    op: "concat_cols".into(),
                    lhs: vec![b, 1],
                    rhs: vec![r, w],
                });
            }
        }
        let n = cols.len();
        let out = {
            let nodes = self.nodes.borrow();
            let mut data = vec![0.0; b * n];
            for (j, &c) in cols.iter().enumerate() {
                for i in 0..b {
                    data[i * n + j] = nodes[c].value.data()[i];
                }
            }
            Tensor::new(vec![b, n], data)?
        };
        Ok(self.push(out, Op::ConcatCols(cols.to_vec())))
    }

    /// Mean cross-entropy over rows of a logits matrix.
    pub fn cross_entropy_mean(
        &self,
        logits: NodeId,
        labels: &[usize],
    ) -> Result<NodeId, GradError> {
        let (b, n) = self.shape_of(logits);
        if labels.len() != b {
            return Err(GradError::ShapeMismatch {
                op: "cross_entropy_mean".into(),
                lhs: vec![b, n],
                rhs: vec![labels.len()],
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n) {
            return Err(GradError::IndexOutOfRange { index: bad, len: n });
        }
        let out = {
            let nodes = self.nodes.borrow();
            let t = &nodes[logits].value;
            let mut total = 0.0;
            for (i, &label) in labels.iter().enumerate() {
                let row = t.row_slice(i);
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
                total += lse - row[label];
            }
            Tensor::scalar(total / b as f64)
        };
        Ok(self.push(out, Op::CrossEntropyMean(logits, labels.to_vec())))
    }

    // ── Spec-level convenience ops ───────────────────────────────────

    /// x·W + bias, the FC building block.
    pub fn affine(&self, x: NodeId, w: NodeId, bias: NodeId) -> Result<NodeId, GradError> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, bias)
    }

    /// Σ_i (a_i − b_i)² for two equal-length vectors, as a scalar node.
    pub fn sq_euclidean(&self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        Ok(self.sum(sq))
    }

    /// −log softmax(logits)[label] for a single logits row.
    pub fn cross_entropy(&self, logits: NodeId, label: usize) -> Result<NodeId, GradError> {
        self.cross_entropy_mean(logits, &[label])
    }

    /// Reverse accumulation from a scalar root. Repeated calls without
    /// zeroing accumulate into the same grad buffers.
    pub fn backward(&self, root: NodeId) -> Result<(), GradError> {
        let mut nodes = self.nodes.borrow_mut();
        if !nodes[root].value.is_scalar() {
            return Err(GradError::NotScalar(nodes[root].value.shape().to_vec()));
        }
        // propagate into a scratch buffer, then fold into the stored grads,
        // so repeated backward calls accumulate instead of compounding
        let mut local: Vec<Tensor> = nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.shape().to_vec()))
            .collect();
        local[root].data_mut()[0] = 1.0;
        for id in (0..=root).rev() {
            let op = nodes[id].op.clone();
            let grad = local[id].clone();
            match op {
                Op::Leaf | Op::Constant => {}
                Op::Matmul(a, b) => {
                    let (p, q) = (nodes[a].value.rows(), nodes[a].value.cols());
                    let r = nodes[b].value.cols();
                    let av = nodes[a].value.data().to_vec();
                    let bv = nodes[b].value.data().to_vec();
                    let g = grad.data();
                    {
                        let ga = local[a].data_mut();
                        for i in 0..p {
                            for k in 0..q {
                                let mut acc = 0.0;
                                for j in 0..r {
                                    acc += g[i * r + j] * bv[k * r + j];
                                }
                                ga[i * q + k] += acc;
                            }
                        }
                    }
                    {
                        let gb = local[b].data_mut();
                        for k in 0..q {
                            for j in 0..r {
                                let mut acc = 0.0;
                                for i in 0..p {
                                    acc += av[i * q + k] * g[i * r + j];
                                }
                                gb[k * r + j] += acc;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for (x, g) in local[a].data_mut().iter_mut().zip(grad.data()) {
                        *x += g;
                    }
                    for (x, g) in local[b].data_mut().iter_mut().zip(grad.data()) {
                        *x += g;
                    }
                }
                Op::Sub(a, b) => {
                    for (x, g) in local[a].data_mut().iter_mut().zip(grad.data()) {
                        *x += g;
                    }
                    for (x, g) in local[b].data_mut().iter_mut().zip(grad.data()) {
                        *x -= g;
                    }
                }
                Op::Mul(a, b) => {
                    let av = nodes[a].value.data().to_vec();
                    let bv = nodes[b].value.data().to_vec();
                    for (i, g) in grad.data().iter().enumerate() {
                        local[a].data_mut()[i] += g * bv[i];
                    }
                    for (i, g) in grad.data().iter().enumerate() {
                        local[b].data_mut()[i] += g * av[i];
                    }
                }
                Op::AddRow(x, r) => {
                    let n = nodes[r].value.cols();
                    for (i, g) in grad.data().iter().enumerate() {
                        local[x].data_mut()[i] += g;
                    }
                    for (i, g) in grad.data().iter().enumerate() {
                        local[r].data_mut()[i % n] += g;
                    }
                }
                Op::SubRow(x, r) => {
                    let n = nodes[r].value.cols();
                    for (i, g) in grad.data().iter().enumerate() {
                        local[x].data_mut()[i] += g;
                    }
                    for (i, g) in grad.data().iter().enumerate() {
                        local[r].data_mut()[i % n] -= g;
                    }
                }
                Op::MulRow(x, r) => {
                    let n = nodes[r].value.cols();
                    let xv = nodes[x].value.data().to_vec();
                    let rv = nodes[r].value.data().to_vec();
                    for (i, g) in grad.data().iter().enumerate() {
                        local[x].data_mut()[i] += g * rv[i % n];
                    }
                    for (i, g) in grad.data().iter().enumerate() {
                        local[r].data_mut()[i % n] += g * xv[i];
                    }
                }
                Op::Scale(x, c) => {
                    for (i, g) in grad.data().iter().enumerate() {
                        local[x].data_mut()[i] += g * c;
                    }
                }
                Op::Relu(x) => {
                    let xv = nodes[x].value.data().to_vec();
                    for (i, g) in grad.data().iter().enumerate() {
                        if xv[i] > 0.0 {
                            local[x].data_mut()[i] += g;
                        }
                    }
                }
                Op::Dropout(x, mask) => {
                    for (i, g) in grad.data().iter().enumerate() {
                        local[x].data_mut()[i] += g * mask[i];
                    }
                }
                Op::SoftmaxRows(x) => {
                    // dx = y ⊙ (g − ⟨g, y⟩) per row, with y the forward output
                    let y = nodes[id].value.clone();
                    let (b, n) = (y.rows(), y.cols());
                    for i in 0..b {
                        let yr = y.row_slice(i);
                        let gr = &grad.data()[i * n..(i + 1) * n];
                        let dot: f64 = gr.iter().zip(yr).map(|(g, y)| g * y).sum();
                        for j in 0..n {
                            local[x].data_mut()[i * n + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                }
                Op::MeanRows(x) => {
                    let (k, d) = (nodes[x].value.rows(), nodes[x].value.cols());
                    let inv = 1.0 / k as f64;
                    for i in 0..k {
                        for j in 0..d {
                            local[x].data_mut()[i * d + j] += grad.data()[j] * inv;
                        }
                    }
                }
                Op::SumRows(x) => {
                    let (b, n) = (nodes[x].value.rows(), nodes[x].value.cols());
                    for i in 0..b {
                        for j in 0..n {
                            local[x].data_mut()[i * n + j] += grad.data()[i];
                        }
                    }
                }
                Op::Sum(x) => {
                    let g = grad.data()[0];
                    for v in local[x].data_mut() {
                        *v += g;
                    }
                }
                Op::ConcatCols(cols) => {
                    let b = nodes[id].value.rows();
                    let n = cols.len();
                    for (j, &c) in cols.iter().enumerate() {
                        for i in 0..b {
                            local[c].data_mut()[i] += grad.data()[i * n + j];
                        }
                    }
                }
                Op::CrossEntropyMean(logits, labels) => {
                    // d logits = (softmax(row) − onehot(label)) · g / b
                    let t = nodes[logits].value.clone();
                    let (b, n) = (t.rows(), t.cols());
                    let g = grad.data()[0] / b as f64;
                    for (i, &label) in labels.iter().enumerate() {
                        let row = t.row_slice(i);
                        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let exps: Vec<f64> = row.iter().map(|&v| (v - m).exp()).collect();
                        let sum: f64 = exps.iter().sum();
                        for j in 0..n {
                            let p = exps[j] / sum;
                            let onehot = if j == label { 1.0 } else { 0.0 };
                            local[logits].data_mut()[i * n + j] += (p - onehot) * g;
                        }
                    }
                }
                Op::Reshape(x) => {
                    for (i, g) in grad.data().iter().enumerate() {
                        local[x].data_mut()[i] += g;
                    }
                }
            }
        }
        for (node, l) in nodes.iter_mut().zip(&local) {
            for (dst, src) in node.grad.data_mut().iter_mut().zip(l.data()) {
                *dst += src;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn affine_identity_weights() {
        let g = Graph::new();
        let x = g.constant(Tensor::row(vec![1.0, 2.0]));
        let w = g.leaf(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let b = g.leaf(Tensor::row(vec![0.0, 0.0]));
        let y = g.affine(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0]);
    }

    #[test]
    fn affine_zero_input_passes_bias() {
        let g = Graph::new();
        let x = g.constant(Tensor::row(vec![0.0, 0.0]));
        let w = g.leaf(Tensor::from_rows(&[vec![2.0, -1.0], vec![5.0, 0.5]]).unwrap());
        let b = g.leaf(Tensor::row(vec![3.0, -1.0]));
        let y = g.affine(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, -1.0]);
    }

    #[test]
    fn affine_matches_triple_loop_oracle() {
        let mut rng = RngStream::new(9, "affine-oracle");
        let x: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.next_normal()).collect())
            .collect();
        let w: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..2).map(|_| rng.next_normal()).collect())
            .collect();
        let bias: Vec<f64> = (0..2).map(|_| rng.next_normal()).collect();

        // independent triple-loop oracle
        let mut expect = vec![vec![0.0; 2]; 3];
        for i in 0..3 {
            for j in 0..2 {
                let mut acc = bias[j];
                for k in 0..4 {
                    acc += x[i][k] * w[k][j];
                }
                expect[i][j] = acc;
            }
        }

        let g = Graph::new();
        let xn = g.constant(Tensor::from_rows(&x).unwrap());
        let wn = g.leaf(Tensor::from_rows(&w).unwrap());
        let bn = g.leaf(Tensor::row(bias));
        let y = g.affine(xn, wn, bn).unwrap();
        let got = g.value(y);
        for i in 0..3 {
            for j in 0..2 {
                assert!(close(got.row_slice(i)[j], expect[i][j], 1e-12));
            }
        }
    }

    #[test]
    fn affine_shape_mismatch_names_both_shapes() {
        let g = Graph::new();
        let x = g.constant(Tensor::zeros(vec![1, 3]));
        let w = g.leaf(Tensor::zeros(vec![2, 2]));
        let b = g.leaf(Tensor::zeros(vec![1, 2]));
        let err = g.affine(x, w, b).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("[1, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn relu_gates_negatives() {
        let g = Graph::new();
        let x = g.leaf(Tensor::row(vec![-1.0, 0.0, 2.0]));
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn relu_all_negative_zero_grad() {
        let g = Graph::new();
        let x = g.leaf(Tensor::row(vec![-3.0, -0.5]));
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 0.0]);
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).data(), &[0.0, 0.0]);
    }

    #[test]
    fn softmax_constant_row_is_uniform() {
        let g = Graph::new();
        for c in [-40.0, 0.0, 17.5] {
            let x = g.constant(Tensor::row(vec![c, c, c]));
            let y = g.softmax_rows(x);
            for &v in g.value(y).data() {
                assert!(close(v, 1.0 / 3.0, 1e-12));
            }
        }
    }

    #[test]
    fn softmax_single_element() {
        let g = Graph::new();
        let x = g.constant(Tensor::row(vec![123.0]));
        let y = g.softmax_rows(x);
        assert_eq!(g.value(y).data(), &[1.0]);
    }

    #[test]
    fn softmax_hand_oracle() {
        // softmax([1,0]) = (e/(e+1), 1/(e+1))
        let g = Graph::new();
        let x = g.constant(Tensor::row(vec![1.0, 0.0]));
        let y = g.softmax_rows(x);
        let e = std::f64::consts::E;
        assert!(close(g.value(y).data()[0], e / (e + 1.0), 1e-12));
        assert!(close(g.value(y).data()[1], 1.0 / (e + 1.0), 1e-12));
    }

    #[test]
    fn sq_euclidean_basics() {
        let g = Graph::new();
        let a = g.constant(Tensor::row(vec![1.0, 0.0]));
        let b = g.constant(Tensor::row(vec![0.0, 0.0]));
        let d = g.sq_euclidean(a, b).unwrap();
        assert_eq!(g.scalar_value(d).unwrap(), 1.0);
        let d0 = g.sq_euclidean(a, a).unwrap();
        assert_eq!(g.scalar_value(d0).unwrap(), 0.0);
    }

    #[test]
    fn sq_euclidean_640d_matches_scalar_loop() {
        let mut rng = RngStream::new(3, "sqe");
        let a: Vec<f64> = (0..640).map(|_| rng.next_normal()).collect();
        let b: Vec<f64> = (0..640).map(|_| rng.next_normal()).collect();
        let expect: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        let g = Graph::new();
        let an = g.leaf(Tensor::row(a.clone()));
        let bn = g.constant(Tensor::row(b));
        let d = g.sq_euclidean(an, bn).unwrap();
        assert!(close(g.scalar_value(d).unwrap(), expect, 1e-12 * expect.max(1.0)));
        // backward: ∂/∂a = 2(a−b)
        g.backward(d).unwrap();
        let grad = g.grad(an);
        let val_b = g.value(bn);
        for i in 0..640 {
            assert!(close(grad.data()[i], 2.0 * (a[i] - val_b.data()[i]), 1e-10));
        }
    }

    #[test]
    fn cross_entropy_uniform_is_ln_n() {
        let g = Graph::new();
        let x = g.constant(Tensor::row(vec![0.7; 5]));
        let l = g.cross_entropy(x, 2).unwrap();
        assert!(close(g.scalar_value(l).unwrap(), (5.0f64).ln(), 1e-12));
    }

    #[test]
    fn cross_entropy_saturated_margin() {
        let g = Graph::new();
        let x = g.constant(Tensor::row(vec![100.0, 0.0]));
        let l = g.cross_entropy(x, 0).unwrap();
        assert!(g.scalar_value(l).unwrap() < 1e-12);
    }

    #[test]
    fn cross_entropy_hand_oracle() {
        // −ln(softmax([1,0])[1]) = ln(1 + e) = 1.31326...
        let g = Graph::new();
        let x = g.constant(Tensor::row(vec![1.0, 0.0]));
        let l = g.cross_entropy(x, 1).unwrap();
        let expect = (1.0 + std::f64::consts::E).ln();
        assert!(close(g.scalar_value(l).unwrap(), expect, 1e-12));
    }

    #[test]
    fn cross_entropy_label_out_of_range() {
        let g = Graph::new();
        let x = g.constant(Tensor::row(vec![0.0, 0.0]));
        assert!(matches!(
            g.cross_entropy(x, 2),
            Err(GradError::IndexOutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn backward_of_quadratic() {
        // loss = ‖w − 0‖², w = (3) → grad = (6)
        let g = Graph::new();
        let w = g.leaf(Tensor::row(vec![3.0]));
        let zero = g.constant(Tensor::row(vec![0.0]));
        let loss = g.sq_euclidean(w, zero).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(w).data(), &[6.0]);
    }

    #[test]
    fn unused_parameter_keeps_zero_grad() {
        let g = Graph::new();
        let w = g.leaf(Tensor::row(vec![3.0]));
        let unused = g.leaf(Tensor::row(vec![5.0]));
        let zero = g.constant(Tensor::row(vec![0.0]));
        let loss = g.sq_euclidean(w, zero).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(unused).data(), &[0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let g = Graph::new();
        let x = g.leaf(Tensor::row(vec![1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(GradError::NotScalar(_))));
    }

    #[test]
    fn repeated_backward_accumulates() {
        let g = Graph::new();
        let w = g.leaf(Tensor::row(vec![3.0]));
        let zero = g.constant(Tensor::row(vec![0.0]));
        let loss = g.sq_euclidean(w, zero).unwrap();
        g.backward(loss).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(w).data(), &[12.0]);
    }

    #[test]
    fn dropout_p_zero_and_eval_are_identity() {
        let g = Graph::new();
        let mut rng = RngStream::new(1, "drop");
        let x = g.constant(Tensor::row(vec![1.0, -2.0, 3.0]));
        let y0 = g.dropout(x, 0.0, Mode::Train, &mut rng).unwrap();
        assert_eq!(y0, x);
        let y1 = g.dropout(x, 0.7, Mode::Eval, &mut rng).unwrap();
        assert_eq!(y1, x);
    }

    #[test]
    fn dropout_rejects_bad_probability() {
        let g = Graph::new();
        let mut rng = RngStream::new(1, "drop");
        let x = g.constant(Tensor::row(vec![1.0]));
        assert!(g.dropout(x, 1.0, Mode::Train, &mut rng).is_err());
        assert!(g.dropout(x, -0.1, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn dropout_kept_fraction_and_replay() {
        let n = 100_000;
        let ones = vec![1.0; n];
        let run = |seed: u64| {
            let g = Graph::new();
            let mut rng = RngStream::new(seed, "dropmass");
            let x = g.constant(Tensor::row(ones.clone()));
            let y = g.dropout(x, 0.5, Mode::Train, &mut rng).unwrap();
            g.value(y).data().to_vec()
        };
        let a = run(7);
        let kept = a.iter().filter(|&&v| v != 0.0).count() as f64 / n as f64;
        assert!((kept - 0.5).abs() < 0.01, "kept {kept}");
        // survivors carry the 1/(1−p) scale
        assert!(a.iter().all(|&v| v == 0.0 || v == 2.0));
        let b = run(7);
        assert_eq!(a, b);
    }

    #[test]
    fn softmax_shift_invariance() {
        let g = Graph::new();
        let mut rng = RngStream::new(21, "shift");
        for _ in 0..100 {
            let base: Vec<f64> = (0..6).map(|_| rng.next_normal()).collect();
            let c = rng.next_normal() * 10.0;
            let shifted: Vec<f64> = base.iter().map(|v| v + c).collect();
            let a = g.softmax_rows(g.constant(Tensor::row(base)));
            let b = g.softmax_rows(g.constant(Tensor::row(shifted)));
            let (va, vb) = (g.value(a), g.value(b));
            let sum: f64 = va.data().iter().sum();
            assert!(close(sum, 1.0, 1e-12));
            for (x, y) in va.data().iter().zip(vb.data()) {
                assert!(close(*x, *y, 1e-12));
            }
        }
    }
}
