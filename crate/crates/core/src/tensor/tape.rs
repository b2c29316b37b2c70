use super::{Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Coarse operation category, used to select a backward rule for fault injection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    MatMul,
    Add,
    Sub,
    Mul,
    AddRow,
    Scale,
    Transpose,
    Softmax,
    LayerNorm,
    Relu,
    LeakyRelu,
    Sigmoid,
    ConcatCols,
    SliceCols,
    SliceRows,
    Bilinear,
    RowNormalize,
    KlRows,
    Sum,
    StopGradient,
}

pub(crate) enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Transpose(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Bilinear {
        x: Var,
        y: Var,
        w: Var,
        b: Var,
    },
    RowNormalize {
        x: Var,
        sums: Vec<f64>,
    },
    KlRows {
        p: Var,
        q: Var,
    },
    Sum(Var),
    StopGradient,
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::AddRow(..) => OpKind::AddRow,
            Op::Scale(..) => OpKind::Scale,
            Op::Transpose(..) => OpKind::Transpose,
            Op::Softmax(..) => OpKind::Softmax,
            Op::LayerNorm { .. } => OpKind::LayerNorm,
            Op::Relu(..) => OpKind::Relu,
            Op::LeakyRelu(..) => OpKind::LeakyRelu,
            Op::Sigmoid(..) => OpKind::Sigmoid,
            Op::ConcatCols(..) => OpKind::ConcatCols,
            Op::SliceCols(..) => OpKind::SliceCols,
            Op::SliceRows(..) => OpKind::SliceRows,
            Op::Bilinear { .. } => OpKind::Bilinear,
            Op::RowNormalize { .. } => OpKind::RowNormalize,
            Op::KlRows { .. } => OpKind::KlRows,
            Op::Sum(..) => OpKind::Sum,
            Op::StopGradient => OpKind::StopGradient,
        }
    }

    /// Inputs through which gradient can flow. A stop-gradient node has none.
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf | Op::StopGradient => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) => {
                vec![*a, *b]
            }
            Op::Scale(a, _)
            | Op::Transpose(a)
            | Op::Softmax(a)
            | Op::Relu(a)
            | Op::LeakyRelu(a, _)
            | Op::Sigmoid(a)
            | Op::SliceCols(a, _)
            | Op::SliceRows(a, _)
            | Op::Sum(a) => vec![*a],
            Op::LayerNorm { x, gain, bias, .. } => vec![*x, *gain, *bias],
            Op::ConcatCols(parts) => parts.clone(),
            Op::Bilinear { x, y, w, b } => vec![*x, *y, *w, *b],
            Op::RowNormalize { x, .. } => vec![*x],
            Op::KlRows { p, q } => vec![*p, *q],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records operations in execution order so gradients can be propagated in reverse.
///
/// Nodes are appended as operations run, so the node list is always in
/// topological order. Leaves created with [`Tape::param`] accumulate gradients
/// across [`Tape::backward`] calls until [`Tape::zero_grad`].
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Tensor>>,
    fault: Option<(OpKind, f64)>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_node(value, Op::Leaf, true)
    }

    /// Registers a leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_node(value, Op::Leaf, false)
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

    /// Accumulated gradient of a trainable leaf, present once a backward pass has run.
    pub fn grad(&self, var: Var) -> Option<&Tensor> {
        self.leaf_grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn zero_grad(&mut self) {
        for g in self.leaf_grads.iter_mut().flatten() {
            g.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Scales every gradient produced by backward rules of `kind` by `factor`.
    ///
    /// Only meant for negative-control tests of gradient checking.
    #[doc(hidden)]
    pub fn inject_fault(&mut self, kind: OpKind, factor: f64) {
        self.fault = Some((kind, factor));
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.push_node(value, op, requires_grad)
    }

    fn push_node(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.leaf_grads.push(None);
        Var(id)
    }

    /// Smallest `|x|` over the inputs of every ReLU and leaky ReLU on the tape,
    /// or infinity when there are none. Near zero, the graph is close to a kink.
    pub fn kink_margin(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(a) | Op::LeakyRelu(a, _) => Some(a),
                _ => None,
            })
            .flat_map(|a| self.nodes[a.0].value.data().iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min)
    }

    /// Propagates d`loss`/d(leaf) into every trainable leaf's gradient buffer.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward: loss must be a scalar, got shape {:?}",
                loss_value.shape()
            )));
        }

        for (node, grad) in self.nodes.iter().zip(self.leaf_grads.iter_mut()) {
            if matches!(node.op, Op::Leaf) && node.requires_grad && grad.is_none() {
                *grad = Some(Tensor::zeros(node.value.shape()));
            }
        }

        let mut adjoints: Vec<Option<Vec<f64>>> = Vec::with_capacity(loss.0 + 1);
        adjoints.resize_with(loss.0 + 1, || None);
        adjoints[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = adjoints[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                let buf = self.leaf_grads[idx]
                    .as_mut()
                    .expect("trainable leaf has a gradient buffer");
                for (acc, v) in buf.data_mut().iter_mut().zip(&g) {
                    *acc += v;
                }
                continue;
            }

            let mut contributions = self.local_gradients(idx, &g);
            if let Some((kind, factor)) = self.fault {
                if kind == node.op.kind() {
                    for (_, c) in contributions.iter_mut() {
                        c.iter_mut().for_each(|v| *v *= factor);
                    }
                }
            }
            for (input, contribution) in contributions {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut adjoints[input.0] {
                    Some(acc) => {
                        for (a, c) in acc.iter_mut().zip(&contribution) {
                            *a += c;
                        }
                    }
                    slot @ None => *slot = Some(contribution),
                }
            }
        }
        Ok(())
    }

    /// Gradient contributions of node `idx` to each of its inputs, given its output adjoint `g`.
    fn local_gradients(&self, idx: usize, g: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let node = &self.nodes[idx];
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf | Op::StopGradient => vec![],
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k) = (av.rows(), av.cols());
                let n = bv.cols();
                let (ad, bd) = (av.data(), bv.data());
                let mut out = Vec::new();
                if wants(*a) {
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += g[i * n + j] * bd[p * n + j];
                            }
                            da[i * k + p] = s;
                        }
                    }
                    out.push((*a, da));
                }
                if wants(*b) {
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let aip = ad[i * k + p];
                            let row = &mut db[p * n..(p + 1) * n];
                            for (d, gv) in row.iter_mut().zip(&g[i * n..(i + 1) * n]) {
                                *d += aip * gv;
                            }
                        }
                    }
                    out.push((*b, db));
                }
                out
            }
            Op::Add(a, b) => vec![(*a, g.to_vec()), (*b, g.to_vec())],
            Op::Sub(a, b) => vec![(*a, g.to_vec()), (*b, g.iter().map(|v| -v).collect())],
            Op::Mul(a, b) => {
                let (ad, bd) = (val(*a).data(), val(*b).data());
                vec![
                    (*a, g.iter().zip(bd).map(|(g, b)| g * b).collect()),
                    (*b, g.iter().zip(ad).map(|(g, a)| g * a).collect()),
                ]
            }
            Op::AddRow(a, r) => {
                let n = val(*r).len();
                let mut dr = vec![0.0; n];
                for row in g.chunks(n) {
                    for (d, v) in dr.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                vec![(*a, g.to_vec()), (*r, dr)]
            }
            Op::Scale(a, c) => vec![(*a, g.iter().map(|v| v * c).collect())],
            Op::Transpose(a) => {
                let (m, n) = (val(*a).rows(), val(*a).cols());
                let mut da = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        da[i * n + j] = g[j * m + i];
                    }
                }
                vec![(*a, da)]
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let n = node.value.cols();
                let mut da = vec![0.0; y.len()];
                for ((yr, gr), dr) in y.chunks(n).zip(g.chunks(n)).zip(da.chunks_mut(n)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    for ((d, y), g) in dr.iter_mut().zip(yr).zip(gr) {
                        *d = y * (g - dot);
                    }
                }
                vec![(*a, da)]
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let n = node.value.cols();
                let gd = val(*gain).data();
                let mut dx = vec![0.0; g.len()];
                let mut dgain = vec![0.0; n];
                let mut dbias = vec![0.0; n];
                let nf = n as f64;
                for (r, ((gr, hr), dr)) in g
                    .chunks(n)
                    .zip(xhat.chunks(n))
                    .zip(dx.chunks_mut(n))
                    .enumerate()
                {
                    let mut sum_dh = 0.0;
                    let mut sum_dh_h = 0.0;
                    for j in 0..n {
                        let dh = gr[j] * gd[j];
                        sum_dh += dh;
                        sum_dh_h += dh * hr[j];
                        dgain[j] += gr[j] * hr[j];
                        dbias[j] += gr[j];
                    }
                    let inv = inv_std[r];
                    for j in 0..n {
                        let dh = gr[j] * gd[j];
                        dr[j] = inv / nf * (nf * dh - sum_dh - hr[j] * sum_dh_h);
                    }
                }
                vec![(*x, dx), (*gain, dgain), (*bias, dbias)]
            }
            Op::Relu(a) => {
                let xd = val(*a).data();
                vec![(
                    *a,
                    g.iter()
                        .zip(xd)
                        .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                        .collect(),
                )]
            }
            Op::LeakyRelu(a, slope) => {
                let xd = val(*a).data();
                vec![(
                    *a,
                    g.iter()
                        .zip(xd)
                        .map(|(g, x)| if *x > 0.0 { *g } else { g * slope })
                        .collect(),
                )]
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                vec![(
                    *a,
                    g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect(),
                )]
            }
            Op::ConcatCols(parts) => {
                let m = node.value.rows();
                let total = node.value.cols();
                let mut out = Vec::with_capacity(parts.len());
                let mut offset = 0;
                for part in parts {
                    let w = val(*part).cols();
                    let mut dp = vec![0.0; m * w];
                    for i in 0..m {
                        dp[i * w..(i + 1) * w]
                            .copy_from_slice(&g[i * total + offset..i * total + offset + w]);
                    }
                    offset += w;
                    out.push((*part, dp));
                }
                out
            }
            Op::SliceCols(a, start) => {
                let (m, n) = (val(*a).rows(), val(*a).cols());
                let w = node.value.cols();
                let mut da = vec![0.0; m * n];
                for i in 0..m {
                    da[i * n + start..i * n + start + w].copy_from_slice(&g[i * w..(i + 1) * w]);
                }
                vec![(*a, da)]
            }
            Op::SliceRows(a, start) => {
                let n = val(*a).cols();
                let mut da = vec![0.0; val(*a).len()];
                da[start * n..start * n + g.len()].copy_from_slice(g);
                vec![(*a, da)]
            }
            Op::Bilinear { x, y, w, b } => {
                let (xv, yv, wv) = (val(*x), val(*y), val(*w));
                let (m, p) = (xv.rows(), xv.cols());
                let q = yv.cols();
                let k = wv.shape()[0];
                let (xd, yd, wd) = (xv.data(), yv.data(), wv.data());
                let mut dx = vec![0.0; m * p];
                let mut dy = vec![0.0; m * q];
                let mut dw = vec![0.0; k * p * q];
                let mut dbias = vec![0.0; k];
                for i in 0..m {
                    let xi = &xd[i * p..(i + 1) * p];
                    let yi = &yd[i * q..(i + 1) * q];
                    for j in 0..k {
                        let gij = g[i * k + j];
                        dbias[j] += gij;
                        if gij == 0.0 {
                            continue;
                        }
                        let wj = &wd[j * p * q..(j + 1) * p * q];
                        let dwj = &mut dw[j * p * q..(j + 1) * p * q];
                        for a in 0..p {
                            let wrow = &wj[a * q..(a + 1) * q];
                            let mut s = 0.0;
                            for (wv, yv) in wrow.iter().zip(yi) {
                                s += wv * yv;
                            }
                            dx[i * p + a] += gij * s;
                            let gx = gij * xi[a];
                            for c in 0..q {
                                dy[i * q + c] += gx * wrow[c];
                                dwj[a * q + c] += gx * yi[c];
                            }
                        }
                    }
                }
                vec![(*x, dx), (*y, dy), (*w, dw), (*b, dbias)]
            }
            Op::RowNormalize { x, sums } => {
                let y = node.value.data();
                let n = node.value.cols();
                let mut dx = vec![0.0; y.len()];
                for (r, ((yr, gr), dr)) in y
                    .chunks(n)
                    .zip(g.chunks(n))
                    .zip(dx.chunks_mut(n))
                    .enumerate()
                {
                    let s = sums[r];
                    if s > super::ops::ROW_SUM_EPS {
                        let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                        for (d, g) in dr.iter_mut().zip(gr) {
                            *d = (g - dot) / s;
                        }
                    } else {
                        for (d, g) in dr.iter_mut().zip(gr) {
                            *d = g / super::ops::ROW_SUM_EPS;
                        }
                    }
                }
                vec![(*x, dx)]
            }
            Op::KlRows { p, q } => {
                let eps = super::ops::LOG_EPS;
                let (pv, qv) = (val(*p), val(*q));
                let n = pv.cols();
                let mut dp = vec![0.0; pv.len()];
                let mut dq = vec![0.0; qv.len()];
                for (r, &gr) in g.iter().enumerate() {
                    for j in r * n..(r + 1) * n {
                        let (pj, qj) = (pv.data()[j], qv.data()[j]);
                        let (pc, qc) = (pj.max(eps), qj.max(eps));
                        let live_p = if pj > eps { pj / pc } else { 0.0 };
                        dp[j] = gr * (pc.ln() - qc.ln() + live_p);
                        dq[j] = if qj > eps { -gr * pj / qc } else { 0.0 };
                    }
                }
                vec![(*p, dp), (*q, dq)]
            }
            Op::Sum(a) => vec![(*a, vec![g[0]; val(*a).len()])],
        }
    }
}
